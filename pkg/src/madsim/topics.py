from __future__ import annotations

import re
from collections import Counter
from importlib import resources
from pathlib import Path

from .model import ConfigError, Topic


def _slug(text: str) -> str:
    return re.sub(r"[^a-z0-9]+", "-", text.lower()).strip("-")


def parse_topics(text: str, source: str = "<topics>") -> list[Topic]:
    """Parse ``domain|proposition`` lines; ``#`` comments and blank lines are skipped."""
    topics = []
    per_domain: Counter[str] = Counter()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        domain, sep, proposition = line.partition("|")
        domain, proposition = domain.strip(), proposition.strip()
        if not sep or not domain or not proposition:
            raise ConfigError(f"{source}:{lineno}: expected 'domain|proposition', got {raw!r}")
        per_domain[domain] += 1
        topics.append(Topic(f"{_slug(domain)}-{per_domain[domain]:02d}", domain, proposition))
    if not topics:
        raise ConfigError(f"{source}: no topics found")
    return topics


def load_topics(path: str | Path | None = None) -> list[Topic]:
    """Load a topic pool; ``None`` loads the bundled 64-topic pool."""
    if path is None:
        text = resources.files("madsim.data").joinpath("topics.psv").read_text("utf-8")
        return parse_topics(text, "topics.psv")
    path = Path(path)
    return parse_topics(path.read_text("utf-8"), str(path))


def domain_counts(topics: list[Topic]) -> dict[str, int]:
    """Topics per domain, in order of first appearance."""
    return dict(Counter(t.domain for t in topics))
