"""Monte Carlo batches: N independent debates per condition.

Run ``i`` of a batch depends only on ``(seed, i)``: its generator is seeded
with ``mix(seed, i)``, which picks the topic, stances, toxic agent and
speaking order, and the synthetic backend derives its own stream from the
same run seed.  Workers therefore share nothing, and a single writer
thread appends finished records to the JSON-lines log in run-index order,
so serial, parallel and resumed batches all produce the same file.
"""

from __future__ import annotations

import logging
import os
import queue
import sys
import threading
from collections.abc import Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from pathlib import Path

from .backends.base import Backend, BackendError, GenerationParams
from .backends.synthetic import SyntheticBackend, SyntheticParams
from .engine import generate_agents, run_debate
from .model import (
    BatchConfig,
    ConfigError,
    DebateRecord,
    Outcome,
    OutcomeStatus,
    Topic,
    ToxicityLevel,
    validate_batch_config,
)
from .prompts import MalformedReply, RefusalDetected
from .rng import Rng, mix
from .topics import load_topics

log = logging.getLogger(__name__)


class LogMismatch(ValueError):
    """An existing run log does not belong to the requested batch."""


@dataclass
class BatchResult:
    config: BatchConfig
    records: list[DebateRecord] = field(default_factory=list)
    new_runs: int = 0

    @property
    def valid(self) -> list[DebateRecord]:
        return [r for r in self.records if r.outcome.status.converged]

    @property
    def failed(self) -> list[DebateRecord]:
        return [r for r in self.records if r.outcome.status is OutcomeStatus.FAILED]

    @property
    def capped(self) -> list[DebateRecord]:
        return [r for r in self.records
                if r.outcome.status is OutcomeStatus.MAX_ROUNDS_EXCEEDED]

    def summary(self) -> str:
        return (f"{self.config.toxicity.value}: {len(self.records)} runs "
                f"({self.new_runs} new) - {len(self.valid)} valid, "
                f"{len(self.failed)} failed, {len(self.capped)} capped")


def make_backend(cfg: BatchConfig) -> Backend:
    b = cfg.backend
    if b.kind == "synthetic":
        refusal = {ToxicityLevel(k): v for k, v in b.refusal_rate.items()}
        return SyntheticBackend(SyntheticParams().with_overrides(refusal=refusal))
    from .backends.http import ChatClient, HttpBackend

    params = GenerationParams(model=b.model, temperature=b.temperature,
                              max_tokens=b.max_tokens, timeout=b.timeout,
                              max_attempts=b.max_attempts, backoff_base=b.backoff_base)
    return HttpBackend(ChatClient(b.base_url, params, api_key_env=b.api_key_env,
                                  max_in_flight=b.max_in_flight))


def simulate_run(cfg: BatchConfig, run_index: int, topics: Sequence[Topic],
                 backend: Backend) -> DebateRecord:
    run_seed = mix(cfg.seed, run_index)
    rng = Rng(run_seed)
    topic = rng.choice(topics)
    session = backend.open_session(run_seed, cfg.toxicity)
    common = dict(master_seed=cfg.seed, run_index=run_index, toxicity=cfg.toxicity,
                  backend_tag=backend.tag)
    try:
        agents = generate_agents(session, topic, rng, cfg.toxicity, cfg.persuadability)
    except (MalformedReply, RefusalDetected, BackendError) as exc:
        return DebateRecord(topic=topic, agents=(), turns=(), verdicts=(),
                            outcome=Outcome(OutcomeStatus.FAILED, None,
                                            f"persona generation: {exc}"),
                            **common)
    return run_debate(session, topic, agents, rng, cfg.max_arguments, **common)


def read_log(path: str | Path, repair: bool = False) -> list[DebateRecord]:
    """Load a run log.

    A torn final line (an interrupted write) is dropped, and with
    ``repair=True`` also cut from the file.  Corruption anywhere else raises.
    """
    path = Path(path)
    if not path.exists():
        return []
    data = path.read_bytes()
    lines = data.split(b"\n")
    records = []
    good_bytes = 0
    for i, line in enumerate(lines):
        if not line.strip():
            good_bytes += len(line) + 1
            continue
        try:
            records.append(DebateRecord.from_json(line.decode("utf-8")))
        except (ValueError, KeyError, TypeError) as exc:
            is_last = i == len(lines) - 1
            if not is_last:
                raise ValueError(f"{path}:{i + 1}: corrupt record: {exc}") from exc
            log.warning("%s: dropping torn final line", path)
            if repair:
                with open(path, "r+b") as fh:
                    fh.truncate(good_bytes)
            break
        good_bytes += len(line) + 1
    return records


def _check_log(cfg: BatchConfig, records: Iterable[DebateRecord]) -> None:
    seen = set()
    for r in records:
        if r.master_seed != cfg.seed:
            raise LogMismatch(f"log was written with seed {r.master_seed}, config has {cfg.seed}")
        if r.toxicity is not cfg.toxicity:
            raise LogMismatch(f"log holds {r.toxicity.value} runs, config asks for "
                              f"{cfg.toxicity.value}")
        if r.run_index >= cfg.iterations:
            raise LogMismatch(f"log has run {r.run_index}, beyond {cfg.iterations} iterations")
        if r.run_index in seen:
            raise LogMismatch(f"log has run {r.run_index} twice")
        seen.add(r.run_index)


class _Writer(threading.Thread):
    """Single appender; buffers out-of-order records and writes in ``order``."""

    def __init__(self, path: Path, order: list[int]):
        super().__init__(name="runlog-writer", daemon=True)
        self.path = path
        self.order = order
        self.inbox: queue.Queue[DebateRecord | None] = queue.Queue()
        self.error: BaseException | None = None

    def run(self) -> None:
        pending: dict[int, DebateRecord] = {}
        pos = 0
        try:
            with open(self.path, "a", encoding="utf-8", newline="\n") as fh:
                while pos < len(self.order):
                    rec = self.inbox.get()
                    if rec is None:
                        return
                    pending[rec.run_index] = rec
                    while pos < len(self.order) and self.order[pos] in pending:
                        fh.write(pending.pop(self.order[pos]).to_json() + "\n")
                        fh.flush()
                        pos += 1
        except BaseException as exc:  # surfaced by the caller after join()
            self.error = exc


def _canonicalize(path: Path, records: list[DebateRecord]) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(r.to_json() + "\n")
    os.replace(tmp, path)


def _execute(cfg: BatchConfig, existing: list[DebateRecord], *, backend: Backend | None,
             topics: Sequence[Topic] | None, order: Sequence[int] | None,
             progress: bool) -> BatchResult:
    validate_batch_config(cfg)
    _check_log(cfg, existing)
    topics = list(topics) if topics is not None else load_topics(cfg.topics_path)
    backend = backend or make_backend(cfg)
    done = {r.run_index for r in existing}
    todo = [i for i in range(cfg.iterations) if i not in done]
    if order is not None:
        if sorted(order) != list(range(cfg.iterations)):
            raise ValueError("order must be a permutation of the run indices")
        todo = [i for i in order if i not in done]

    records = {r.run_index: r for r in existing}
    writer = _Writer(cfg.out, sorted(todo)) if cfg.out is not None and todo else None
    if writer:
        cfg.out.parent.mkdir(parents=True, exist_ok=True)
        writer.start()
    workers = cfg.workers or os.cpu_count() or 1
    try:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(simulate_run, cfg, i, topics, backend) for i in todo]
            for n, fut in enumerate(as_completed(futures), start=1):
                rec = fut.result()
                records[rec.run_index] = rec
                if writer:
                    if writer.error:
                        raise writer.error
                    writer.inbox.put(rec)
                if progress and (n % 50 == 0 or n == len(todo)):
                    print(f"[{cfg.toxicity.value}] {n}/{len(todo)} runs", file=sys.stderr)
    finally:
        if writer:
            writer.inbox.put(None)
            writer.join()
    if writer and writer.error:
        raise writer.error

    ordered = [records[i] for i in sorted(records)]
    if cfg.out is not None and existing and todo:
        on_disk = [r.run_index for r in read_log(cfg.out)]
        if on_disk != sorted(on_disk):
            _canonicalize(cfg.out, ordered)
    return BatchResult(cfg, ordered, new_runs=len(todo))


def run_batch(cfg: BatchConfig, *, backend: Backend | None = None,
              topics: Sequence[Topic] | None = None, order: Sequence[int] | None = None,
              progress: bool = False) -> BatchResult:
    """Run every index of a fresh batch; refuses to overwrite a non-empty log."""
    if cfg.out is not None and cfg.out.exists() and cfg.out.stat().st_size > 0:
        raise FileExistsError(f"{cfg.out} already exists; resume it instead")
    return _execute(cfg, [], backend=backend, topics=topics, order=order, progress=progress)


def resume_batch(cfg: BatchConfig, log_path: str | Path | None = None, *,
                 backend: Backend | None = None, topics: Sequence[Topic] | None = None,
                 order: Sequence[int] | None = None, progress: bool = False) -> BatchResult:
    """Finish a batch whose log already holds some runs."""
    path = Path(log_path) if log_path is not None else cfg.out
    if path is None:
        raise ConfigError("resume needs a log path")
    if cfg.out is None or Path(cfg.out) != path:
        cfg = replace(cfg, out=path)
    existing = read_log(path, repair=True)
    return _execute(cfg, existing, backend=backend, topics=topics, order=order,
                    progress=progress)
