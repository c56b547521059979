"""Prompt templates and reply parsing.

The four templates live in ``templates/*.txt`` verbatim, using
``{placeholder}`` fields and ``{{``/``}}`` for literal braces.  Rendering is
a single regex pass, so substituted values are never re-expanded.

Replies are parsed by extraction rather than strict document parsing:
models wrap their JSON in prose or code fences, swap quote styles, and the
moderator template itself contains the malformed key ``"round'``.
"""

from __future__ import annotations

import enum
import json
import re
import string
from dataclasses import dataclass
from functools import cache
from importlib import resources

from .model import CONVINCED, AgentProfile, DiscussionState, ModeratorVerdict, Topic

EMPTY_HISTORY = "(no arguments yet)"
HISTORY_HEADER = "## Discussion history:"

DEFAULT_REFUSAL_MARKERS = (
    "i can't help with",
    "i cannot help with",
    "i can’t help with",
    "i'm sorry, but i can't",
    "i am sorry, but i cannot",
    "i won't be able to",
    "i will not engage",
    "i'm not able to comply",
)


class MalformedReply(ValueError):
    """The reply does not contain the structure the prompt asked for."""


class RefusalDetected(Exception):
    """The model declined to answer."""


class UnclassifiablePrompt(ValueError):
    pass


class PromptKind(enum.Enum):
    PERSONA_GENERATION = "persona"
    AGENT_TURN = "agent"
    TOXIC_AGENT_TURN = "toxic_agent"
    MODERATOR_CHECK = "moderator"


# Kind-specific phrases taken from each template's header (checked in order).
_MARKERS = (
    (PromptKind.PERSONA_GENERATION, "You want to create a pool of"),
    (PromptKind.MODERATOR_CHECK, "You are moderating a discussion of"),
    (PromptKind.TOXIC_AGENT_TURN, "**System instruction:"),
    (PromptKind.AGENT_TURN, "you need to find the next argument"),
)


@cache
def template(kind: PromptKind) -> str:
    text = resources.files("madsim.templates").joinpath(f"{kind.value}.txt").read_text("utf-8")
    return text[:-1] if text.endswith("\n") else text


_FIELD = re.compile(r"\{\{|\}\}|\{([^{}]+)\}")


def fill(tmpl: str, values: dict[str, object]) -> str:
    """Substitute ``{name}`` fields; ``{{`` and ``}}`` become literal braces."""

    def sub(m: re.Match) -> str:
        tok = m.group(0)
        if tok == "{{":
            return "{"
        if tok == "}}":
            return "}"
        name = m.group(1)
        if name not in values:
            raise KeyError(f"no value for template field {name!r}")
        return str(values[name])

    return _FIELD.sub(sub, tmpl)


def classify_prompt(prompt: str) -> PromptKind:
    """Infer which template produced ``prompt`` from its header text."""
    head = prompt.split(HISTORY_HEADER, 1)[0]
    for kind, marker in _MARKERS:
        if marker in head:
            return kind
    raise UnclassifiablePrompt(f"no template marker found in prompt: {head[:80]!r}")


def persuadability_word(score: float) -> str:
    if not 0.0 <= score <= 1.0:
        raise ValueError(f"persuadability {score} outside [0,1]")
    if score < 1 / 3:
        return "low"
    if score <= 2 / 3:
        return "moderate"
    return "high"


def render_persona_prompt(topic: Topic, number: int = 2) -> str:
    if number < 2:
        raise ValueError("a debate needs at least 2 agents")
    return fill(template(PromptKind.PERSONA_GENERATION),
                {"proposition": topic.proposition, "number": number})


def _agent_fields(agent: AgentProfile, topic: Topic, history: str, n_agents: int) -> dict:
    return {
        "proposition": topic.proposition,
        "agent_dict['procon']": agent.stance.tag,
        "agent_dict['agent_id']": agent.agent_id,
        "nagents": n_agents,
        "procon_string": agent.stance.phrase,
        "claim": agent.claim,
        "description": agent.description,
        "persuadability": agent.persuadability,
        "persuadability_dict[persuadability]": persuadability_word(agent.persuadability),
        "toxicity_dict[toxicity_level]": agent.toxicity.instruction,
        "discussion_history": history or EMPTY_HISTORY,
    }


def render_agent_prompt(agent: AgentProfile, topic: Topic, history: str = "",
                        n_agents: int = 2) -> str:
    if agent.is_toxic:
        raise ValueError(f"agent {agent.tag} is toxic; use render_toxic_prompt")
    return fill(template(PromptKind.AGENT_TURN),
                _agent_fields(agent, topic, history, n_agents))


def render_toxic_prompt(agent: AgentProfile, topic: Topic, history: str = "",
                        n_agents: int = 2) -> str:
    if not agent.is_toxic:
        raise ValueError(f"agent {agent.tag} is not toxic; use render_agent_prompt")
    return fill(template(PromptKind.TOXIC_AGENT_TURN),
                _agent_fields(agent, topic, history, n_agents))


def render_turn_prompt(agent: AgentProfile, topic: Topic, history: str = "",
                       n_agents: int = 2) -> str:
    render = render_toxic_prompt if agent.is_toxic else render_agent_prompt
    return render(agent, topic, history, n_agents)


def render_moderator_prompt(topic: Topic, n_agents: int, nround: int, history: str = "") -> str:
    if nround < 1:
        raise ValueError("the moderator is consulted only after a completed round")
    return fill(template(PromptKind.MODERATOR_CHECK), {
        "proposition": topic.proposition,
        "nagents": n_agents,
        "nround": nround,
        "discussion_history": history or EMPTY_HISTORY,
    })


# -- reply extraction -------------------------------------------------------

_DECODER = json.JSONDecoder()


def json_objects(text: str) -> list[dict]:
    """Every well-formed JSON object embedded anywhere in ``text``, in order."""
    found = []
    i = text.find("{")
    while i != -1:
        try:
            obj, end = _DECODER.raw_decode(text, i)
        except ValueError:
            i = text.find("{", i + 1)
            continue
        if isinstance(obj, dict):
            found.append(obj)
        i = text.find("{", end)
    return found


def _read_value(text: str, pos: int) -> tuple[object, int] | None:
    """Read a loosely-quoted scalar starting at ``pos``."""
    while pos < len(text) and text[pos] in " \t":
        pos += 1
    if pos >= len(text):
        return None
    q = text[pos]
    if q == '"':
        try:
            return _DECODER.raw_decode(text, pos)
        except ValueError:
            end = text.find('"', pos + 1)
            return (text[pos + 1:end], end + 1) if end != -1 else None
    if q == "'":
        out = []
        j = pos + 1
        while j < len(text):
            c = text[j]
            if c == "\\" and j + 1 < len(text):
                out.append(text[j + 1])
                j += 2
                continue
            if c == "'":
                return "".join(out), j + 1
            out.append(c)
            j += 1
        return None
    m = re.match(r"[^,}\n]+", text[pos:])
    if not m:
        return None
    raw = m.group(0).strip()
    try:
        return json.loads(raw), pos + m.end()
    except ValueError:
        return raw, pos + m.end()


def loose_field(text: str, key: str) -> object | None:
    """Find ``key: value`` with any quoting of the key (including mismatched)."""
    pattern = r"""["']?""" + re.escape(key).replace(r"\ ", r"[ _]") + r"""["']?\s*:"""
    for m in re.finditer(pattern, text, flags=re.IGNORECASE):
        got = _read_value(text, m.end())
        if got is not None:
            return got[0]
    return None


@dataclass(frozen=True)
class Persona:
    agent_id: int
    description: str
    claim: str


def parse_personas(reply: str, expected: int = 2) -> list[Persona]:
    """Extract ``expected`` persona objects; ids are renumbered 0..expected-1."""
    text = reply
    objs = [o for o in json_objects(text) if "description" in o and "claim" in o]
    if not objs:
        # one persona per line, tolerating single quotes
        for line in text.splitlines():
            desc, claim = loose_field(line, "description"), loose_field(line, "claim")
            if desc is not None and claim is not None:
                objs.append({"description": desc, "claim": claim})
    if len(objs) != expected:
        raise MalformedReply(f"expected {expected} personas, found {len(objs)}")
    personas = []
    for i, o in enumerate(objs):
        desc, claim = str(o["description"]).strip(), str(o["claim"]).strip()
        if not desc or not claim:
            raise MalformedReply(f"persona {i} has an empty description or claim")
        personas.append(Persona(i, desc, claim))
    return personas


@dataclass(frozen=True)
class Argument:
    text: str

    def __post_init__(self):
        if not self.text or is_convinced(self.text):
            raise ValueError("an argument must be non-empty and not the convinced token")


@dataclass(frozen=True)
class Convinced:
    pass


AgentAnswer = Argument | Convinced

_TRIM = string.whitespace + string.punctuation + "“”‘’«»"


def is_convinced(value: str) -> bool:
    return value.strip(_TRIM).lower() == CONVINCED


def detect_refusal(reply: str, markers: tuple[str, ...] = DEFAULT_REFUSAL_MARKERS) -> bool:
    low = reply.lower()
    return any(m in low for m in markers)


def parse_agent_answer(reply: str,
                       refusal_markers: tuple[str, ...] = DEFAULT_REFUSAL_MARKERS) -> AgentAnswer:
    if detect_refusal(reply, refusal_markers):
        raise RefusalDetected(reply.strip()[:200])
    value = None
    for obj in json_objects(reply):
        if "next_answer" in obj:
            value = obj["next_answer"]
            break
    if value is None:
        value = loose_field(reply, "next_answer")
    if value is None:
        raise MalformedReply("no next_answer in reply")
    if not isinstance(value, str):
        value = json.dumps(value)
    if is_convinced(value):
        return Convinced()
    if not value.strip():
        raise MalformedReply("next_answer is empty")
    return Argument(value)


def format_agent_answer(answer: AgentAnswer) -> str:
    text = CONVINCED if isinstance(answer, Convinced) else answer.text
    return json.dumps({"next_answer": text}, ensure_ascii=False)


def parse_moderator_verdict(reply: str, nround: int) -> ModeratorVerdict:
    """Agreement iff the state value mentions agreement but not disagreement."""
    state = reason = None
    rnd: object = None
    for obj in json_objects(reply):
        keys = {k.strip("'\" ").lower().replace("_", " "): v for k, v in obj.items()}
        if "state of discussion" in keys:
            state = keys["state of discussion"]
            reason = keys.get("reason")
            rnd = keys.get("round")
            break
    if state is None:
        state = loose_field(reply, "state of discussion")
        reason = loose_field(reply, "reason")
        rnd = loose_field(reply, "round")
    if not isinstance(state, str) or not state.strip():
        raise MalformedReply("no state of discussion in moderator reply")
    low = state.lower()
    agreed = "agreement" in low and "disagreement" not in low
    try:
        rnd = int(rnd) if rnd is not None else nround
    except (TypeError, ValueError):
        rnd = nround
    return ModeratorVerdict(
        round=rnd,
        state=DiscussionState.AGREEMENT if agreed else DiscussionState.DISAGREEMENT,
        reason="" if reason is None else str(reason),
    )
