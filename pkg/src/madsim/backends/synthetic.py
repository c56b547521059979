"""Offline stand-in for the debating LLMs.

A session decides its debate length once, up front: the target number of
arguments is a normal draw rounded to the nearest integer and floored at 2,
with mean and variance per toxicity level.  The defaults are the per-group
moments observed in the live experiments (no: 9.40 / 7.84, mild:
11.30 / 8.27, moderate: 11.75 / 8.94).  Modelling the length directly keeps
the variance near 8; a per-turn concession hazard with mean 9.4 would give
a variance around 70.

After that the session just plays along with whatever the engine asks.
Agents produce placeholder arguments until the target is reached and then
answer "convinced".  The moderator reports disagreement until the target
is reached and agreement from then on.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field

from ..model import ToxicityLevel
from ..prompts import PromptKind, classify_prompt, format_agent_answer, Argument, Convinced
from ..rng import Rng, mix
from .base import BackendError, BackendErrorKind

SESSION_STREAM = 0x5E55
MIN_LENGTH = 2

DEFAULT_MEAN = {
    ToxicityLevel.NO: 9.40,
    ToxicityLevel.MILD: 11.30,
    ToxicityLevel.MODERATE: 11.75,
    ToxicityLevel.HEAVY: 11.75,
}
DEFAULT_VARIANCE = {
    ToxicityLevel.NO: 7.84,
    ToxicityLevel.MILD: 8.27,
    ToxicityLevel.MODERATE: 8.94,
    ToxicityLevel.HEAVY: 8.94,
}
DEFAULT_REFUSAL = {
    ToxicityLevel.NO: 0.0,
    ToxicityLevel.MILD: 0.0,
    ToxicityLevel.MODERATE: 0.0,
    ToxicityLevel.HEAVY: 0.5,
}

REFUSAL_TEXT = "I'm sorry, but I can't help with producing insulting or hostile content."

_PERSONAS = [
    ("A retired schoolteacher who has watched policy fads come and go.",
     "Practical consequences for ordinary families matter more than principle."),
    ("A public-health researcher who trusts data over anecdote.",
     "The measurable outcomes point clearly in one direction."),
    ("A small-business owner from a rural town.",
     "Rules written in capitals rarely fit how people actually live."),
    ("A human-rights lawyer with two decades of casework.",
     "Individual liberty has to be weighed against protection of the vulnerable."),
    ("A university student active in campus politics.",
     "Younger generations will bear the long-term costs of this decision."),
    ("An economist who advises municipal governments.",
     "The incentives this creates outweigh its stated intentions."),
    ("A community organiser working with migrant families.",
     "Those with the least power feel the effects first."),
    ("A philosopher specialising in applied ethics.",
     "The moral question cannot be reduced to a cost-benefit table."),
]

_POINTS = [
    "the evidence from comparable cases",
    "the long-term social costs",
    "who actually bears the burden",
    "the precedent this would set",
    "how enforcement would work in practice",
    "the rights of those affected",
    "the unintended consequences",
    "the historical record",
]


@dataclass(frozen=True)
class SyntheticParams:
    mean: dict[ToxicityLevel, float] = field(default_factory=lambda: dict(DEFAULT_MEAN))
    variance: dict[ToxicityLevel, float] = field(default_factory=lambda: dict(DEFAULT_VARIANCE))
    refusal: dict[ToxicityLevel, float] = field(default_factory=lambda: dict(DEFAULT_REFUSAL))

    def __post_init__(self):
        for level in ToxicityLevel:
            if self.mean[level] < MIN_LENGTH:
                raise ValueError(f"mean length for {level.value} must be ≥ {MIN_LENGTH}")
            if self.variance[level] <= 0:
                raise ValueError(f"variance for {level.value} must be > 0")
            if not 0.0 <= self.refusal[level] <= 1.0:
                raise ValueError(f"refusal probability for {level.value} outside [0,1]")

    def with_overrides(self, mean=None, variance=None, refusal=None) -> SyntheticParams:
        return SyntheticParams(
            mean={**self.mean, **(mean or {})},
            variance={**self.variance, **(variance or {})},
            refusal={**self.refusal, **(refusal or {})},
        )


def draw_length(rng: Rng, mean: float, variance: float) -> int:
    """max(2, round(Normal(mean, variance))), rounding halves up."""
    x = rng.normal(mean, math.sqrt(variance))
    return max(MIN_LENGTH, math.floor(x + 0.5))


class SyntheticSession:
    def __init__(self, run_seed: int, toxicity: ToxicityLevel = ToxicityLevel.NO,
                 params: SyntheticParams | None = None, *, length: int | None = None,
                 refuse: bool | None = None):
        params = params or SyntheticParams()
        self.toxicity = toxicity
        self._rng = Rng(mix(run_seed, SESSION_STREAM))
        drawn = draw_length(self._rng, params.mean[toxicity], params.variance[toxicity])
        self.length = drawn if length is None else max(MIN_LENGTH, length)
        drawn_refusal = self._rng.bernoulli(params.refusal[toxicity])
        self.refuse = drawn_refusal if refuse is None else refuse
        self.arguments = 0
        self.requests = 0

    def complete(self, prompt: str) -> str:
        self.requests += 1
        kind = classify_prompt(prompt)
        if kind is PromptKind.PERSONA_GENERATION:
            return self._personas(prompt)
        if kind is PromptKind.MODERATOR_CHECK:
            return self._moderate(prompt)
        if kind is PromptKind.TOXIC_AGENT_TURN and self.refuse:
            raise BackendError(BackendErrorKind.REFUSAL, REFUSAL_TEXT)
        return self._argue(prompt)

    def _personas(self, prompt: str) -> str:
        m = re.search(r"pool of (\d+) debate agents", prompt)
        number = int(m.group(1)) if m else 2
        picks = list(range(len(_PERSONAS)))
        lines = ["Here are the personas:", "```json"]
        for i in range(number):
            j = picks.pop(self._rng.below(len(picks)))
            desc, claim = _PERSONAS[j]
            lines.append(json.dumps({"agent_id": i, "description": desc, "claim": claim}))
        lines.append("```")
        return "\n".join(lines)

    def _argue(self, prompt: str) -> str:
        if self.arguments >= self.length:
            return format_agent_answer(Convinced())
        self.arguments += 1
        m = re.search(r"You are an agent '([^']+)'", prompt)
        who = m.group(1) if m else "agent"
        point = self._rng.choice(_POINTS)
        return format_agent_answer(
            Argument(f"Argument {self.arguments} from {who}: consider {point}.")
        )

    def _moderate(self, prompt: str) -> str:
        m = re.search(r"\((\d+) rounds of arguments so far\)", prompt)
        nround = int(m.group(1)) if m else 0
        agreed = self.arguments >= self.length
        return json.dumps({
            "round": nround,
            "state of discussion":
                "agents are in agreement" if agreed else "agents are in disagreement",
            "reason": "Both sides now accept the same position." if agreed
            else "Each agent still defends its own stance.",
        })


class SyntheticBackend:
    tag = "synthetic"

    def __init__(self, params: SyntheticParams | None = None):
        self.params = params or SyntheticParams()

    def open_session(self, run_seed: int, toxicity: ToxicityLevel) -> SyntheticSession:
        return SyntheticSession(run_seed, toxicity, self.params)


def open_synthetic_session(run_seed: int, toxicity: ToxicityLevel = ToxicityLevel.NO,
                           params: SyntheticParams | None = None) -> SyntheticSession:
    return SyntheticSession(run_seed, toxicity, params)
