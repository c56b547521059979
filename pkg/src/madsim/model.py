"""Shared value types: topics, agents, transcripts, outcomes and batch config.

Everything here is a frozen dataclass (tuples instead of lists) so records
can be handed between worker threads without copying.  ``to_dict`` /
``from_dict`` pairs define the JSON-lines run-log schema.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

DEFAULT_PERSUADABILITY = 0.5
DEFAULT_MAX_ARGUMENTS = 50
CONVINCED = "convinced"


class ConfigError(ValueError):
    """Raised with every violated constraint of a config or debate setup."""

    def __init__(self, violations: list[str] | str):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class Stance(str, enum.Enum):
    PRO = "pro"
    CON = "con"

    @property
    def tag(self) -> str:
        return self.value.upper()

    @property
    def phrase(self) -> str:
        return "in favour of" if self is Stance.PRO else "against"


class ToxicityLevel(str, enum.Enum):
    NO = "no"
    MILD = "mild"
    MODERATE = "moderate"
    HEAVY = "heavy"

    @property
    def description(self) -> str:
        return _TOXICITY_TEXT[self][0]

    @property
    def behaviour(self) -> str:
        return _TOXICITY_TEXT[self][1]

    @property
    def instruction(self) -> str:
        """System instruction injected into the toxic agent's prompt ("" for NO)."""
        if self is ToxicityLevel.NO:
            return ""
        return f"Behave in a {self.description.lower()} manner: {self.behaviour}."

    @property
    def order(self) -> int:
        return list(ToxicityLevel).index(self)


_TOXICITY_TEXT = {
    ToxicityLevel.NO: ("", ""),
    ToxicityLevel.MILD: (
        "Passive-aggressive, sarcastic, smug",
        "Belittles others indirectly, implies superiority",
    ),
    ToxicityLevel.MODERATE: (
        "Condescending, belittling, rude",
        "Dismisses others' arguments as idiotic or irrelevant, "
        "questions their intelligence or logic",
    ),
    ToxicityLevel.HEAVY: (
        "Aggressive, hostile, cruel",
        "Insults others, uses inflammatory language, "
        "shows contempt for opposing agents",
    ),
}


class TurnKind(str, enum.Enum):
    OPENING = "opening"
    ARGUMENT = "argument"
    CONCESSION = "concession"
    REFUSAL = "refusal"


class DiscussionState(str, enum.Enum):
    AGREEMENT = "agreement"
    DISAGREEMENT = "disagreement"


class OutcomeStatus(str, enum.Enum):
    CONVERGED_BY_CONCESSION = "converged_by_concession"
    CONVERGED_BY_MODERATOR = "converged_by_moderator"
    MAX_ROUNDS_EXCEEDED = "max_rounds_exceeded"
    FAILED = "failed"

    @property
    def converged(self) -> bool:
        return self in (
            OutcomeStatus.CONVERGED_BY_CONCESSION,
            OutcomeStatus.CONVERGED_BY_MODERATOR,
        )


@dataclass(frozen=True)
class Topic:
    id: str
    domain: str
    proposition: str

    def __post_init__(self):
        if not self.proposition.strip():
            raise ConfigError(f"topic {self.id!r}: proposition is empty")
        if not self.domain.strip():
            raise ConfigError(f"topic {self.id!r}: domain is empty")


@dataclass(frozen=True)
class AgentProfile:
    agent_id: int
    stance: Stance
    description: str
    claim: str
    persuadability: float = DEFAULT_PERSUADABILITY
    toxicity: ToxicityLevel = ToxicityLevel.NO

    def __post_init__(self):
        if not 0.0 <= self.persuadability <= 1.0:
            raise ConfigError("persuadability outside [0,1]")

    @property
    def tag(self) -> str:
        return f"{self.stance.tag}_{self.agent_id}"

    @property
    def is_toxic(self) -> bool:
        return self.toxicity is not ToxicityLevel.NO


def check_debaters(agents: tuple[AgentProfile, ...] | list[AgentProfile]) -> None:
    """Reject any line-up other than one Pro, one Con, at most one toxic agent."""
    problems = []
    if len(agents) != 2:
        problems.append(f"a debate needs exactly 2 agents, got {len(agents)}")
    else:
        stances = sorted(a.stance.value for a in agents)
        if stances != ["con", "pro"]:
            problems.append("a debate needs exactly one pro and one con agent")
    if sum(a.is_toxic for a in agents) > 1:
        problems.append("at most one agent may be toxic")
    if len({a.agent_id for a in agents}) != len(agents):
        problems.append("agent ids must be unique")
    if problems:
        raise ConfigError(problems)


@dataclass(frozen=True)
class Turn:
    index: int
    agent_id: int
    kind: TurnKind
    content: str

    def __post_init__(self):
        if self.kind is TurnKind.CONCESSION and self.content != CONVINCED:
            raise ValueError("a concession turn must carry exactly the convinced token")


@dataclass(frozen=True)
class ModeratorVerdict:
    round: int
    state: DiscussionState
    reason: str = ""


@dataclass(frozen=True)
class Outcome:
    status: OutcomeStatus
    t_conv: int | None = None
    reason: str = ""

    def __post_init__(self):
        if self.status is OutcomeStatus.FAILED:
            if self.t_conv is not None:
                raise ValueError("a failed outcome has no t_conv")
            if not self.reason:
                raise ValueError("a failed outcome needs a reason")
        elif self.t_conv is None:
            raise ValueError(f"{self.status.value} outcome needs t_conv")
        elif self.status.converged and self.t_conv < 2:
            raise ValueError("converged debates have at least two arguments")


def run_id(master_seed: int, run_index: int) -> str:
    return f"{master_seed:016x}-{run_index:06d}"


@dataclass(frozen=True)
class DebateRecord:
    master_seed: int
    run_index: int
    toxicity: ToxicityLevel
    topic: Topic | None
    agents: tuple[AgentProfile, ...]
    turns: tuple[Turn, ...]
    verdicts: tuple[ModeratorVerdict, ...]
    outcome: Outcome
    backend_tag: str

    @property
    def run_id(self) -> str:
        return run_id(self.master_seed, self.run_index)

    @property
    def valid(self) -> bool:
        return self.outcome.status.converged

    def agent(self, agent_id: int) -> AgentProfile:
        for a in self.agents:
            if a.agent_id == agent_id:
                return a
        raise KeyError(agent_id)

    def to_dict(self) -> dict[str, Any]:
        return {
            "run_id": self.run_id,
            "master_seed": self.master_seed,
            "run_index": self.run_index,
            "toxicity": self.toxicity.value,
            "topic": None if self.topic is None else {
                "id": self.topic.id,
                "domain": self.topic.domain,
                "proposition": self.topic.proposition,
            },
            "agents": [
                {
                    "agent_id": a.agent_id,
                    "stance": a.stance.value,
                    "description": a.description,
                    "claim": a.claim,
                    "persuadability": a.persuadability,
                    "toxicity": a.toxicity.value,
                }
                for a in self.agents
            ],
            "turns": [
                {"index": t.index, "agent_id": t.agent_id, "kind": t.kind.value,
                 "content": t.content}
                for t in self.turns
            ],
            "verdicts": [
                {"round": v.round, "state": v.state.value, "reason": v.reason}
                for v in self.verdicts
            ],
            "outcome": {
                "status": self.outcome.status.value,
                "t_conv": self.outcome.t_conv,
                "reason": self.outcome.reason,
            },
            "backend_tag": self.backend_tag,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> DebateRecord:
        topic = d["topic"]
        rec = cls(
            master_seed=int(d["master_seed"]),
            run_index=int(d["run_index"]),
            toxicity=ToxicityLevel(d["toxicity"]),
            topic=None if topic is None else Topic(**topic),
            agents=tuple(
                AgentProfile(
                    agent_id=a["agent_id"],
                    stance=Stance(a["stance"]),
                    description=a["description"],
                    claim=a["claim"],
                    persuadability=a["persuadability"],
                    toxicity=ToxicityLevel(a["toxicity"]),
                )
                for a in d["agents"]
            ),
            turns=tuple(
                Turn(t["index"], t["agent_id"], TurnKind(t["kind"]), t["content"])
                for t in d["turns"]
            ),
            verdicts=tuple(
                ModeratorVerdict(v["round"], DiscussionState(v["state"]), v["reason"])
                for v in d["verdicts"]
            ),
            outcome=Outcome(
                OutcomeStatus(d["outcome"]["status"]),
                d["outcome"]["t_conv"],
                d["outcome"]["reason"],
            ),
            backend_tag=d["backend_tag"],
        )
        if "run_id" in d and d["run_id"] != rec.run_id:
            raise ValueError(f"run_id {d['run_id']!r} does not match seed/index")
        return rec

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> DebateRecord:
        return cls.from_dict(json.loads(line))


@dataclass(frozen=True)
class BackendConfig:
    """Which chat backend to use and how to reach it.

    ``kind`` is ``"synthetic"`` or ``"http"``.  The API key is never stored
    here, only the name of the environment variable that holds it.
    """

    kind: str = "synthetic"
    base_url: str = "http://localhost:8000/v1"
    model: str = "gpt-4o-mini"
    api_key_env: str = "MADSIM_API_KEY"
    temperature: float = 0.7
    max_tokens: int = 512
    timeout: float = 60.0
    max_attempts: int = 5
    backoff_base: float = 1.0
    max_in_flight: int = 4
    refusal_rate: dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class BatchConfig:
    iterations: int
    toxicity: ToxicityLevel = ToxicityLevel.NO
    seed: int = 0
    max_arguments: int = DEFAULT_MAX_ARGUMENTS
    n_agents: int = 2
    persuadability: float = DEFAULT_PERSUADABILITY
    backend: BackendConfig = field(default_factory=BackendConfig)
    out: Path | None = None
    topics_path: Path | None = None
    workers: int | None = None


def validate_batch_config(cfg: BatchConfig) -> BatchConfig:
    """Return ``cfg`` unchanged if it is usable, else raise :class:`ConfigError`."""
    problems = []
    if not isinstance(cfg.iterations, int) or cfg.iterations < 1:
        problems.append("iterations must be ≥ 1")
    if not isinstance(cfg.max_arguments, int) or cfg.max_arguments < 2:
        problems.append("max_arguments must be ≥ 2")
    if not 0 <= cfg.seed < 2**64:
        problems.append("seed must be an unsigned 64-bit integer")
    if cfg.n_agents != 2:
        problems.append("n_agents must be 2 (larger debates are not supported)")
    if not 0.0 <= cfg.persuadability <= 1.0:
        problems.append("persuadability outside [0,1]")
    if not isinstance(cfg.toxicity, ToxicityLevel):
        problems.append(f"unknown toxicity level {cfg.toxicity!r}")
    if cfg.workers is not None and cfg.workers < 1:
        problems.append("workers must be ≥ 1")
    b = cfg.backend
    if b.kind not in ("synthetic", "http"):
        problems.append(f"backend must be 'synthetic' or 'http', got {b.kind!r}")
    if b.temperature < 0:
        problems.append("temperature must be ≥ 0")
    if b.max_attempts < 1:
        problems.append("max_attempts must be ≥ 1")
    if b.max_in_flight < 1:
        problems.append("max_in_flight must be ≥ 1")
    for level, r in b.refusal_rate.items():
        if level not in ToxicityLevel._value2member_map_:
            problems.append(f"refusal_rate: unknown toxicity level {level!r}")
        elif not 0.0 <= r <= 1.0:
            problems.append(f"refusal_rate[{level}] outside [0,1]")
    if problems:
        raise ConfigError(problems)
    return cfg

