"""One debate, start to finish.

Layout of a debate::

    opening A, opening B                     (order drawn by the rng)
    moderator round 1
    first speaker, other speaker             (first speaker drawn per round)
    moderator round 2
    ...

A debate ends when an agent answers "convinced", when the moderator reports
agreement, when the argument count would exceed ``max_arguments``, or on a
refusal / unrecoverable error.  T_conv counts openings and arguments only.
"""

from __future__ import annotations

import logging
from dataclasses import replace

from .backends.base import BackendError, BackendErrorKind, Session
from .model import (
    CONVINCED,
    AgentProfile,
    DebateRecord,
    DiscussionState,
    ModeratorVerdict,
    Outcome,
    OutcomeStatus,
    Stance,
    Topic,
    ToxicityLevel,
    Turn,
    TurnKind,
    check_debaters,
)
from .prompts import (
    EMPTY_HISTORY,
    AgentAnswer,
    Argument,
    Convinced,
    MalformedReply,
    RefusalDetected,
    parse_agent_answer,
    parse_moderator_verdict,
    parse_personas,
    render_moderator_prompt,
    render_persona_prompt,
    render_turn_prompt,
)
from .rng import Rng

log = logging.getLogger(__name__)

N_AGENTS = 2
PARSE_RETRIES = 2


def generate_agents(session: Session, topic: Topic, rng: Rng,
                    toxicity: ToxicityLevel = ToxicityLevel.NO,
                    persuadability: float = 0.5) -> tuple[AgentProfile, AgentProfile]:
    """Ask for two personas, then draw the Pro agent and (if any) the toxic one."""
    prompt = render_persona_prompt(topic, N_AGENTS)
    personas = _with_retries(lambda: parse_personas(session.complete(prompt), N_AGENTS))
    pro = rng.below(N_AGENTS)
    toxic = rng.below(N_AGENTS) if toxicity is not ToxicityLevel.NO else None
    agents = tuple(
        AgentProfile(
            agent_id=p.agent_id,
            stance=Stance.PRO if i == pro else Stance.CON,
            description=p.description,
            claim=p.claim,
            persuadability=persuadability,
            toxicity=toxicity if i == toxic else ToxicityLevel.NO,
        )
        for i, p in enumerate(personas)
    )
    check_debaters(agents)
    return agents


def _with_retries(call):
    for attempt in range(PARSE_RETRIES + 1):
        try:
            return call()
        except MalformedReply as exc:
            if attempt == PARSE_RETRIES:
                raise
            log.debug("malformed reply (%s), retrying", exc)


def history_text(turns, verdicts, agents) -> str:
    """Chronological transcript fed back into every prompt.

    Verdict k always follows the 2k-th turn: openings plus k-1 full rounds.
    """
    if not turns and not verdicts:
        return EMPTY_HISTORY
    tags = {a.agent_id: a.tag for a in agents}
    by_position = {2 * v.round: v for v in verdicts}
    lines = []
    for n, turn in enumerate(turns, start=1):
        lines.append(f"[{tags.get(turn.agent_id, turn.agent_id)}]: {turn.content}")
        v = by_position.pop(n, None)
        if v is not None:
            lines.append(_verdict_line(v))
    lines.extend(_verdict_line(v) for v in by_position.values())
    return "\n".join(lines)


def _verdict_line(v: ModeratorVerdict) -> str:
    line = f"[Moderator, round {v.round}]: agents are in {v.state.value}"
    return f"{line}. Reason: {v.reason}" if v.reason else line


def transcript_text(record: DebateRecord) -> str:
    return history_text(record.turns, record.verdicts, record.agents)


class _Debate:
    def __init__(self, session: Session, topic: Topic, agents, rng: Rng, max_arguments: int):
        self.session = session
        self.topic = topic
        self.agents = tuple(agents)
        self.rng = rng
        self.max_arguments = max_arguments
        self.turns: list[Turn] = []
        self.verdicts: list[ModeratorVerdict] = []
        self.t_conv = 0
        self.speaker: AgentProfile | None = None

    def history(self) -> str:
        return history_text(self.turns, self.verdicts, self.agents)

    def ask(self, agent: AgentProfile, history: str, opening: bool = False) -> AgentAnswer:
        self.speaker = agent
        prompt = render_turn_prompt(agent, self.topic, history, N_AGENTS)

        def attempt():
            answer = parse_agent_answer(self.session.complete(prompt))
            if opening and isinstance(answer, Convinced):
                raise MalformedReply("an opening statement cannot be a concession")
            return answer

        return _with_retries(attempt)

    def add(self, agent: AgentProfile, kind: TurnKind, content: str) -> None:
        self.turns.append(Turn(len(self.turns), agent.agent_id, kind, content))
        if kind in (TurnKind.OPENING, TurnKind.ARGUMENT):
            self.t_conv += 1

    def moderate(self, nround: int) -> ModeratorVerdict:
        self.speaker = None
        prompt = render_moderator_prompt(self.topic, N_AGENTS, nround, self.history())
        verdict = _with_retries(
            lambda: parse_moderator_verdict(self.session.complete(prompt), nround))
        verdict = replace(verdict, round=nround)
        self.verdicts.append(verdict)
        return verdict

    def run(self) -> Outcome:
        first = self.rng.below(N_AGENTS)
        openers = (self.agents[first], self.agents[1 - first])
        for agent in openers:
            answer = self.ask(agent, EMPTY_HISTORY, opening=True)
            self.add(agent, TurnKind.OPENING, answer.text)

        nround = 1
        while True:
            if self.moderate(nround).state is DiscussionState.AGREEMENT:
                return Outcome(OutcomeStatus.CONVERGED_BY_MODERATOR, self.t_conv)
            first = self.rng.below(N_AGENTS)
            for agent in (self.agents[first], self.agents[1 - first]):
                if self.t_conv >= self.max_arguments:
                    return Outcome(OutcomeStatus.MAX_ROUNDS_EXCEEDED, self.t_conv,
                                   f"reached {self.max_arguments} arguments")
                answer = self.ask(agent, self.history())
                if isinstance(answer, Convinced):
                    self.add(agent, TurnKind.CONCESSION, CONVINCED)
                    return Outcome(OutcomeStatus.CONVERGED_BY_CONCESSION, self.t_conv)
                assert isinstance(answer, Argument)
                self.add(agent, TurnKind.ARGUMENT, answer.text)
            nround += 1


def run_debate(session: Session, topic: Topic, agents, rng: Rng,
               max_arguments: int = 50, *, master_seed: int = 0, run_index: int = 0,
               toxicity: ToxicityLevel | None = None, backend_tag: str = "") -> DebateRecord:
    """Play one debate; failures end up in the record's outcome, never raised."""
    check_debaters(agents)
    if max_arguments < 2:
        raise ValueError("max_arguments must be ≥ 2")
    if toxicity is None:
        toxicity = max((a.toxicity for a in agents), key=lambda t: t.order)
    debate = _Debate(session, topic, agents, rng, max_arguments)
    try:
        outcome = debate.run()
    except (RefusalDetected, BackendError) as exc:
        refused = isinstance(exc, RefusalDetected) or exc.kind is BackendErrorKind.REFUSAL
        if refused and debate.speaker is not None:
            detail = getattr(exc, "detail", None) or str(exc) or "refused"
            debate.turns.append(
                Turn(len(debate.turns), debate.speaker.agent_id, TurnKind.REFUSAL, detail))
        outcome = Outcome(OutcomeStatus.FAILED, None,
                          f"refusal: {exc}" if refused else f"backend error: {exc}")
    except MalformedReply as exc:
        outcome = Outcome(OutcomeStatus.FAILED, None, f"malformed reply: {exc}")
    return DebateRecord(
        master_seed=master_seed,
        run_index=run_index,
        toxicity=toxicity,
        topic=topic,
        agents=tuple(agents),
        turns=tuple(debate.turns),
        verdicts=tuple(debate.verdicts),
        outcome=outcome,
        backend_tag=backend_tag,
    )
