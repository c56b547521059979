from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from madsim.model import (
    AgentProfile,
    BackendConfig,
    BatchConfig,
    ConfigError,
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
    validate_batch_config,
)


class TestValidateBatchConfig:
    def test_control_batch(self):
        cfg = BatchConfig(iterations=162, toxicity=ToxicityLevel.NO, seed=7)
        assert validate_batch_config(cfg) is cfg

    def test_zero_iterations(self):
        with pytest.raises(ConfigError, match="iterations must be ≥ 1"):
            validate_batch_config(BatchConfig(iterations=0))

    def test_persuadability_range(self):
        with pytest.raises(ConfigError, match=r"persuadability outside \[0,1\]"):
            validate_batch_config(BatchConfig(iterations=1, persuadability=1.5))

    def test_collects_every_violation(self):
        bad = BatchConfig(iterations=0, max_arguments=1, n_agents=3, seed=-1,
                          backend=BackendConfig(kind="carrier-pigeon", temperature=-1))
        with pytest.raises(ConfigError) as err:
            validate_batch_config(bad)
        assert len(err.value.violations) == 6

    def test_refusal_rate_levels(self):
        cfg = BatchConfig(iterations=1, backend=BackendConfig(refusal_rate={"extreme": 0.1}))
        with pytest.raises(ConfigError, match="unknown toxicity level"):
            validate_batch_config(cfg)


class TestToxicityText:
    def test_table_text(self):
        assert ToxicityLevel.MILD.description == "Passive-aggressive, sarcastic, smug"
        assert ToxicityLevel.MILD.behaviour == "Belittles others indirectly, implies superiority"
        assert ToxicityLevel.MODERATE.description == "Condescending, belittling, rude"
        assert ToxicityLevel.MODERATE.behaviour == (
            "Dismisses others' arguments as idiotic or irrelevant, "
            "questions their intelligence or logic")
        assert ToxicityLevel.HEAVY.description == "Aggressive, hostile, cruel"
        assert ToxicityLevel.HEAVY.behaviour == (
            "Insults others, uses inflammatory language, shows contempt for opposing agents")

    def test_no_has_empty_instruction(self):
        assert ToxicityLevel.NO.instruction == ""

    def test_instruction_shape(self):
        assert ToxicityLevel.MILD.instruction == (
            "Behave in a passive-aggressive, sarcastic, smug manner: "
            "Belittles others indirectly, implies superiority.")


class TestDebaters:
    def test_two_pro_rejected(self, pro):
        other = AgentProfile(1, Stance.PRO, "d", "c")
        with pytest.raises(ConfigError, match="one pro and one con"):
            check_debaters([pro, other])

    def test_two_toxic_rejected(self):
        a = AgentProfile(0, Stance.PRO, "d", "c", toxicity=ToxicityLevel.MILD)
        b = AgentProfile(1, Stance.CON, "d", "c", toxicity=ToxicityLevel.HEAVY)
        with pytest.raises(ConfigError, match="at most one agent may be toxic"):
            check_debaters([a, b])

    def test_three_agents_rejected(self, pro, con):
        with pytest.raises(ConfigError, match="exactly 2"):
            check_debaters([pro, con, AgentProfile(2, Stance.CON, "d", "c")])

    def test_valid(self, pro, toxic_con):
        check_debaters([pro, toxic_con])

    def test_persuadability_range(self):
        with pytest.raises(ConfigError):
            AgentProfile(0, Stance.PRO, "d", "c", persuadability=-0.1)


def test_concession_content_is_token():
    with pytest.raises(ValueError):
        Turn(3, 0, TurnKind.CONCESSION, "I agree")


class TestOutcome:
    def test_failed_has_no_tconv(self):
        with pytest.raises(ValueError):
            Outcome(OutcomeStatus.FAILED, 4, "refusal")

    def test_failed_needs_reason(self):
        with pytest.raises(ValueError):
            Outcome(OutcomeStatus.FAILED)

    def test_converged_at_least_two(self):
        with pytest.raises(ValueError):
            Outcome(OutcomeStatus.CONVERGED_BY_MODERATOR, 1)


text = st.text(max_size=40)


@st.composite
def records(draw):
    level = draw(st.sampled_from(list(ToxicityLevel)))
    toxic_slot = draw(st.sampled_from([0, 1])) if level is not ToxicityLevel.NO else None
    agents = tuple(
        AgentProfile(i, Stance.PRO if i == 0 else Stance.CON, draw(text), draw(text),
                     draw(st.floats(0, 1)), level if i == toxic_slot else ToxicityLevel.NO)
        for i in range(2)
    )
    n = draw(st.integers(0, 12))
    turns = tuple(Turn(i, i % 2, draw(st.sampled_from([TurnKind.OPENING, TurnKind.ARGUMENT])),
                       draw(text)) for i in range(n))
    verdicts = tuple(ModeratorVerdict(k + 1, draw(st.sampled_from(list(DiscussionState))),
                                      draw(text)) for k in range(n // 2))
    status = draw(st.sampled_from(list(OutcomeStatus)))
    outcome = (Outcome(status, None, draw(text.filter(bool))) if status is OutcomeStatus.FAILED
               else Outcome(status, max(2, n)))
    return DebateRecord(
        master_seed=draw(st.integers(0, 2**64 - 1)),
        run_index=draw(st.integers(0, 10**6)),
        toxicity=level,
        topic=draw(st.one_of(st.none(), st.builds(
            Topic, st.just("t"), st.just("Culture"), text.filter(str.strip)))),
        agents=agents,
        turns=turns,
        verdicts=verdicts,
        outcome=outcome,
        backend_tag=draw(st.sampled_from(["synthetic", "http:gpt-4o-mini"])),
    )


@given(records())
def test_record_roundtrip(rec):
    line = rec.to_json()
    assert "\n" not in line
    assert DebateRecord.from_json(line) == rec


def test_record_field_names(pro, con, topic):
    rec = DebateRecord(7, 3, ToxicityLevel.NO, topic, (pro, con),
                       (Turn(0, 0, TurnKind.OPENING, "a"),), (),
                       Outcome(OutcomeStatus.FAILED, None, "x"), "synthetic")
    d = rec.to_dict()
    assert set(d) == {"run_id", "master_seed", "run_index", "toxicity", "topic", "agents",
                      "turns", "verdicts", "outcome", "backend_tag"}
    assert d["run_id"] == "0000000000000007-000003"
    assert set(d["agents"][0]) == {"agent_id", "stance", "description", "claim",
                                   "persuadability", "toxicity"}
    assert set(d["turns"][0]) == {"index", "agent_id", "kind", "content"}
    assert set(d["outcome"]) == {"status", "t_conv", "reason"}


def test_run_id_must_match(pro, con, topic):
    rec = DebateRecord(7, 3, ToxicityLevel.NO, topic, (pro, con), (), (),
                       Outcome(OutcomeStatus.FAILED, None, "x"), "synthetic")
    d = rec.to_dict()
    d["run_id"] = "bogus"
    with pytest.raises(ValueError):
        DebateRecord.from_dict(d)
