from __future__ import annotations

from pathlib import Path

import pytest

from madsim.model import AgentProfile, Stance, Topic, ToxicityLevel

GOLDEN = Path(__file__).parent / "golden"


def golden(name: str) -> str:
    text = (GOLDEN / f"{name}.txt").read_text("utf-8")
    return text[:-1] if text.endswith("\n") else text


@pytest.fixture
def topic() -> Topic:
    return Topic("culture-07", "Culture", "We should ban gambling")


@pytest.fixture
def pro() -> AgentProfile:
    return AgentProfile(0, Stance.PRO, "A retired nurse from Leeds.", "Gambling ruins families.")


@pytest.fixture
def con() -> AgentProfile:
    return AgentProfile(1, Stance.CON, "A libertarian blogger.", "Adults may spend as they like.")


@pytest.fixture
def toxic_con(con) -> AgentProfile:
    return AgentProfile(con.agent_id, con.stance, con.description, con.claim,
                        toxicity=ToxicityLevel.MILD)
