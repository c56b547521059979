"""Monte Carlo simulation of 1-on-1 LLM debates with controlled toxicity injection."""

from .model import (
    AgentProfile,
    BatchConfig,
    DebateRecord,
    Stance,
    Topic,
    ToxicityLevel,
    validate_batch_config,
)
from .runner import BatchResult, read_log, resume_batch, run_batch
from .stats import analyze, group_stats, welch_test
from .topics import load_topics

__version__ = "0.1.0"

__all__ = [
    "AgentProfile", "BatchConfig", "BatchResult", "DebateRecord", "Stance", "Topic",
    "ToxicityLevel", "analyze", "group_stats", "load_topics", "read_log", "resume_batch",
    "run_batch", "validate_batch_config", "welch_test",
]
