"""Multi-agent debate distilled into a decomposer-solver student."""

from .agents import DEFAULT_ROSTER, AgentResponse, Persona, build_prompt, extract_answer, respond
from .backends import HttpBackend, MockBackend
from .data import ABSTAIN, QuestionRecord, SplitSpec, load_mmlu, load_strategyqa, split
from .debate import (
    AgentWeights,
    DebateConfig,
    DebateTranscript,
    calibrate,
    check_consensus,
    optimize_weights,
    run_debate,
    weighted_vote,
)
from .graph import InteractionGraph, build_graph, deserialize, serialize
from .harness import accuracy, compare_mas_sas, exact_match
from .losses import LossBundle, LossCoefficients, total_loss

__version__ = "0.1.0"
