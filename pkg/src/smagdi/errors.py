"""Exception types shared across the pipeline."""

from __future__ import annotations


class SmagdiError(Exception):
    """Base class for all package errors."""


class ContractError(SmagdiError, ValueError):
    """An operation was called with arguments violating its precondition."""


class ValidationError(SmagdiError, ValueError):
    """Input data failed validation."""


class SchemaError(ValidationError):
    """A serialized document does not match the expected schema.

    ``path`` is a JSONPath-style pointer (``$.edges[3].kind``) to the offending field.
    """

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class BackendError(SmagdiError):
    """Transport-level failure talking to a response backend."""


class AgentCallError(SmagdiError):
    """A persona's generation call failed. Safe to retry."""

    retryable = True

    def __init__(self, agent_id: str, round: int, cause: BaseException | None = None):
        super().__init__(f"agent {agent_id} failed in round {round}: {cause}")
        self.agent_id = agent_id
        self.round = round
        self.cause = cause


class DebateError(SmagdiError):
    """A debate aborted. Rerun the same question to resume."""

    resumable = True

    def __init__(self, question_id: str, round: int, cause: BaseException | None = None):
        super().__init__(f"debate for {question_id} aborted in round {round}: {cause}")
        self.question_id = question_id
        self.round = round
        self.cause = cause


class UnresolvableVoteError(SmagdiError):
    """Every agent abstained, so no label can be chosen."""


class UndefinedLossError(SmagdiError, ValueError):
    """A loss was requested over an empty set of supervised positions."""


class NonFiniteLossError(SmagdiError, ArithmeticError):
    def __init__(self, component: str, value: float):
        super().__init__(f"loss component {component!r} is not finite ({value})")
        self.component = component
        self.value = value


class TrainingDivergedError(SmagdiError):
    """Total loss became NaN; ``checkpoint`` points at the last good state."""

    def __init__(self, epoch: int, step: int, checkpoint, history: dict):
        super().__init__(f"training diverged at epoch {epoch}, step {step}")
        self.epoch = epoch
        self.step = step
        self.checkpoint = checkpoint
        self.history = history
