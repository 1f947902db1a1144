"""Exception types raised by the samplers and oracles."""


class DomainError(ValueError):
    """An argument lies outside the domain of an operation."""


class InvalidPolicyError(ValueError):
    """A uniformization rate does not dominate the leave rates."""


class InconsistentEvidenceError(RuntimeError):
    """No state sequence is compatible with the likelihood terms.

    ``step`` is the HMM slot at which the forward message vanished; ``node``
    is filled in by the CTBN sampler.
    """

    def __init__(self, step, node=None, message=None):
        self.step = step
        self.node = node
        if message is None:
            where = f"slot {step}" if node is None else f"node {node}, slot {step}"
            message = f"observations have zero likelihood at {where}"
        super().__init__(message)


class GridCollisionError(RuntimeError):
    """Two event times of an auxiliary grid coincide exactly."""


class RejectionBudgetError(RuntimeError):
    """Rejection sampling exhausted its attempt cap."""


class UndefinedMetricError(ValueError):
    """A metric has no admissible terms (e.g. an all-zero truth vector)."""


class ConfigError(ValueError):
    """An experiment or model configuration failed validation."""


class BudgetExceededError(RuntimeError):
    """An experiment hit its iteration or time budget before its target."""
