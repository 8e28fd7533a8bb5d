"""Off-policy compatible policy gradients: zeroth-order action-space policy
gradients for actor-critic learning, with analytic LQR checks."""

__version__ = "0.1.0"

from .agent import Agent, AgentConfig, train  # noqa: E402,F401
from .errors import (  # noqa: E402,F401
    ConfigurationError, ContractError, EstimationError, OcpgError,
    TrainingDivergenceError, UnstablePolicyError, UsageError, VerificationFailure,
)
from .nn import MLP, AdamState, adam_step  # noqa: E402,F401
from .zeroth_order import cpg_batch_gradient, two_point_grad  # noqa: E402,F401
