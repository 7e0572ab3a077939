"""Linear time-invariant building blocks and the block-diagram simulator."""

from .network import (
    Event,
    LinearBlock,
    Network,
    NonlinearBlock,
    StaticBlock,
    StepContext,
    gain_block,
    simulate_network,
    step_input,
    sum_block,
)
from .rational import (
    Polynomial,
    RationalTransfer,
    feedback_connect,
    is_hurwitz,
    poles,
    poly_gcd,
    tf_arith,
    zeros,
)
from .realization import StateSpaceModel, check_realization, to_state_space
from .trace import SimTrace, StepMetrics, first_entry_time, step_metrics

s = RationalTransfer.s()

__all__ = [
    "Event", "LinearBlock", "Network", "NonlinearBlock", "StaticBlock", "StepContext",
    "gain_block", "simulate_network", "step_input", "sum_block",
    "Polynomial", "RationalTransfer", "feedback_connect", "is_hurwitz", "poles",
    "poly_gcd", "tf_arith", "zeros",
    "StateSpaceModel", "check_realization", "to_state_space",
    "SimTrace", "StepMetrics", "first_entry_time", "step_metrics", "s",
]
