"""Control-enhanced sequential strategies for quantum channel estimation.

Maximizes the quantum Fisher information over input states and interleaved
quantum controls for N sequential queries to a parametrized noisy channel,
using an O(N d^4) tensor-chain contraction and alternating convex /
variational updates.
"""

from .channels import (
    ChannelError,
    ChoiOperator,
    ParamChannel,
    choi_from_kraus,
    get_preset,
    mix_with_depolarizing,
    signal_unitary,
)
from .optimize import (
    OptimizationReport,
    RunSettings,
    Strategy,
    run,
    warm_start_extend,
)
from .qfi import qfi_from_state, qfi_single_channel_opt, sld

__version__ = "0.1.0"

__all__ = [
    "ChannelError",
    "ChoiOperator",
    "OptimizationReport",
    "ParamChannel",
    "RunSettings",
    "Strategy",
    "choi_from_kraus",
    "get_preset",
    "mix_with_depolarizing",
    "qfi_from_state",
    "qfi_single_channel_opt",
    "run",
    "signal_unitary",
    "sld",
    "warm_start_extend",
]
