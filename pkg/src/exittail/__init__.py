"""Exit-time tails for reversible Markov chains.

Exact exit tails, spectral and decorrelation bounds, explicit example chains,
and a dynamical-percolation simulator.
"""

from importlib.metadata import PackageNotFoundError, version

from .bounds import exit_tail_exact, exit_tail_series, tmain_bound
from .chain_core import (
    ChainError,
    ChainParseError,
    EventSet,
    GeneratorChain,
    ReversibleChain,
    from_conductances,
    read_chain,
)
from .spectral import decorrelation_curve, spectrum

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0"

__all__ = [
    "ChainError",
    "ChainParseError",
    "EventSet",
    "GeneratorChain",
    "ReversibleChain",
    "decorrelation_curve",
    "exit_tail_exact",
    "exit_tail_series",
    "from_conductances",
    "read_chain",
    "spectrum",
    "tmain_bound",
    "__version__",
]
