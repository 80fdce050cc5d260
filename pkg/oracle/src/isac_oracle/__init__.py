"""SDP ground-truth validator for the ISAC beamforming solver."""

from .compare import compare_solutions
from .sdp import OracleResult, sensing_matrices, solve_direct_sdp, solve_gdb_sdp

__version__ = "0.1.0"

__all__ = [
    "OracleResult",
    "compare_solutions",
    "sensing_matrices",
    "solve_direct_sdp",
    "solve_gdb_sdp",
]
