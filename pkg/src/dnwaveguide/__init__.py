"""Mode matching for a planar waveguide whose Dirichlet and Neumann walls swap at x = 0."""

from .dispersion import ScatteringConfig, channels, n1_of, thresholds
from .errors import (
    GridTooSmall,
    NonConvergence,
    QuadratureUnderResolved,
    SolveFailed,
    ThresholdDegenerate,
    WaveguideError,
    WindowViolation,
)
from .matcher import TraceSolution, solve_matching, solve_matching_split
from .modes import Geometry, ModeBasis, chi, mu, overlap, overlap_matrix
from .observables import probabilities, scan

__all__ = [
    "Geometry", "ModeBasis", "ScatteringConfig", "TraceSolution",
    "channels", "chi", "mu", "n1_of", "overlap", "overlap_matrix", "probabilities",
    "scan", "solve_matching", "solve_matching_split", "thresholds",
    "WaveguideError", "ThresholdDegenerate", "WindowViolation", "SolveFailed",
    "NonConvergence", "QuadratureUnderResolved", "GridTooSmall",
]
