"""Desk-scale laboratory for single-trace coefficient recovery experiments.

Subpackages cover grid/operator assembly, spectral calculus, parabolic and
elliptic forward solvers, exponential-sum mode separation, reachable-region
computation, Carleman weight audits, decay-condition checks, and a
deterministic experiment runner with a CLI (``tracelab --help``).
"""

from ._kernels import backend_name

__version__ = "0.1.0"

__all__ = ["backend_name", "__version__"]
