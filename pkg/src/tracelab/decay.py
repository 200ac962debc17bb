"""Initial-data smoothness conditions and the per-mode bound chain.

Smoothness of the initial value is quantified by weighted sums of squared
cluster-projection norms, with weights ``exp(theta(lambda_k))``. Three
condition families matter: the superlinear family (exponent strictly above
two thirds, the critical threshold), the linear family, and the square-root
family. At desk scale all sums are finite numbers, so summability is read
as a decay trend: the log of the weighted terms must slope downward over
the top half of the spectrum.

The bound chain combines the audited boundary-Carleman constant with a
discrete trace constant to bound every second-operator projection norm by
the corresponding first-operator one times ``lambda^2 exp(C1 lambda^{2/3})``,
then checks that the square-root-weighted sum of the bounded quantities
still trends down. Both sides of the implication are computed directly;
nothing is assumed.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .grids import BoundaryMask, _fmt, face_of_nodes
from .spectral import SpectralDecomposition, mode_norms, project

CRITICAL_EXPONENT = 2.0 / 3.0
NOISE_REL = 1e-13  # projection coefficients below this (relative) are rounding noise


@dataclass(frozen=True)
class ThetaSpec:
    """Weight exponent ``theta(eta) = scale * eta**power``."""

    power: float
    scale: float = 1.0

    def __call__(self, eta):
        return self.scale * np.asarray(eta, dtype=float) ** self.power

    def label(self) -> str:
        return f"{self.scale:g}*eta^{self.power:g}"


# condition ids: "superlinear" needs theta above the critical exponent;
# "linear" is theta = sigma * eta; "sqrt" is theta = sigma1 * sqrt(eta)
CONDITIONS = ("superlinear", "linear", "sqrt")


@dataclass(frozen=True)
class DecayReport:
    condition: str
    theta: ThetaSpec
    weighted_terms: NDArray[np.float64]
    partial_sums: NDArray[np.float64]
    total: float
    trend_slope: float
    superlinear_ok: bool
    verdict: bool


@dataclass(frozen=True)
class ModeBoundRow:
    eigenvalue: float
    first_norm_sq: float     # ||P_k a||^2
    second_norm_sq: float    # ||Q_k a||^2
    s_k: float
    bound: float             # C lambda^2 exp(C1 lambda^(2/3)) ||P_k a||^2
    holds: bool


@dataclass(frozen=True)
class ImplicationReport:
    rows: tuple[ModeBoundRow, ...]
    constant: float          # C of the per-mode bound
    c1: float                # 2 s* max_obs(psi)
    c2: float                # envelope constant
    s_star: float
    obs_weight_max: float
    weighted_sum_direct: float    # sum exp(sigma1 sqrt(lam)) ||Q_k a||^2
    weighted_sum_bound: float     # same sum with the bound in place of ||Q||^2
    trend_slope: float            # of the direct weighted terms
    all_bounds_hold: bool
    verdict: bool


def superlinearity_proxy(theta: ThetaSpec, eta_max: float) -> bool:
    """Divergence test for theta/eta^(2/3): the ratio must increase over a
    log grid (up to 1e3 times the spectral radius) with a positive log-log
    slope at the top; a bounded ratio flattens and fails."""
    grid = np.geomspace(1.0, max(eta_max, 10.0) * 1e3, 64)
    ratio = theta(grid) / grid**CRITICAL_EXPONENT
    if not np.all(np.diff(ratio) > 0):
        return False
    top = slice(grid.size // 2, None)
    slope = np.polyfit(np.log(grid[top]), np.log(ratio[top]), 1)[0]
    return bool(slope > 1e-9)


def trend_slope(terms: NDArray, floor: float = 0.0) -> float:
    """Log-linear slope of the weighted terms over the top half of the
    resolved modes (entries above the floor; zeros and noise are not data).

    Identically-zero tails count as decay (slope -inf)."""
    terms = np.asarray(terms, dtype=float)
    idx = np.nonzero(terms > floor)[0]
    if idx.size < 2:
        return -np.inf
    top = idx[idx.size // 2:]
    if top.size < 2:
        top = idx[-2:]
    return float(np.polyfit(top, np.log(terms[top]), 1)[0])


def _log_terms(theta: ThetaSpec, eigenvalues: NDArray,
               norms_sq: NDArray) -> NDArray:
    with np.errstate(divide="ignore"):
        return theta(eigenvalues) + np.log(norms_sq)


def check_condition(norms_sq: NDArray, eigenvalues: NDArray, theta: ThetaSpec,
                    condition: str, noise_floor_sq: float = 0.0) -> DecayReport:
    """Weighted-sum report for one condition family.

    For the superlinear family an exponent at or below the critical two
    thirds is rejected outright. The verdict combines the family's
    admissibility, finiteness of the weighted sum, and a negative
    decay-trend slope of the weighted terms. Projection norms at or below
    ``noise_floor_sq`` are treated as unresolved (they are rounding noise of
    the projection, not data) and excluded from both sum and trend.
    """
    norms_sq = np.asarray(norms_sq, dtype=float)
    eigenvalues = np.asarray(eigenvalues, dtype=float)
    if norms_sq.shape != eigenvalues.shape:
        raise ValueError("per-cluster norms and eigenvalues differ in length")
    if np.any(np.diff(eigenvalues) < 0):
        raise ValueError("eigenvalues must be ascending")
    if condition not in CONDITIONS:
        raise ValueError(f"unknown condition {condition!r}")
    if condition == "superlinear" and theta.power <= CRITICAL_EXPONENT:
        raise ValueError(
            f"exponent {theta.power:g} is not admissible: the critical "
            f"exponent is {CRITICAL_EXPONENT:g} and must be exceeded")
    resolved = norms_sq > noise_floor_sq
    log_terms = _log_terms(theta, eigenvalues, norms_sq)
    with np.errstate(over="ignore"):
        terms = np.where(resolved, np.exp(log_terms), 0.0)
    superlinear_ok = (condition != "superlinear"
                      or superlinearity_proxy(theta, float(eigenvalues.max())))
    slope = trend_slope(terms)
    finite = bool(np.all(np.isfinite(terms)))
    # a sequence that terminates inside the spectrum (zero tail) is summable
    # outright; only a live tail must trend downward
    nz = np.nonzero(terms > 0.0)[0]
    terminated = nz.size == 0 or nz[-1] < terms.size - 1
    verdict = superlinear_ok and finite and (terminated or slope < 0.0)
    return DecayReport(
        condition=condition, theta=theta, weighted_terms=terms,
        partial_sums=np.cumsum(terms), total=float(terms.sum()),
        trend_slope=slope, superlinear_ok=superlinear_ok, verdict=verdict,
    )


def construct_initial_data(dec: SpectralDecomposition, theta: ThetaSpec,
                           seed: int, margin: float = 1.0) -> NDArray[np.float64]:
    """Initial value passing the decay condition for ``theta`` by design.

    Per cluster k the first basis vector enters with coefficient
    ``exp(-(theta(lam_k) + margin lam_k^(2/3)) / 2)`` times a seeded uniform
    draw from [0.5, 1], so the weighted terms decay like
    ``exp(-margin lam_k^(2/3))`` with strictly positive cluster content.
    """
    rng = np.random.default_rng(seed)
    draws = 0.5 + 0.5 * rng.random(dec.num_clusters)
    a = np.zeros(dec.eigenvectors.shape[0])
    for k, (rep, members) in enumerate(dec.clusters):
        exponent = -(float(theta(rep)) + margin * rep**CRITICAL_EXPONENT) / 2.0
        coeff = np.exp(exponent) * draws[k]
        a += coeff * dec.eigenvectors[:, members[0]]
    return a


def boundary_h1_norm_sq(field: NDArray, observation: BoundaryMask) -> float:
    """Discrete H1 norm on the observation set: node values plus tangential
    differences, trapezoid weights (a point value in 1D)."""
    grid = observation.grid
    idx = observation.as_array()
    vals = np.asarray(field, dtype=float)[idx]
    if grid.dim == 1:
        return float(vals @ vals)
    try:
        _, face_axis, _ = face_of_nodes(grid, idx)
        axis = 1 - face_axis
    except ValueError:
        axis = 0
    h = grid.spacing[axis]
    w = np.full(vals.size, h)
    w[[0, -1]] *= 0.5
    tang = np.gradient(vals, h)
    return float(np.sum(w * (vals**2 + tang**2)))


def trace_constant(dec: SpectralDecomposition, a: NDArray,
                   observation: BoundaryMask) -> float:
    """Discrete surrogate of the trace/elliptic-regularity constant: the
    worst ratio of the boundary H1 norm of a cluster projection to
    ``(lambda + 1) ||P_k a||`` over clusters with nonzero content."""
    norms_sq = mode_norms(dec, a)
    reps = dec.cluster_eigenvalues()
    worst = 0.0
    for k in range(dec.num_clusters):
        if norms_sq[k] <= 1e-300:
            continue
        pk = project(dec, k, a)
        h1 = np.sqrt(boundary_h1_norm_sq(pk, observation))
        worst = max(worst, h1 / ((reps[k] + 1.0) * np.sqrt(norms_sq[k])))
    return worst


def envelope_constant(c1: float, sigma1: float, eta_max: float) -> float:
    """Smallest constant C2 (within 1%) with
    ``eta^2 exp(c1 eta^(2/3) + sigma1 sqrt(eta)) <= C2 exp(C2 eta^(2/3))``
    on a log grid up to the spectral radius, verified after the search."""
    grid = np.geomspace(1.0, max(eta_max, 10.0), 256)

    def holds(c2):
        lhs = 2.0 * np.log(grid) + c1 * grid**CRITICAL_EXPONENT + sigma1 * np.sqrt(grid)
        rhs = np.log(c2) + c2 * grid**CRITICAL_EXPONENT
        return bool(np.all(lhs <= rhs))

    hi = max(c1 + sigma1 + 1.0, 2.0)
    while not holds(hi):
        hi *= 2.0
        if hi > 1e12:
            raise RuntimeError("envelope constant search diverged")
    lo = 0.0
    while hi - lo > 0.01 * hi:
        mid = 0.5 * (lo + hi)
        if mid > 0 and holds(mid):
            hi = mid
        else:
            lo = mid
    return hi


def verify_implication(dec_first: SpectralDecomposition,
                       dec_second: SpectralDecomposition, a: NDArray,
                       audit_constant: float, s_star: float,
                       obs_weight_max: float, observation: BoundaryMask,
                       sigma1: float = 1.0) -> ImplicationReport:
    """Per-mode bound chain with audited constants, tested on both sides.

    Requires matched spectra (the mode-comparison step upstream); the
    second-operator projection norms are bounded by the first-operator ones
    via the audited boundary estimate at ``s_k = s* lambda_k^(2/3)``, and
    the square-root-weighted sum of the secondary norms is checked for a
    decaying trend directly.
    """
    if audit_constant <= 0 or s_star <= 0:
        raise ValueError("audit constants missing or non-positive")
    reps1 = dec_first.cluster_eigenvalues()
    reps2 = dec_second.cluster_eigenvalues()
    n = min(reps1.size, reps2.size)
    if not np.allclose(reps1[:n], reps2[:n],
                       atol=10 * max(dec_first.cluster_tol, dec_second.cluster_tol),
                       rtol=1e-6):
        raise ValueError("cluster spectra do not match; run the mode "
                         "comparison first")
    p_norms = mode_norms(dec_first, a)[:n]
    q_norms = mode_norms(dec_second, a)[:n]
    lam = reps1[:n]
    # modes whose projection coefficient sits at the rounding floor of the
    # nodal representation carry no data; they are reported but excluded
    # from the weighted sums and the trend fit
    noise_floor_sq = (NOISE_REL**2) * float(p_norms.sum() + q_norms.sum())
    resolved = (p_norms > noise_floor_sq) | (q_norms > noise_floor_sq)
    # ensure the absorption margin s*^3 - C >= s*^3 / 2 used by the chain
    s_eff = max(float(s_star), (2.0 * audit_constant) ** (1.0 / 3.0))
    c_trace = trace_constant(dec_first, a, observation)
    lam_floor = float(lam[lam > 0].min(initial=1.0))
    big_c = 2.0 * audit_constant * max(c_trace, 1.0) ** 2 \
        * ((lam_floor + 1.0) / lam_floor) ** 2
    c1 = 2.0 * s_eff * obs_weight_max
    rows = []
    with np.errstate(over="ignore"):
        for k in range(n):
            s_k = s_eff * lam[k] ** CRITICAL_EXPONENT
            bound = big_c * lam[k] ** 2 * np.exp(c1 * lam[k] ** CRITICAL_EXPONENT) \
                * p_norms[k]
            rows.append(ModeBoundRow(
                eigenvalue=float(lam[k]), first_norm_sq=float(p_norms[k]),
                second_norm_sq=float(q_norms[k]), s_k=float(s_k),
                bound=float(bound), holds=bool(q_norms[k] <= bound),
            ))
        sqrt_weights = np.exp(sigma1 * np.sqrt(lam))
        direct = np.where(resolved, sqrt_weights * q_norms, 0.0)
        bounded = np.where(resolved, np.array([r.bound for r in rows])
                           * sqrt_weights, 0.0)
    c2 = envelope_constant(c1, sigma1, float(lam.max()))
    slope = trend_slope(direct)
    all_hold = all(r.holds for r in rows)
    nz = np.nonzero(direct > 0.0)[0]
    terminated = nz.size == 0 or nz[-1] < direct.size - 1
    return ImplicationReport(
        rows=tuple(rows), constant=float(big_c), c1=float(c1), c2=float(c2),
        s_star=float(s_eff), obs_weight_max=float(obs_weight_max),
        weighted_sum_direct=float(direct.sum()),
        weighted_sum_bound=float(np.minimum(bounded, 1e300).sum()),
        trend_slope=slope, all_bounds_hold=all_hold,
        verdict=bool(all_hold and (terminated or slope < 0.0)),
    )


def decay_report_to_csv(report: DecayReport) -> str:
    buf = io.StringIO()
    buf.write("mode,weighted_term,partial_sum\n")
    for k, (t, p) in enumerate(zip(report.weighted_terms, report.partial_sums)):
        buf.write(f"{k},{_fmt(t)},{_fmt(p)}\n")
    buf.write(f"summary,{_fmt(report.total)},{_fmt(report.trend_slope)}\n")
    return buf.getvalue()


def implication_report_to_csv(report: ImplicationReport) -> str:
    buf = io.StringIO()
    buf.write("eigenvalue,first_norm_sq,second_norm_sq,s_k,bound,holds\n")
    for r in report.rows:
        buf.write(",".join([
            _fmt(r.eigenvalue), _fmt(r.first_norm_sq), _fmt(r.second_norm_sq),
            _fmt(r.s_k), _fmt(r.bound), str(int(r.holds)),
        ]) + "\n")
    buf.write(f"summary,{_fmt(report.weighted_sum_direct)},"
              f"{_fmt(report.weighted_sum_bound)},{_fmt(report.trend_slope)},"
              f"{_fmt(report.constant)},{int(report.verdict)}\n")
    return buf.getvalue()


__all__ = [
    "ThetaSpec", "DecayReport", "ImplicationReport", "ModeBoundRow",
    "CONDITIONS", "check_condition", "construct_initial_data",
    "verify_implication", "superlinearity_proxy", "trend_slope",
    "envelope_constant", "trace_constant", "boundary_h1_norm_sq",
    "decay_report_to_csv", "implication_report_to_csv",
]
