"""Carleman weight construction and numerical inequality audits.

Three weighted energy inequalities drive the uniqueness argument: a local
estimate on a space-time tube for the elliptic operator ``d_tt - A``, a
global boundary estimate on the domain for fields with the discrete Neumann
property, and a parabolic estimate with a time-degenerate weight. None of
them is proved here; each audit evaluates the two sides on seeded sample
ensembles across a list of large parameters ``s`` and reports the worst
ratio per ``s``. A stabilizing ratio curve (bounded as ``s`` grows) is the
numerical signature of the single-constant inequality; the smallest ``s``
where the curve flattens plays the role of the estimate's threshold
parameter and is an output, not an input.

All weights ``exp(2 s alpha)`` are rescaled by their maximum before
quadrature; the constant cancels in every ratio and keeps large ``s``
representable.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .grids import FACE_NAMES, BoundaryMask, Grid, _fmt, face_of_nodes
from .operators import OperatorMatrix
from .regions import RegionMask, wall_distance
from .spectral import SpectralDecomposition, spectral_apply

GRAD_FLOOR = 1e-8
ZERO_TOL = 1e-12
DEFAULT_LAM = 2.0
PENALTY_EXPONENTS = (2.0, 1.5, 1.0)  # transverse steepening retries


class WeightVerificationError(RuntimeError):
    """A weight failed its condition scan; carries the violating nodes."""

    def __init__(self, violations):
        # violations: list of (condition, node list); all failures reported
        parts = [
            f"{cond!r} at nodes {list(nodes)[:12]}{'...' if len(nodes) > 12 else ''}"
            for cond, nodes in violations
        ]
        super().__init__("weight condition scan failed: " + "; ".join(parts))
        self.violations = tuple(
            (cond, tuple(int(n) for n in nodes)) for cond, nodes in violations
        )


def smoothstep(x: NDArray | float) -> NDArray | float:
    """Quintic ramp: 0 below 0, 1 above 1, C^2 across the junctions."""
    s = np.clip(x, 0.0, 1.0)
    return s**3 * (10.0 - 15.0 * s + 6.0 * s**2)


# ---------------------------------------------------------------------------
# weights

@dataclass(frozen=True)
class CarlemanWeight:
    """One of the three weight families, tagged by kind.

    elliptic_local: ``tube_weight`` (the positive profile on the tube),
    ``lam``, ``beta``; the space-time weight is
    ``alpha(x, t) = exp(lam * (tube_weight(x) - beta t^2))``.

    boundary_global: ``profile`` (positive, increasing toward the
    observation face) and ``weight = exp(lam*(profile - 2 max profile))``.

    parabolic_global: ``profile`` plus a time ramp ``ell`` on [0, horizon];
    ``alpha = (exp(lam profile) - exp(2 lam max profile)) / ell`` and
    ``phi = exp(lam profile) / ell``.
    """

    kind: str
    grid: Grid
    lam: float
    beta: float | None = None
    tube: RegionMask | None = None
    tube_weight: NDArray | None = None
    profile: NDArray | None = None
    weight: NDArray | None = None
    horizon: float | None = None

    def alpha_local(self, t: NDArray | float) -> NDArray:
        """elliptic_local alpha on (times, nodes)."""
        t2 = np.atleast_1d(np.asarray(t, dtype=float))[:, None] ** 2
        return np.exp(self.lam * (self.tube_weight[None, :] - self.beta * t2))

    def ell(self, t: NDArray | float) -> NDArray | float:
        """parabolic time ramp: 1 on the middle half, quintic to 0 at ends."""
        tt = np.asarray(t, dtype=float)
        quarter = self.horizon / 4.0
        up = smoothstep(tt / quarter)
        down = smoothstep((self.horizon - tt) / quarter)
        return np.minimum(up, down)


def _one_sided_gradient_norm(grid: Grid, values: NDArray,
                             mask: NDArray[np.bool_]) -> NDArray:
    """Per-node gradient magnitude using the larger one-sided difference.

    Central differences report spurious critical points at cone peaks; the
    one-sided maximum is the right discrete reading of ``|grad| > 0``.
    """
    shape = grid.counts
    v = values.reshape(shape)
    m = mask.reshape(shape)
    out = np.zeros(shape)
    for a in range(grid.dim):
        h = grid.spacing[a]
        fwd = np.zeros(shape)
        bwd = np.zeros(shape)
        sl_to = tuple(slice(None, -1) if ax == a else slice(None) for ax in range(grid.dim))
        sl_from = tuple(slice(1, None) if ax == a else slice(None) for ax in range(grid.dim))
        diff = (v[sl_from] - v[sl_to]) / h
        valid = m[sl_from] & m[sl_to]
        fwd[sl_to] = np.where(valid, np.abs(diff), 0.0)
        bwd[sl_from] = np.where(valid, np.abs(diff), 0.0)
        out += np.maximum(fwd, bwd) ** 2
    return np.sqrt(out).ravel()


def build_tube_weight(tube: RegionMask, active: RegionMask, grid: Grid,
                      lam: float = DEFAULT_LAM) -> tuple[NDArray, CarlemanWeight]:
    """Positive profile on the tube: ramp along the spine, wall falloff.

    The profile is the normalized spine position (0 at the active-boundary
    contact, 1 at the target end) times a transverse factor that is exactly
    zero on the tube's boundary ring, so the three scan conditions hold:
    positive on the interior, zero on the ring away from the contact, and a
    one-sided gradient bounded away from zero. Failed gradient scans retry
    with a steeper transverse falloff (up to ``len(PENALTY_EXPONENTS)``
    attempts) before reporting the violating nodes.
    """
    if not tube.path:
        raise ValueError("tube mask carries no spine path; carve it first")
    mask = tube.mask
    path = np.asarray(tube.path, dtype=int)
    path_multis = np.array([grid.multi_index(int(p)) for p in path])
    nodes = tube.nodes()
    node_multis = np.array([grid.multi_index(int(n)) for n in nodes])
    # spine coordinate: position of the nearest path node, contact end = 0;
    # distance ties break toward the target end so only the contact node
    # itself sits at coordinate zero
    cheb = np.abs(node_multis[:, None, :] - path_multis[None, :, :]).max(axis=2)
    reversed_argmin = np.argmin(cheb[:, ::-1], axis=1)
    nearest = cheb.shape[1] - 1 - reversed_argmin
    spine = nearest / max(len(path) - 1, 1)
    wall = wall_distance(grid, mask)

    last_error = None
    for p_exp in PENALTY_EXPONENTS:
        w = np.minimum(wall[nodes], 3)
        transverse = 1.0 - ((3.0 - w) / 2.0) ** p_exp
        values = np.zeros(grid.num_nodes)
        values[nodes] = spine * transverse
        try:
            _verify_tube_weight(grid, tube, active, values, wall)
        except WeightVerificationError as err:
            last_error = err
            continue
        weight = CarlemanWeight(kind="elliptic_local", grid=grid, lam=float(lam),
                                beta=None, tube=tube, tube_weight=values)
        return values, weight
    raise last_error


def _verify_tube_weight(grid: Grid, tube: RegionMask, active: RegionMask,
                        values: NDArray, wall: NDArray) -> None:
    mask = tube.mask
    nodes = tube.nodes()
    ring = np.array([n for n in nodes if wall[n] == 1])
    contact = set(
        int(n) for n in nodes
        if any(active.mask[m] for m in grid.face_neighbors(int(n)))
    )
    interior = np.array([n for n in nodes if wall[n] >= 2])
    violations = []
    bad = [int(n) for n in interior if values[n] <= 0 and int(n) not in contact]
    if bad:
        violations.append(("positive on tube interior", bad))
    check_ring = sorted(set(int(r) for r in ring) - contact)
    bad = [n for n in check_ring if abs(values[n]) > ZERO_TOL]
    if bad:
        violations.append(("zero on boundary ring minus contact", bad))
    grad = _one_sided_gradient_norm(grid, values, mask)
    bad = [int(n) for n in nodes if grad[n] <= GRAD_FLOOR]
    if bad:
        violations.append(("gradient floor on tube closure", bad))
    if violations:
        raise WeightVerificationError(violations)


def verify_tube_weight(grid: Grid, tube: RegionMask, active: RegionMask,
                       values: NDArray) -> None:
    """Condition scan for an externally supplied tube profile."""
    _verify_tube_weight(grid, tube, active, values, wall_distance(grid, tube.mask))


def build_domain_weight(grid: Grid, observation: BoundaryMask,
                        lam: float = DEFAULT_LAM, base: float = 0.1,
                        bump_amp: float = 0.1,
                        diffusion: NDArray | None = None) -> CarlemanWeight:
    """Positive profile increasing toward the observation face, plus its
    exponential normalization into (0, 1).

    The profile is affine toward the face with a tangential bump centered on
    the observation set; the scan checks positivity, the one-sided gradient
    floor, and a non-positive outward conormal derivative on every boundary
    node outside the observation set.
    """
    try:
        face, axis, side = face_of_nodes(grid, observation.nodes)
    except ValueError:
        raise ValueError("observation nodes must lie on a single face") from None
    coords = grid.coords()
    toward = coords[:, axis] if side == 1 else grid.extents[axis] - coords[:, axis]
    profile = base + toward
    if grid.dim == 2 and bump_amp != 0.0:
        tang = 1 - axis
        obs_coords = coords[observation.as_array(), tang]
        center = 0.5 * (obs_coords.min() + obs_coords.max())
        width = max(0.5 * (obs_coords.max() - obs_coords.min()), grid.spacing[tang])
        bump = np.exp(-(((coords[:, tang] - center) / width) ** 2))
        profile = profile + bump_amp * bump * (toward / grid.extents[axis])
    _verify_domain_profile(grid, observation, profile, diffusion)
    weight = np.exp(lam * (profile - 2.0 * profile.max()))
    return CarlemanWeight(kind="boundary_global", grid=grid, lam=float(lam),
                          profile=profile, weight=weight)


def _verify_domain_profile(grid: Grid, observation: BoundaryMask,
                           profile: NDArray, diffusion: NDArray | None) -> None:
    violations = []
    bad = [int(n) for n in range(grid.num_nodes) if profile[n] <= 0]
    if bad:
        violations.append(("positive profile", bad))
    grad = _one_sided_gradient_norm(grid, profile,
                                    np.ones(grid.num_nodes, dtype=bool))
    bad = [int(n) for n in range(grid.num_nodes) if grad[n] <= GRAD_FLOOR]
    if bad:
        violations.append(("gradient floor on closure", bad))
    obs_set = set(int(n) for n in observation.nodes)
    labels = grid.boundary_faces()
    v = profile.reshape(grid.counts)
    bad = []
    for node, label in labels.items():
        if node in obs_set:
            continue
        axis, side = divmod(FACE_NAMES[grid.dim].index(label), 2)
        multi = list(grid.multi_index(node))
        inward = list(multi)
        inward[axis] += -1 if side == 1 else 1
        outward_deriv = (v[tuple(multi)] - v[tuple(inward)]) / grid.spacing[axis]
        scale = 1.0 if diffusion is None else float(diffusion[node])
        if scale * outward_deriv > ZERO_TOL:
            bad.append(node)
    if bad:
        violations.append(
            ("non-positive conormal derivative off the observation set", bad))
    if violations:
        raise WeightVerificationError(violations)


def build_parabolic_weight(grid: Grid, observation: BoundaryMask, horizon: float,
                           lam: float = DEFAULT_LAM,
                           diffusion: NDArray | None = None) -> CarlemanWeight:
    """Weight for the parabolic audit: domain profile plus the time ramp."""
    dw = build_domain_weight(grid, observation, lam=lam, diffusion=diffusion)
    return CarlemanWeight(kind="parabolic_global", grid=grid, lam=float(lam),
                          profile=dw.profile, weight=dw.weight,
                          horizon=float(horizon))


# ---------------------------------------------------------------------------
# cutoff

@dataclass(frozen=True)
class CutoffProfile:
    """Level-set ramp of ``tube_weight(x) - beta t^2`` between two margins.

    The cutoff is identically 1 where the level exceeds ``delta2``, 0 where
    it falls below ``delta1``, and a quintic ramp between; ``beta`` and
    ``tau`` are coupled so the level is negative on the time caps, which
    makes the cutoff vanish there together with its time differences.
    """

    weight: CarlemanWeight     # elliptic_local
    target: int
    tau: float
    beta: float
    delta1: float
    delta2: float
    delta3: float

    def __post_init__(self):
        d = self.weight.tube_weight
        d_max = float(d.max())
        d_y = float(d[self.target])
        if not (d_max - self.beta * self.tau**2 < 0.0):
            raise ValueError("beta too small: level not negative on time caps")
        if not (0.0 < self.delta1 < self.delta2 < d_y):
            raise ValueError("margins must satisfy 0 < delta1 < delta2 < weight(target)")
        if not (self.delta3 > self.delta2):
            raise ValueError("delta3 must exceed delta2")

    def level(self, t: NDArray | float) -> NDArray:
        t2 = np.atleast_1d(np.asarray(t, dtype=float))[:, None] ** 2
        return self.weight.tube_weight[None, :] - self.beta * t2

    def chi(self, t: NDArray | float) -> NDArray:
        lvl = self.level(t)
        return smoothstep((lvl - self.delta1) / (self.delta2 - self.delta1))


def build_cutoff(weight: CarlemanWeight, target: int, tau: float,
                 beta: float | None = None,
                 margins: tuple[float, float, float] = (0.3, 0.6, 0.8)) -> CutoffProfile:
    """Default margins are fractions of the weight at the target node; beta
    defaults to the smallest round value making the caps negative."""
    d = weight.tube_weight
    if beta is None:
        beta = (float(d.max()) + 0.1) / tau**2
    d_y = float(d[target])
    m1, m2, m3 = margins
    return CutoffProfile(weight=weight, target=int(target), tau=float(tau),
                         beta=float(beta), delta1=m1 * d_y, delta2=m2 * d_y,
                         delta3=m3 * d_y)


# ---------------------------------------------------------------------------
# audits

@dataclass(frozen=True)
class AuditReport:
    """Worst LHS/RHS ratio per large parameter, plus audit bookkeeping."""

    kind: str
    s_values: tuple[float, ...]
    max_ratio: tuple[float, ...]
    argmax_sample: tuple[int, ...]
    flags: tuple[str, ...]
    constant: float
    sample_count: int
    extras: dict = field(default_factory=dict)

    def stabilized(self, growth_tol: float = 1.1) -> bool:
        """Largest-s worst ratio within growth_tol of the smallest-s one."""
        return self.max_ratio[-1] <= growth_tol * self.max_ratio[0]


def audit_to_csv(report: AuditReport) -> str:
    buf = io.StringIO()
    buf.write("s,max_ratio,argmax_sample_id,flags\n")
    flags = ";".join(report.flags)
    for s, r, i in zip(report.s_values, report.max_ratio, report.argmax_sample):
        buf.write(f"{_fmt(s)},{_fmt(r)},{i},{flags}\n")
    return buf.getvalue()


def _axis_second_diff(w: NDArray, axis: int, h: float) -> NDArray:
    out = (np.roll(w, -1, axis=axis) - 2.0 * w + np.roll(w, 1, axis=axis)) / h**2
    _zero_edges(out, axis)
    return out


def _axis_cross_diff(w: NDArray, ax1: int, ax2: int, h1: float, h2: float) -> NDArray:
    out = (np.roll(np.roll(w, -1, axis=ax1), -1, axis=ax2)
           - np.roll(np.roll(w, -1, axis=ax1), 1, axis=ax2)
           - np.roll(np.roll(w, 1, axis=ax1), -1, axis=ax2)
           + np.roll(np.roll(w, 1, axis=ax1), 1, axis=ax2)) / (4.0 * h1 * h2)
    _zero_edges(out, ax1)
    _zero_edges(out, ax2)
    return out


def _axis_first_diff(w: NDArray, axis: int, h: float) -> NDArray:
    out = (np.roll(w, -1, axis=axis) - np.roll(w, 1, axis=axis)) / (2.0 * h)
    _zero_edges(out, axis)
    return out


def _zero_edges(arr: NDArray, axis: int) -> None:
    sl = [slice(None)] * arr.ndim
    sl[axis] = 0
    arr[tuple(sl)] = 0.0
    sl[axis] = -1
    arr[tuple(sl)] = 0.0


def _smooth_random_spacetime(rng, n_t: int, shape: tuple[int, ...]) -> NDArray:
    """Low-order random tensor polynomial on the unit space-time box."""
    axes = []
    for n in (n_t,) + shape:
        x = np.linspace(0.0, 1.0, n)
        axes.append(np.stack([np.ones_like(x), x, np.cos(np.pi * x),
                              np.sin(2 * np.pi * x)]))
    coeff = rng.normal(size=(4,) * (1 + len(shape)))
    grids = np.meshgrid(*[np.arange(4)] * (1 + len(shape)), indexing="ij")
    out = np.zeros((n_t,) + shape)
    for idx in zip(*[g.ravel() for g in grids]):
        term = coeff[idx]
        basis = axes[0][idx[0]]
        for d in range(len(shape)):
            basis = np.multiply.outer(basis, axes[1 + d][idx[1 + d]])
        out += term * basis
    return out


def _h2zero_cutoff(grid: Grid, mask: NDArray[np.bool_]) -> NDArray:
    """Spatial cutoff vanishing with its first differences on the 2-cell
    boundary layer of the mask (the discrete compact-support surrogate)."""
    wall = wall_distance(grid, mask)
    ramp = np.zeros(grid.num_nodes)
    inside = mask
    ramp[inside] = smoothstep((wall[inside] - 2.0) / 2.0)
    return ramp


def _time_cutoff(times: NDArray) -> NDArray:
    span = times[-1] - times[0]
    ramp_in = smoothstep((times - times[0]) / (0.25 * span))
    ramp_out = smoothstep((times[-1] - times) / (0.25 * span))
    cut = np.minimum(ramp_in, ramp_out)
    cut[[0, -1]] = 0.0
    cut[[1, -2]] = 0.0
    return cut


def audit_elliptic_carleman(op: OperatorMatrix, weight: CarlemanWeight,
                            beta: float, sample_count: int, s_list,
                            seed: int, n_time: int = 33,
                            tau: float = 0.5) -> AuditReport:
    """Local estimate on the tube for ``d_tt - A``: compactly supported
    samples, full second-derivative block on the left side.

    LHS: (1/s) sum over all ordered axis pairs (time first) of squared
    second differences + s |d_t w|^2 + s |grad w|^2 + s^3 |w|^2, weighted.
    RHS: |d_tt w - A w|^2, same weight. Ratio maxed over samples per s.
    """
    grid = weight.grid
    tube = weight.tube
    times = np.linspace(-tau, tau, n_time)
    dt = times[1] - times[0]
    cut_x = _h2zero_cutoff(grid, tube.mask).reshape(grid.counts)
    cut_t = _time_cutoff(times)
    if not np.any(cut_x > 0):
        raise ValueError("tube too thin: compact-support cutoff is empty")
    alpha = np.exp(weight.lam * (weight.tube_weight[None, :]
                                 - beta * (times[:, None] ** 2)))
    alpha -= alpha.max()
    quad = (op.grid.quad_weights()[None, :] * dt) * tube.mask[None, :]

    rng = np.random.default_rng(seed)
    s_arr = np.asarray(list(s_list), dtype=float)
    best = np.zeros(s_arr.size)
    argmax = np.zeros(s_arr.size, dtype=int)
    flags: list[str] = []
    spacings = (dt,) + tuple(grid.spacing)
    for sid in range(sample_count):
        raw = _smooth_random_spacetime(rng, n_time, grid.counts)
        w = raw * cut_x[None, ...] * cut_t.reshape((-1,) + (1,) * grid.dim)
        if not np.any(w):
            continue
        flat = w.reshape(n_time, grid.num_nodes)
        second_sq = np.zeros_like(w)
        n_ax = 1 + grid.dim
        for i in range(n_ax):
            for j in range(n_ax):
                if i == j:
                    d2 = _axis_second_diff(w, i, spacings[i])
                else:
                    d2 = _axis_cross_diff(w, i, j, spacings[i], spacings[j])
                second_sq += d2**2
        dtw_sq = _axis_first_diff(w, 0, dt) ** 2
        grad_sq = np.zeros_like(w)
        for a in range(grid.dim):
            grad_sq += _axis_first_diff(w, 1 + a, grid.spacing[a]) ** 2
        w_sq = w**2
        aw = np.vstack([op.apply(flat[k]) for k in range(n_time)])
        resid_sq = (_axis_second_diff(w, 0, dt).reshape(n_time, -1) - aw) ** 2
        resid_sq[0] = resid_sq[-1] = 0.0

        for si, s in enumerate(s_arr):
            ew = np.exp(2.0 * s * alpha) * quad
            lhs = float(np.sum((second_sq.reshape(n_time, -1) / s
                                + s * dtw_sq.reshape(n_time, -1)
                                + s * grad_sq.reshape(n_time, -1)
                                + s**3 * w_sq.reshape(n_time, -1)) * ew))
            rhs = float(np.sum(resid_sq * ew))
            if rhs == 0.0:
                if lhs != 0.0:
                    flags.append(f"sample {sid}: zero right side with "
                                 f"nonzero left side at s={s:g}")
                continue
            ratio = lhs / rhs
            if ratio > best[si]:
                best[si] = ratio
                argmax[si] = sid
    return AuditReport(kind="elliptic_local", s_values=tuple(s_arr),
                       max_ratio=tuple(best), argmax_sample=tuple(argmax),
                       flags=tuple(flags), constant=float(best.max(initial=0.0)),
                       sample_count=sample_count)


def _gradient_fields(grid: Grid, g: NDArray) -> list[NDArray]:
    """Central-interior, one-sided-edge first derivatives per axis."""
    v = g.reshape(grid.counts)
    if grid.dim == 1:
        return [np.gradient(v, grid.spacing[0])]
    return list(np.gradient(v, *grid.spacing))


def _surface_quadrature(grid: Grid, observation: BoundaryMask) -> NDArray:
    """Trapezoid weights along the observation set (1.0 for a 1D endpoint)."""
    idx = observation.as_array()
    if grid.dim == 1:
        return np.ones(idx.size)
    try:
        _, axis, _ = face_of_nodes(grid, idx)
    except ValueError:
        return np.full(idx.size, float(np.mean(grid.spacing)))
    tangential = 1 - axis
    w = np.full(idx.size, grid.spacing[tangential])
    w[[0, -1]] *= 0.5
    return w


def _boundary_samples(dec: SpectralDecomposition, rng, count: int,
                      smoothing: float) -> list[NDArray]:
    """Smoothed random fields; exact discrete-Neumann by construction."""
    out = []
    lam_mid = float(np.median(dec.eigenvalues)) or 1.0
    for _ in range(count):
        raw = rng.normal(size=dec.eigenvectors.shape[0])
        out.append(spectral_apply(dec, lambda lam: np.exp(-smoothing * lam / lam_mid), raw))
    return out


def audit_boundary_carleman(op: OperatorMatrix, weight: CarlemanWeight,
                            observation: BoundaryMask,
                            dec: SpectralDecomposition, sample_count: int,
                            s_list, seed: int, smoothing: float = 4.0,
                            eigen_clusters: int = 8) -> AuditReport:
    """Global boundary estimate for discrete-Neumann fields.

    LHS: s^3 |g|^2 + s |grad g|^2 weighted by exp(2 s psi) over the domain.
    RHS (constant-free): |A g|^2 over the domain plus s^3 (|g|^2 +
    |grad g|^2) over the observation set, same weight. Eigenvector inputs
    are recorded per cluster with their eigenvalues; those rows feed the
    mode-bound chain downstream.
    """
    grid = weight.grid
    psi = weight.weight
    quad = grid.quad_weights()
    obs_idx = observation.as_array()
    surf = _surface_quadrature(grid, observation)
    rng = np.random.default_rng(seed)
    samples = _boundary_samples(dec, rng, sample_count, smoothing)
    n_eig = min(eigen_clusters, dec.num_clusters)
    eigen_ids = list(range(n_eig))
    for k in eigen_ids:
        _, members = dec.clusters[k]
        samples.append(dec.eigenvectors[:, members[0]].copy())

    s_arr = np.asarray(list(s_list), dtype=float)
    best = np.zeros(s_arr.size)
    argmax = np.zeros(s_arr.size, dtype=int)
    ratios_all = np.zeros((len(samples), s_arr.size))
    flags: list[str] = []
    for sid, g in enumerate(samples):
        ag = op.apply(g)
        grads = _gradient_fields(grid, g)
        grad_sq = sum(d**2 for d in grads).ravel()
        g_sq = g**2
        grad_sq_obs = grad_sq[obs_idx]
        g_sq_obs = g_sq[obs_idx]
        psi_obs = psi[obs_idx]
        for si, s in enumerate(s_arr):
            ew = np.exp(2.0 * s * (psi - psi.max()))
            ew_obs = np.exp(2.0 * s * (psi_obs - psi.max()))
            lhs = float(np.sum((s**3 * g_sq + s * grad_sq) * ew * quad))
            rhs = float(np.sum(ag**2 * ew * quad)
                        + s**3 * np.sum((g_sq_obs + grad_sq_obs) * ew_obs * surf))
            if rhs == 0.0:
                if lhs != 0.0:
                    flags.append(f"sample {sid}: zero right side at s={s:g}")
                continue
            ratios_all[sid, si] = lhs / rhs
            if ratios_all[sid, si] > best[si]:
                best[si] = ratios_all[sid, si]
                argmax[si] = sid
    # near-violation scan: ratios far above the ensemble median are reported
    med = np.median(ratios_all[ratios_all > 0]) if np.any(ratios_all > 0) else 0.0
    for sid in range(len(samples)):
        if med > 0 and ratios_all[sid].max() > 100.0 * med:
            flags.append(f"sample {sid}: ratio {ratios_all[sid].max():.3e} "
                         f"exceeds 100x ensemble median")
    per_mode = tuple(
        (float(dec.clusters[k][0]), float(ratios_all[sample_count + i].max()))
        for i, k in enumerate(eigen_ids)
    )
    obs_weight_max = float(psi[obs_idx].max())
    return AuditReport(kind="boundary_global", s_values=tuple(s_arr),
                       max_ratio=tuple(best), argmax_sample=tuple(argmax),
                       flags=tuple(flags), constant=float(best.max(initial=0.0)),
                       sample_count=len(samples),
                       extras={"per_mode": per_mode,
                               "obs_weight_max": obs_weight_max})


def audit_parabolic_carleman(op: OperatorMatrix, weight: CarlemanWeight,
                             observation: BoundaryMask,
                             dec: SpectralDecomposition, sample_count: int,
                             s_list, seed: int, n_time: int = 41,
                             smoothing: float = 4.0) -> AuditReport:
    """Parabolic estimate with the time-degenerate weight.

    Quadrature is restricted to the middle of the horizon (five percent
    trimmed off both ends) where the weight is numerically nonzero. The
    static-field specialization (no time derivative) is always included as
    the first sample.
    """
    grid = weight.grid
    horizon = weight.horizon
    times = np.linspace(horizon / 20.0, horizon * 19.0 / 20.0, n_time)
    dt = times[1] - times[0]
    ell = np.asarray(weight.ell(times))
    rho = weight.profile
    lam = weight.lam
    e_rho = np.exp(lam * rho)
    top = np.exp(2.0 * lam * rho.max())
    alpha = (e_rho[None, :] - top) / ell[:, None]
    alpha_max = alpha.max()
    phi = e_rho[None, :] / ell[:, None]
    quad = grid.quad_weights()
    obs_idx = observation.as_array()
    surf = _surface_quadrature(grid, observation)

    rng = np.random.default_rng(seed)
    statics = _boundary_samples(dec, rng, max(1, sample_count // 3), smoothing)
    fields: list[NDArray] = []
    for g in statics:
        fields.append(np.tile(g, (n_time, 1)))
    while len(fields) < sample_count:
        g = _boundary_samples(dec, rng, 1, smoothing)[0]
        if len(fields) % 2 == 0:
            profile_t = 1.0 + 0.5 * np.sin(np.pi * times / horizon)
        else:
            profile_t = np.exp(-0.5 * (times - times[0]))
        fields.append(profile_t[:, None] * g[None, :])

    s_arr = np.asarray(list(s_list), dtype=float)
    best = np.zeros(s_arr.size)
    argmax = np.zeros(s_arr.size, dtype=int)
    flags: list[str] = []
    for sid, u in enumerate(fields):
        au = np.vstack([op.apply(u[k]) for k in range(n_time)])
        dtu = np.gradient(u, dt, axis=0)
        resid_sq = (dtu - au) ** 2
        grad_sq = np.zeros_like(u)
        for k in range(n_time):
            grads = _gradient_fields(grid, u[k])
            grad_sq[k] = sum(d**2 for d in grads).ravel()
        u_sq = u**2
        dtu_sq = dtu**2
        for si, s in enumerate(s_arr):
            ew = np.exp(2.0 * s * (alpha - alpha_max))
            body = ew * quad[None, :] * dt
            lhs = float(np.sum((s * phi * grad_sq + s**3 * phi**3 * u_sq) * body))
            rhs_dom = float(np.sum(resid_sq * body))
            ew_obs = ew[:, obs_idx]
            phi_obs = phi[:, obs_idx]
            rhs_obs = float(np.sum(
                (dtu_sq[:, obs_idx] + s * phi_obs * grad_sq[:, obs_idx]
                 + s**3 * phi_obs**3 * u_sq[:, obs_idx])
                * ew_obs * surf[None, :] * dt))
            rhs = rhs_dom + rhs_obs
            if rhs == 0.0:
                if lhs != 0.0:
                    flags.append(f"sample {sid}: zero right side at s={s:g}")
                continue
            ratio = lhs / rhs
            if ratio > best[si]:
                best[si] = ratio
                argmax[si] = sid
    return AuditReport(kind="parabolic_global", s_values=tuple(s_arr),
                       max_ratio=tuple(best), argmax_sample=tuple(argmax),
                       flags=tuple(flags), constant=float(best.max(initial=0.0)),
                       sample_count=len(fields))


def scan_stabilization(audit_fn, s_candidates, growth_tol: float = 1.1):
    """Smallest s where doubling then quadrupling keeps the worst ratio
    within the growth tolerance; the scan's ratio table comes along."""
    table = {}
    for s0 in s_candidates:
        report = audit_fn((s0, 2.0 * s0, 4.0 * s0))
        table[s0] = report
        if report.stabilized(growth_tol):
            return float(s0), report, table
    return float(s_candidates[-1]), table[s_candidates[-1]], table


__all__ = [
    "CarlemanWeight", "CutoffProfile", "AuditReport", "WeightVerificationError",
    "smoothstep", "build_tube_weight", "verify_tube_weight",
    "build_domain_weight", "build_parabolic_weight", "build_cutoff",
    "audit_elliptic_carleman", "audit_boundary_carleman",
    "audit_parabolic_carleman", "scan_stabilization", "audit_to_csv",
]
