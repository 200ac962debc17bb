import numpy as np
import pytest

from tracelab.grids import build_boundary_mask, build_grid, constant_field
from tracelab.operators import assemble_operator, coercive_shift, with_shift
from tracelab.solvers import (
    even_reflection,
    solve_elliptic_evolution,
    solve_parabolic_cn,
    solve_parabolic_spectral,
    trace_on_gamma,
    trace_to_csv,
    TraceSeries,
)
from tracelab.spectral import eigendecompose


@pytest.fixture(scope="module")
def lap_1d():
    g = build_grid(1, [1.0], [40])
    op = assemble_operator(g, constant_field(g, 1.0), constant_field(g, 0.0))
    op = with_shift(op, coercive_shift(op))
    return g, op, eigendecompose(op)


def test_single_mode_decay(lap_1d):
    g, op, dec = lap_1d
    k = 5
    vk = dec.eigenvectors[:, k]
    lam = dec.eigenvalues[k]
    times = np.array([0.01, 0.1, 0.5])
    snaps = solve_parabolic_spectral(dec, vk, times)
    for i, t in enumerate(times):
        assert np.allclose(snaps[i], np.exp(-lam * t) * vk, atol=1e-12)


def test_zero_initial_data_stays_zero(lap_1d):
    g, op, dec = lap_1d
    snaps = solve_parabolic_spectral(dec, np.zeros(g.num_nodes), [0.1, 1.0])
    assert np.all(snaps == 0.0)


def test_late_time_slope_matches_lowest_mode(lap_1d):
    g, op, dec = lap_1d
    rng = np.random.default_rng(0)
    a = rng.normal(size=g.num_nodes)
    times = np.linspace(4.0, 6.0, 9)
    snaps = solve_parabolic_spectral(dec, a, times)
    norms = np.array([g.norm(s) for s in snaps])
    slope = np.polyfit(times, np.log(norms), 1)[0]
    assert abs(-slope - dec.eigenvalues[0]) < 1e-3 * dec.eigenvalues[0]


def test_energy_decay(lap_1d):
    g, op, dec = lap_1d
    rng = np.random.default_rng(1)
    a = rng.normal(size=g.num_nodes)
    times = np.linspace(0.01, 1.0, 12)
    snaps = solve_parabolic_spectral(dec, a, times)
    norms = [g.norm(s) for s in snaps]
    assert all(n2 <= n1 + 1e-14 for n1, n2 in zip(norms, norms[1:]))


def test_cn_preserves_constants_without_zeroth_order():
    g = build_grid(1, [1.0], [30])
    op = assemble_operator(g, constant_field(g, 1.0), constant_field(g, 0.0))
    times, snaps = solve_parabolic_cn(op, np.ones(g.num_nodes), dt=1e-3, horizon=0.05)
    assert np.allclose(snaps[-1], 1.0, atol=1e-12)


def test_cn_matches_spectral_and_is_second_order():
    g = build_grid(1, [1.0], [100])
    op = assemble_operator(g, constant_field(g, 1.0), constant_field(g, 0.0))
    op = with_shift(op, coercive_shift(op))
    dec = eigendecompose(op)
    # smooth initial data from the first five modes
    a = dec.eigenvectors[:, :5] @ np.array([1.0, 0.7, -0.5, 0.3, 0.2])
    horizon = 0.1
    ref = solve_parabolic_spectral(dec, a, [horizon])[0]

    diffs = {}
    for dt in (1e-4, 5e-5):
        times, snaps = solve_parabolic_cn(op, a, dt=dt, horizon=horizon)
        assert np.isclose(times[-1], horizon)
        diffs[dt] = g.norm(snaps[-1] - ref)
    assert diffs[1e-4] < 1e-6
    ratio = diffs[1e-4] / diffs[5e-5]
    assert 3.5 < ratio < 4.5


def test_elliptic_evolution_initial_conditions(lap_1d):
    g, op, dec = lap_1d
    rng = np.random.default_rng(2)
    a = dec.eigenvectors[:, :8] @ rng.normal(size=8)
    times = np.linspace(0.0, 0.3, 7)
    evo = solve_elliptic_evolution(dec, a, times, tau=0.3)
    assert np.allclose(evo.snapshots[0], a, atol=1e-10)
    # single mode: cosh factor exactly
    vk = dec.eigenvectors[:, 3]
    ev1 = solve_elliptic_evolution(dec, vk, [0.0, 0.2], tau=0.2)
    lam = dec.eigenvalues[3]
    assert np.allclose(ev1.snapshots[1], np.cosh(0.2 * np.sqrt(lam)) * vk, atol=1e-10)


def test_elliptic_second_difference_residual_order(lap_1d):
    g, op, dec = lap_1d
    rng = np.random.default_rng(3)
    a = dec.eigenvectors[:, :6] @ rng.normal(size=6)
    t = 0.15
    resid = {}
    for delta in (2e-3, 1e-3):
        snaps = solve_elliptic_evolution(
            dec, a, [t - delta, t, t + delta], tau=0.2).snapshots
        second = (snaps[2] - 2 * snaps[1] + snaps[0]) / delta**2
        resid[delta] = g.norm(second - op.apply(snaps[1]))
    assert 3.5 < resid[2e-3] / resid[1e-3] < 4.5


def test_even_reflection_keeps_residual_bound(lap_1d):
    g, op, dec = lap_1d
    rng = np.random.default_rng(4)
    a = dec.eigenvectors[:, :6] @ rng.normal(size=6)
    delta = 1e-3
    times = np.array([0.0, delta, 2 * delta, 0.1 - delta, 0.1, 0.1 + delta])
    evo = solve_elliptic_evolution(dec, a, times, tau=0.2)
    rt, rs = even_reflection(evo)
    assert np.all(np.diff(rt) > 0)
    # time symmetry at zero: derivative vanishes
    i0 = np.argmin(np.abs(rt))
    d0 = (rs[i0 + 1] - rs[i0 - 1]) / (rt[i0 + 1] - rt[i0 - 1])
    assert g.norm(d0) < 1e-8
    # interior second difference on the reflected side matches A w up to the
    # delta^2 lambda^2 / 12 Taylor term
    second = (rs[i0 + 1] - 2 * rs[i0] + rs[i0 - 1]) / delta**2
    rel = g.norm(second - op.apply(rs[i0])) / g.norm(rs[i0])
    lam_max = dec.eigenvalues[5]
    assert rel < delta**2 * lam_max**2 / 3.0


def test_trace_restriction_and_determinism(lap_1d):
    g, op, dec = lap_1d
    mask = build_boundary_mask(g, "xlo")
    rng = np.random.default_rng(5)
    a = rng.normal(size=g.num_nodes)
    times = np.geomspace(0.05, 2.0, 10)
    snaps = solve_parabolic_spectral(dec, a, times)
    tr = trace_on_gamma(snaps, mask, times)
    assert tr.values.shape == (10, 1)
    assert np.array_equal(tr.values[:, 0], snaps[:, 0])
    # constant snapshot -> constant trace; zero-on-gamma -> zero trace
    const = np.ones((3, g.num_nodes))
    tc = trace_on_gamma(const, mask, [0.1, 0.2, 0.3])
    assert np.all(tc.values == 1.0)
    inner_only = np.zeros((2, g.num_nodes))
    inner_only[:, 5] = 3.0
    tz = trace_on_gamma(inner_only, mask, [0.1, 0.2])
    assert np.all(tz.values == 0.0)
    # identical inputs -> identical series bit-for-bit
    tr2 = trace_on_gamma(solve_parabolic_spectral(dec, a, times), mask, times)
    assert np.array_equal(tr.values, tr2.values)


def test_trace_values_independent_of_computation_order(lap_1d):
    g, op, dec = lap_1d
    mask = build_boundary_mask(g, "xlo")
    rng = np.random.default_rng(8)
    a = rng.normal(size=g.num_nodes)
    times = np.geomspace(0.05, 2.0, 12)
    direct = trace_on_gamma(solve_parabolic_spectral(dec, a, times), mask, times)
    perm = rng.permutation(times.size)
    shuffled = solve_parabolic_spectral(dec, a, times[perm])
    unshuffled = shuffled[np.argsort(perm)]
    again = trace_on_gamma(unshuffled, mask, times)
    assert np.array_equal(direct.values, again.values)


def test_trace_series_validation(lap_1d):
    g, op, dec = lap_1d
    mask = build_boundary_mask(g, "xlo")
    with pytest.raises(ValueError, match="increasing"):
        TraceSeries(mask=mask, times=np.array([0.2, 0.1]), values=np.zeros((2, 1)))
    with pytest.raises(ValueError, match="shape"):
        TraceSeries(mask=mask, times=np.array([0.1, 0.2]), values=np.zeros((2, 3)))
    with pytest.raises(ValueError, match="grid"):
        trace_on_gamma(np.zeros((2, 7)), mask, [0.1, 0.2])


def test_trace_csv_format(lap_1d):
    g, op, dec = lap_1d
    mask = build_boundary_mask(g, "xlo")
    tr = TraceSeries(mask=mask, times=np.array([0.5]), values=np.array([[np.pi]]))
    text = trace_to_csv(tr)
    lines = text.strip().splitlines()
    assert lines[0] == "time,0"
    assert float(lines[1].split(",")[1]) == np.pi
