"""Acceptance gate: every criterion at its stated tolerance, one line each.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
pass/fail lines.
"""

import hashlib
import time
from importlib.resources import files

import numpy as np
import pytest

from tracelab import fields
from tracelab.cli import main as cli_main
from tracelab.experiments import (
    run_audit_campaign,
    run_corollary_experiment,
    run_decay_experiment,
    run_omega_experiment,
    run_uniqueness_experiment,
    scenario_from_file,
    theorem_consistency_monitor,
)
from tracelab.grids import build_boundary_mask, build_grid
from tracelab.operators import assemble_operator, coercive_shift, with_shift
from tracelab.separation import compare_mode_series, separate_modes
from tracelab.solvers import (
    TraceSeries,
    solve_elliptic_evolution,
    solve_parabolic_cn,
    solve_parabolic_spectral,
    trace_on_gamma,
)
from tracelab.spectral import eigendecompose

FIXTURES = files("tracelab") / "fixtures"


def check(criterion, description, ok):
    print(f"\n[criterion {criterion}] {'PASS' if ok else 'FAIL'}: {description}")
    assert ok, f"criterion {criterion} failed: {description}"


def fixture(name, seed):
    return scenario_from_file(str(FIXTURES / f"{name}.cfg"), seed)


def test_criterion_1_eigensolver_exactness():
    start = time.time()
    n = 200
    g = build_grid(1, [np.pi], [n])
    op = assemble_operator(g, fields.constant(g, 1.0), fields.constant(g, 0.0))
    dec = eigendecompose(op)
    h = g.spacing[0]
    exact = (2.0 / h**2) * (1.0 - np.cos(np.arange(n) * np.pi / (n - 1)))
    rel = np.abs(dec.eigenvalues - exact) / np.maximum(1.0, np.abs(exact))
    w = g.quad_weights()
    gram = dec.eigenvectors.T @ (w[:, None] * dec.eigenvectors)
    gram_err = np.abs(gram - np.eye(n)).max()
    elapsed = time.time() - start
    check(1, f"closed-form eigenvalues to 1e-10 relative "
             f"(worst {rel.max():.2e}), Gram within 1e-10 "
             f"(worst {gram_err:.2e}), runtime {elapsed:.1f}s < 30s",
          rel.max() < 1e-10 and gram_err < 1e-10 and elapsed < 30.0)


def test_criterion_2_solver_cross_validation():
    g = build_grid(1, [1.0], [100])
    op = assemble_operator(g, fields.constant(g, 1.0), fields.constant(g, 0.0))
    op = with_shift(op, coercive_shift(op))
    dec = eigendecompose(op)
    a = dec.eigenvectors[:, :5] @ np.array([1.0, 0.7, -0.5, 0.3, 0.2])
    horizon = 0.1
    ref = solve_parabolic_spectral(dec, a, [horizon])[0]
    diffs = {}
    for dt in (1e-4, 5e-5):
        _, snaps = solve_parabolic_cn(op, a, dt=dt, horizon=horizon)
        diffs[dt] = g.norm(snaps[-1] - ref)
    ratio = diffs[1e-4] / diffs[5e-5]
    check(2, f"spectral vs Crank-Nicolson L2 gap {diffs[1e-4]:.2e} < 1e-6, "
             f"halving dt shrinks it by {ratio:.2f} in [3.5, 4.5]",
          diffs[1e-4] < 1e-6 and 3.5 < ratio < 4.5)


def test_criterion_3_elliptic_transmutation():
    g = build_grid(1, [2.0 * np.pi], [100])
    op = assemble_operator(g, fields.constant(g, 1.0), fields.constant(g, 0.0))
    dec = eigendecompose(op)
    rng = np.random.default_rng(31)
    a = dec.eigenvectors[:, :10] @ rng.normal(size=10)
    t, delta = 0.25, 1e-3
    evo = solve_elliptic_evolution(dec, a, [t - delta, t, t + delta], tau=0.5)
    w = evo.snapshots
    second = (w[2] - 2.0 * w[1] + w[0]) / delta**2
    resid = g.norm(second - op.apply(w[1]))
    rel = resid / g.norm(w[1])
    check(3, f"second-difference residual {rel:.2e} <= 1e-4 of the snapshot "
             f"norm at delta=1e-3, first 10 modes", rel <= 1e-4)


def test_criterion_4_mode_separation():
    # synthetic three-mode recovery
    g = build_grid(2, [1.0, 1.0], [5, 5])
    mask = build_boundary_mask(g, "ylo", index_range=(1, 3))
    times = np.geomspace(0.05, 2.0, 40)
    rates = [2.0, 5.0, 11.0]
    amps = [np.array([1.0, 0.4, -0.6]), np.array([-0.5, 0.9, 0.3]),
            np.array([0.2, -0.8, 1.1])]
    data = sum(np.exp(-r * times)[:, None] * b[None, :]
               for r, b in zip(rates, amps))
    series = separate_modes(TraceSeries(mask=mask, times=times, values=data),
                            max_modes=6, tol=1e-12)
    rate_err = max(abs(series.rates[k] - r) / r for k, r in enumerate(rates))
    amp_err = max(
        np.linalg.norm(series.amplitudes[k] - b) / np.linalg.norm(b)
        for k, b in enumerate(amps))
    synthetic_ok = (series.num_modes == 3 and rate_err < 1e-3
                    and amp_err < 1e-3)

    # end-to-end with independent solvers, equal coefficients
    scn = fixture("corollary_equal", 9)
    from tracelab.experiments import _operator_pair, _snap_times_to_steps

    op1, op2, _ = _operator_pair(scn)
    dec1 = eigendecompose(op1)
    a = scn.initial_value(dec1)
    dt = scn.config["time"]["dt"]
    st = _snap_times_to_steps(scn.sample_times(), dt)
    tr_u = trace_on_gamma(solve_parabolic_spectral(dec1, a, st),
                          scn.observation, st)
    _, cn = solve_parabolic_cn(op2, a, dt, float(st[-1]))
    idx = np.round(st / dt).astype(int) - 1
    tr_v = trace_on_gamma(cn[idx], scn.observation, st)
    su = separate_modes(tr_u, max_modes=5, tol=1e-10)
    sv = separate_modes(tr_v, max_modes=5, tol=1e-10)
    verdict = compare_mode_series(su, sv, rate_tol=1e-4, trace_tol=1e-4)
    check(4, f"3-mode recovery: rates to {rate_err:.1e}, amplitudes to "
             f"{amp_err:.1e} (<=1e-3); independent-solver full match at 1e-4: "
             f"{verdict.full_match}", synthetic_ok and verdict.full_match)


def test_criterion_5_reachable_region_fixtures():
    ok = True
    details = []
    for name in ("example_support_everywhere", "example_vanishing_blocks",
                 "example_enclosed_island"):
        scn = fixture(name, 1)
        rep = run_omega_experiment(scn)
        got_nodes = set()
        for table, content in rep.tables:
            if table == "reachable_mask.csv":
                got_nodes = {int(line.split(",")[0])
                             for line in content.strip().splitlines()[1:]}
        grid = scn.grid
        coords = grid.coords()
        interior = grid.interior_mask()
        if name == "example_support_everywhere":
            expected = interior.copy()
        elif name == "example_vanishing_blocks":
            blocked = np.zeros(grid.num_nodes, dtype=bool)
            for lows, highs in [((0.2, 0.2), (0.4, 0.4)),
                                ((0.6, 0.55), (0.85, 0.8))]:
                blocked |= np.all((coords >= lows) & (coords <= highs), axis=1)
            expected = interior & ~blocked
        else:
            outer = np.all((coords >= [0.25, 0.25]) & (coords <= [0.75, 0.75]),
                           axis=1)
            expected = interior & ~outer
            island = np.all((coords > [0.4, 0.4]) & (coords < [0.6, 0.6]),
                            axis=1)
            ok = ok and not (got_nodes & set(np.nonzero(island)[0].tolist()))
        expected_nodes = set(np.nonzero(expected)[0].tolist())
        same = got_nodes == expected_nodes
        details.append(f"{name.split('_', 1)[1]}: "
                       f"{'exact' if same else 'MISMATCH'}")
        ok = ok and same
    check(5, "reachable-region fixtures node-for-node (" + "; ".join(details)
             + "), island excluded", ok)


def test_criterion_6_carleman_audits():
    start = time.time()
    scn = fixture("audit_default", 21)
    reports, constants = run_audit_campaign(scn)
    elapsed = time.time() - start
    lines = []
    ok = len(reports) == 3 and elapsed < 300.0
    for name in ("elliptic", "boundary", "parabolic"):
        r = reports[name]
        stable = r.max_ratio[-1] <= 1.1 * r.max_ratio[0]
        ok = ok and stable and r.sample_count >= 100
        lines.append(f"{name}: ratio(s0)={r.max_ratio[0]:.3g}, "
                     f"ratio(4s0)={r.max_ratio[-1]:.3g}, "
                     f"{'stable' if stable else 'GROWING'}")
    check(6, f">=100 samples per audit, worst ratio at 4*s0 within 10% of s0 "
             f"({'; '.join(lines)}), runtime {elapsed:.0f}s < 300s", ok)


def test_criterion_7_uniqueness_contrapositive():
    baseline = run_uniqueness_experiment(fixture("uniqueness_baseline", 5))
    inside = run_uniqueness_experiment(fixture("uniqueness_gap_inside", 5))
    outside = run_uniqueness_experiment(fixture("uniqueness_gap_outside", 5))
    base_disc = float(dict(baseline.summary)["discrepancy"])
    gap_disc = float(dict(inside.summary)["discrepancy"])
    violations = theorem_consistency_monitor([baseline, inside, outside])
    check(7, f"bump inside the reachable region separates traces "
             f"({gap_disc:.2e} > 1e-6), baseline stays clean "
             f"({base_disc:.2e} < 1e-9), monitor violations: {len(violations)}",
          gap_disc > 1e-6 and base_disc < 1e-9 and not violations)


def test_criterion_8_mode_bound_chain():
    rep = run_decay_experiment(fixture("decay_default", 11))
    info = dict(rep.summary)
    bounds_hold = info["all_bounds_hold"] == "true"
    slope = float(info["implication_trend_slope"])
    check(8, f"audited per-mode bound holds for every mode "
             f"({bounds_hold}), weighted-sum trend slope {slope:.2f} < 0",
          bounds_hold and slope < 0.0)


@pytest.mark.parametrize("command,config,seed", [
    ("uniqueness", "uniqueness_gap_inside", 77),
    ("corollary", "corollary_equal", 9),
    ("audit", "audit_default", 21),
    ("omega", "example_enclosed_island", 3),
    ("decay", "decay_default", 11),
])
def test_criterion_9_cli_determinism(tmp_path, command, config, seed, capsys):
    hashes = []
    for run in ("a", "b"):
        out = tmp_path / run
        code = cli_main([command, "--config", str(FIXTURES / f"{config}.cfg"),
                         "--out", str(out), "--seed", str(seed)])
        assert code == 0
        manifest = (out / "manifest.txt").read_bytes()
        per_file = {}
        for name in sorted(p.name for p in out.iterdir()):
            per_file[name] = hashlib.sha256((out / name).read_bytes()).hexdigest()
        hashes.append((hashlib.sha256(manifest).hexdigest(), per_file))
    capsys.readouterr()
    check(f"9 ({command})",
          f"re-run with identical config and seed is byte-identical "
          f"({len(hashes[0][1])} files)", hashes[0] == hashes[1])
