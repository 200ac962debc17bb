"""Scenario engine: end-to-end experiments, reports, and file emission.

A scenario bundles grid, coefficient, initial-value, observation, timing,
and tolerance choices with a mandatory seed. Every run is deterministic
given (configuration, seed): reports serialize to byte-identical CSV files
on re-runs, and the emitted manifest carries content hashes to prove it.
"""

from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from . import fields
from .carleman import (
    AuditReport,
    audit_boundary_carleman,
    audit_elliptic_carleman,
    audit_parabolic_carleman,
    audit_to_csv,
    build_cutoff,
    build_domain_weight,
    build_parabolic_weight,
    build_tube_weight,
    scan_stabilization,
)
from .config import canonical_lines, load_config, parse_config
from .decay import (
    NOISE_REL,
    ThetaSpec,
    check_condition,
    construct_initial_data,
    decay_report_to_csv,
    implication_report_to_csv,
    verify_implication,
)
from .grids import BoundaryMask, Grid, _fmt, build_boundary_mask, build_grid
from .operators import OperatorMatrix, assemble_operator, coercive_shift
from .regions import (
    RegionMask,
    active_boundary,
    carve_tube,
    reachable_region,
    region_to_ascii,
    region_to_csv,
    support_region,
)
from .separation import (
    compare_mode_series,
    match_to_spectrum,
    mode_series_to_csv,
    separate_modes,
)
from .solvers import (
    solve_parabolic_cn,
    solve_parabolic_spectral,
    trace_on_gamma,
    trace_to_csv,
)
from .spectral import eigendecompose, mode_norms


@dataclass(frozen=True)
class Scenario:
    """Fully resolved experiment description; seed mandatory."""

    config: dict
    seed: int
    grid: Grid
    diffusion: NDArray
    c_first: NDArray
    c_second: NDArray
    observation: BoundaryMask

    def digest(self) -> str:
        text = canonical_lines(self.config, self.seed)
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def sample_times(self) -> NDArray:
        t = self.config["time"]
        if t["spacing"] == "log":
            return np.geomspace(t["first"], t["horizon"], t["samples"])
        if t["spacing"] == "linear":
            return np.linspace(t["first"], t["horizon"], t["samples"])
        raise ValueError(f"unknown time spacing {t['spacing']!r}")

    def initial_value(self, dec=None) -> NDArray:
        spec = self.config["initial"]
        kind = spec["kind"]
        if kind in ("modes", "constructed") and dec is None:
            raise ValueError(f"initial kind {kind!r} needs a decomposition")
        if kind == "modes":
            a = np.zeros(self.grid.num_nodes)
            coeffs = spec.get("coeffs", tuple(1.0 for _ in spec["modes"]))
            for k, c in zip(spec["modes"], coeffs):
                _, members = dec.clusters[k]
                a += c * dec.eigenvectors[:, members[0]]
            return a
        if kind == "constructed":
            theta = ThetaSpec(power=spec["theta_power"],
                              scale=spec.get("theta_scale", 1.0))
            return construct_initial_data(dec, theta, seed=self.seed,
                                          margin=spec.get("margin", 1.0))
        return _build_field(self.grid, spec)


def _build_field(grid: Grid, spec: dict) -> NDArray:
    kind = spec["kind"]
    if kind == "constant":
        return fields.constant(grid, spec["value"])
    if kind == "bump":
        return fields.bump(grid, spec.get("base", 0.0), spec["center"],
                           spec["width"], spec["height"])
    if kind == "blocks":
        groups = [(g[:grid.dim], g[grid.dim:2 * grid.dim], g[2 * grid.dim])
                  for g in spec["blocks"]]
        return fields.blocks(grid, spec.get("base", 1.0), groups)
    if kind == "annulus":
        inner, outer = spec["inner"], spec["outer"]
        return fields.annulus(grid, inner[:grid.dim], inner[grid.dim:],
                              outer[:grid.dim], outer[grid.dim:],
                              value=spec.get("value", 1.0))
    raise ValueError(f"unknown field kind {kind!r}")


def build_scenario(config: dict, seed: int) -> Scenario:
    if seed is None:
        raise ValueError("a seed is mandatory; entropy defaults are not allowed")
    g = config["grid"]
    grid = build_grid(g["dim"], g["extents"], g["counts"])
    diffusion = _build_field(grid, config["diffusion"])
    c1 = _build_field(grid, config["c1"])
    c2 = _build_field(grid, config["c2"])
    gamma = config["gamma"]
    span = gamma["span"]
    obs = build_boundary_mask(grid, gamma["face"],
                              None if span == "all" else span)
    return Scenario(config=config, seed=int(seed), grid=grid,
                    diffusion=diffusion, c_first=c1, c_second=c2,
                    observation=obs)


def scenario_from_file(path, seed: int) -> Scenario:
    return build_scenario(load_config(path), seed)


def scenario_from_text(text: str, seed: int) -> Scenario:
    return build_scenario(parse_config(text), seed)


@dataclass(frozen=True)
class ExperimentReport:
    kind: str
    digest: str
    passed: bool
    summary: tuple[tuple[str, str], ...]
    tables: tuple[tuple[str, str], ...]
    plot_script: str | None = None


def _sv(value) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return _fmt(value)
    return str(value)


def _operator_pair(scn: Scenario):
    """Both operators under one uniform coercive shift."""
    floor = scn.config["diffusion"]["floor"]
    op1 = assemble_operator(scn.grid, scn.diffusion, scn.c_first,
                            ellipticity_floor=floor)
    op2 = assemble_operator(scn.grid, scn.diffusion, scn.c_second,
                            ellipticity_floor=floor)
    shift = max(coercive_shift(op1), coercive_shift(op2))
    op1 = assemble_operator(scn.grid, scn.diffusion, scn.c_first, shift=shift,
                            ellipticity_floor=floor)
    op2 = assemble_operator(scn.grid, scn.diffusion, scn.c_second, shift=shift,
                            ellipticity_floor=floor)
    return op1, op2, shift


def _regions(scn: Scenario, initial: NDArray):
    sup = support_region(initial, scn.grid)
    act = active_boundary(initial, scn.observation)
    omega = reachable_region(sup, act)
    return sup, act, omega


def run_uniqueness_experiment(scn: Scenario) -> ExperimentReport:
    """Contrapositive test: a coefficient gap on the reachable region must
    show up in the boundary traces; a gap outside it is recorded without any
    claim (the statement is one-directional)."""
    op1, op2, shift = _operator_pair(scn)
    dec1 = eigendecompose(op1)
    dec2 = eigendecompose(op2)
    a = scn.initial_value(dec1)
    sup, act, omega = _regions(scn, a)
    times = scn.sample_times()
    u = solve_parabolic_spectral(dec1, a, times)
    v = solve_parabolic_spectral(dec2, a, times)
    tr_u = trace_on_gamma(u, scn.observation, times)
    tr_v = trace_on_gamma(v, scn.observation, times)
    gap = np.abs(tr_u.values - tr_v.values)
    discrepancy_series = gap.max(axis=1)
    discrepancy = float(gap.max())

    f = scn.c_second - scn.c_first
    quad = scn.grid.quad_weights()
    f_omega = float(np.sqrt(np.sum(quad[omega.mask] * f[omega.mask] ** 2)))
    f_complement = float(np.sqrt(np.sum(quad[~omega.mask] * f[~omega.mask] ** 2)))
    tol = scn.config["tolerances"]
    if f_omega <= tol["f_tol"] and f_complement <= tol["f_tol"]:
        category = "identical_coefficients"
    elif f_omega > tol["f_tol"] and discrepancy > tol["trace_tol"]:
        category = "separation_observed"
    elif f_omega > tol["f_tol"]:
        category = "violation"
    else:
        category = "theorem_silent"
    passed = category != "violation"

    disc_csv = io.StringIO()
    disc_csv.write("time,max_abs_gap\n")
    for t, d in zip(times, discrepancy_series):
        disc_csv.write(f"{_fmt(t)},{_fmt(d)}\n")
    summary = (
        ("kind", "uniqueness"),
        ("digest", scn.digest()),
        ("shift", _sv(shift)),
        ("discrepancy", _sv(discrepancy)),
        ("f_norm_on_reachable", _sv(f_omega)),
        ("f_norm_off_reachable", _sv(f_complement)),
        ("trace_tol", _sv(tol["trace_tol"])),
        ("f_tol", _sv(tol["f_tol"])),
        ("category", category),
        ("reachable_count", str(omega.count)),
        ("passed", _sv(passed)),
    )
    tables = (
        ("discrepancy_vs_time.csv", disc_csv.getvalue()),
        ("trace_first.csv", trace_to_csv(tr_u)),
        ("trace_second.csv", trace_to_csv(tr_v)),
        ("reachable_mask.csv", region_to_csv(omega)),
    )
    script = (
        "# gnuplot script: boundary discrepancy over time\n"
        "set datafile separator ','\n"
        "set logscale y\n"
        "set xlabel 'time'\n"
        "set ylabel 'max |trace gap|'\n"
        "plot 'discrepancy_vs_time.csv' every ::1 using 1:2 "
        "with linespoints title 'discrepancy'\n"
    )
    return ExperimentReport(kind="uniqueness", digest=scn.digest(),
                            passed=passed, summary=summary, tables=tables,
                            plot_script=script)


def _snap_times_to_steps(times: NDArray, dt: float) -> NDArray:
    snapped = np.unique(np.maximum(np.round(times / dt), 1.0)) * dt
    return snapped


def run_corollary_experiment(scn: Scenario) -> ExperimentReport:
    """Mode-series recovery from two independent solvers, then comparison.

    The first trace comes from the spectral solver, the second from the
    Crank-Nicolson stepper; with equal coefficients the recovered series
    must fully match, and the recovered rates are cross-checked against the
    eigensolver's cluster spectrum.
    """
    op1, op2, shift = _operator_pair(scn)
    dec1 = eigendecompose(op1)
    a = scn.initial_value(dec1)
    tcfg = scn.config["time"]
    times = _snap_times_to_steps(scn.sample_times(), tcfg["dt"])
    u = solve_parabolic_spectral(dec1, a, times)
    tr_u = trace_on_gamma(u, scn.observation, times)

    cn_times, cn_snaps = solve_parabolic_cn(op2, a, tcfg["dt"], float(times[-1]))
    idx = np.round(times / tcfg["dt"]).astype(int) - 1
    tr_v = trace_on_gamma(cn_snaps[idx], scn.observation, times)

    sep = scn.config["separation"]
    series_u = separate_modes(tr_u, max_modes=sep["max_modes"], tol=sep["tol"])
    series_v = separate_modes(tr_v, max_modes=sep["max_modes"], tol=sep["tol"])
    tol = scn.config["tolerances"]
    verdict = compare_mode_series(series_u, series_v,
                                  rate_tol=tol["rate_tol"] * 10.0,
                                  trace_tol=tol["trace_match_tol"])
    matched_clusters = match_to_spectrum(series_u, dec1, tol["rate_tol"])
    c_equal = bool(np.allclose(scn.c_first, scn.c_second, atol=1e-14))
    passed = verdict.full_match if c_equal else True
    reps = dec1.cluster_eigenvalues()
    rate_errors = [
        abs(series_u.rates[i] - reps[k]) / max(abs(reps[k]), 1.0)
        for i, k in enumerate(matched_clusters)
    ]
    summary = (
        ("kind", "corollary"),
        ("digest", scn.digest()),
        ("shift", _sv(shift)),
        ("coefficients_equal", _sv(c_equal)),
        ("modes_first", str(series_u.num_modes)),
        ("modes_second", str(series_v.num_modes)),
        ("matched_pairs", str(len(verdict.pairs))),
        ("unmatched", str(len(verdict.unmatched_first)
                          + len(verdict.unmatched_second))),
        ("full_match", _sv(verdict.full_match)),
        ("matched_clusters", ";".join(str(k) for k in matched_clusters)),
        ("max_rate_error", _sv(max(rate_errors) if rate_errors else 0.0)),
        ("passed", _sv(passed)),
    )
    tables = (
        ("trace_first.csv", trace_to_csv(tr_u)),
        ("trace_second.csv", trace_to_csv(tr_v)),
        ("modes_first.csv", mode_series_to_csv(series_u)),
        ("modes_second.csv", mode_series_to_csv(series_v)),
    )
    script = (
        "# gnuplot script: recovered mode rates\n"
        "set datafile separator ','\n"
        "set xlabel 'mode index'\n"
        "set ylabel 'decay rate'\n"
        "plot 'modes_first.csv' every ::1 using 0:1 with points "
        "title 'first solver', \\\n"
        "     'modes_second.csv' every ::1 using 0:1 with points "
        "title 'second solver'\n"
    )
    return ExperimentReport(kind="corollary", digest=scn.digest(),
                            passed=passed, summary=summary, tables=tables,
                            plot_script=script)


def _tube_for(scn: Scenario, omega, act):
    target_spec = scn.config["carleman"].get("target")
    coords = scn.grid.coords()
    if target_spec is None:
        center = 0.5 * np.asarray(scn.grid.extents)
    else:
        center = np.asarray(target_spec, dtype=float)
    inside = np.nonzero(omega.mask)[0]
    target = int(inside[np.argmin(
        np.sum((coords[inside] - center[None, :]) ** 2, axis=1))])
    return carve_tube(omega, act, target), target


def run_audit_campaign(scn: Scenario, which=("elliptic", "boundary",
                                             "parabolic")) -> tuple[dict, dict]:
    """Drive the requested audits; returns (reports, constants).

    Constants from the boundary audit (worst ratio, stabilization parameter,
    weight maximum on the observation set) feed the mode-bound chain. Zero
    requested samples yields an empty bundle.
    """
    cfg = scn.config["carleman"]
    samples = cfg["samples"]
    if samples == 0 or not which:
        return {}, {}
    op1, op2, shift = _operator_pair(scn)
    dec2 = eigendecompose(op2)
    a = scn.initial_value(eigendecompose(op1))
    sup, act, omega = _regions(scn, a)
    growth = cfg["growth_tol"]
    scan_samples = max(8, samples // 5)
    reports: dict[str, AuditReport] = {}
    constants: dict[str, float] = {}

    if "elliptic" in which:
        tube, target = _tube_for(scn, omega, act)
        d, weight = build_tube_weight(tube, act, scn.grid, lam=cfg["lam"])
        tau = scn.config["time"]["tau"]
        cut = build_cutoff(weight, target, tau)

        def run_elliptic(s_list, count):
            return audit_elliptic_carleman(
                op1, weight, cut.beta, sample_count=count, s_list=s_list,
                seed=scn.seed + 1, n_time=cfg["time_samples"], tau=tau)

        s0, _, _ = scan_stabilization(
            lambda sl: run_elliptic(sl, scan_samples), cfg["s_scan"], growth)
        reports["elliptic"] = run_elliptic((s0, 2 * s0, 4 * s0), samples)
        constants["elliptic_s0"] = s0

    dw = build_domain_weight(scn.grid, scn.observation, lam=cfg["lam"],
                             diffusion=scn.diffusion)
    if "boundary" in which:
        def run_boundary(s_list, count):
            return audit_boundary_carleman(
                op2, dw, scn.observation, dec2, sample_count=count,
                s_list=s_list, seed=scn.seed + 2)

        s0, _, _ = scan_stabilization(
            lambda sl: run_boundary(sl, scan_samples), cfg["s_scan"], growth)
        reports["boundary"] = run_boundary((s0, 2 * s0, 4 * s0), samples)
        constants["boundary_constant"] = reports["boundary"].constant
        constants["boundary_s_star"] = s0
        constants["obs_weight_max"] = reports["boundary"].extras["obs_weight_max"]

    if "parabolic" in which:
        pw = build_parabolic_weight(scn.grid, scn.observation,
                                    horizon=scn.config["time"]["horizon"],
                                    lam=cfg["lam"], diffusion=scn.diffusion)

        def run_parabolic(s_list, count):
            return audit_parabolic_carleman(
                op2, pw, scn.observation, dec2, sample_count=count,
                s_list=s_list, seed=scn.seed + 3,
                n_time=cfg["time_samples"])

        s0, _, _ = scan_stabilization(
            lambda sl: run_parabolic(sl, scan_samples), cfg["s_scan"], growth)
        reports["parabolic"] = run_parabolic((s0, 2 * s0, 4 * s0), samples)
        constants["parabolic_s0"] = s0
    return reports, constants


def audit_report_bundle(scn: Scenario, reports: dict,
                        constants: dict) -> ExperimentReport:
    growth = scn.config["carleman"]["growth_tol"]
    passed = all(r.stabilized(growth) for r in reports.values()) if reports else True
    summary = [("kind", "audit"), ("digest", scn.digest())]
    for name in sorted(reports):
        r = reports[name]
        summary.append((f"{name}_ratio_first", _sv(r.max_ratio[0])))
        summary.append((f"{name}_ratio_last", _sv(r.max_ratio[-1])))
        summary.append((f"{name}_stabilized", _sv(r.stabilized(growth))))
    for name in sorted(constants):
        summary.append((name, _sv(constants[name])))
    summary.append(("passed", _sv(passed)))
    tables = tuple(
        (f"audit_{name}.csv", audit_to_csv(reports[name]))
        for name in sorted(reports)
    )
    script = (
        "# gnuplot script: audit ratio curves\n"
        "set datafile separator ','\n"
        "set logscale x\n"
        "set xlabel 's'\n"
        "set ylabel 'worst ratio'\n"
        "plot " + ", \\\n     ".join(
            f"'audit_{name}.csv' every ::1 using 1:2 with linespoints "
            f"title '{name}'" for name in sorted(reports)) + "\n"
    ) if reports else None
    return ExperimentReport(kind="audit", digest=scn.digest(), passed=passed,
                            summary=tuple(summary), tables=tables,
                            plot_script=script)


def run_omega_experiment(scn: Scenario) -> ExperimentReport:
    op1, _, _ = _operator_pair(scn)
    kind = scn.config["initial"]["kind"]
    dec1 = eigendecompose(op1) if kind in ("modes", "constructed") else None
    a = scn.initial_value(dec1)
    sup, act, omega = _regions(scn, a)
    tables = [
        ("support_mask.csv", region_to_csv(sup)),
        ("active_boundary.csv", region_to_csv(act)),
        ("reachable_mask.csv", region_to_csv(omega)),
        ("reachable_ascii.txt", region_to_ascii(omega) + "\n"),
    ]
    tube_count = 0
    if scn.config["carleman"].get("target") is not None:
        tube, target = _tube_for(scn, omega, act)
        tables.append(("tube_mask.csv", region_to_csv(tube)))
        tables.append(("tube_ascii.txt", region_to_ascii(tube) + "\n"))
        tube_count = tube.count
    summary = (
        ("kind", "omega"),
        ("digest", scn.digest()),
        ("support_count", str(sup.count)),
        ("active_count", str(act.count)),
        ("reachable_count", str(omega.count)),
        ("tube_count", str(tube_count)),
        ("passed", "true"),
    )
    return ExperimentReport(kind="omega", digest=scn.digest(), passed=True,
                            summary=summary, tables=tuple(tables))


def run_decay_experiment(scn: Scenario) -> ExperimentReport:
    """Condition check on the scenario's initial data plus the audited
    per-mode bound chain between the two operators."""
    op1, op2, shift = _operator_pair(scn)
    dec1 = eigendecompose(op1)
    dec2 = eigendecompose(op2)
    a = scn.initial_value(dec1)
    dcfg = scn.config["decay"]
    theta = ThetaSpec(power=dcfg["theta_power"], scale=dcfg["theta_scale"])
    norms = mode_norms(dec1, a)
    floor = (NOISE_REL**2) * float(norms.sum())
    cond = check_condition(norms, dec1.cluster_eigenvalues(), theta,
                           dcfg["condition"], noise_floor_sq=floor)
    reports, constants = run_audit_campaign(scn, which=("boundary",))
    impl = verify_implication(
        dec1, dec2, a,
        audit_constant=constants["boundary_constant"],
        s_star=constants["boundary_s_star"],
        obs_weight_max=constants["obs_weight_max"],
        observation=scn.observation, sigma1=dcfg["sigma1"])
    passed = bool(cond.verdict and impl.verdict)
    summary = (
        ("kind", "decay"),
        ("digest", scn.digest()),
        ("condition", dcfg["condition"]),
        ("theta", theta.label()),
        ("condition_verdict", _sv(bool(cond.verdict))),
        ("condition_trend_slope", _sv(cond.trend_slope)),
        ("weighted_total", _sv(cond.total)),
        ("bound_constant", _sv(impl.constant)),
        ("bound_c1", _sv(impl.c1)),
        ("bound_c2", _sv(impl.c2)),
        ("all_bounds_hold", _sv(impl.all_bounds_hold)),
        ("implication_trend_slope", _sv(impl.trend_slope)),
        ("implication_verdict", _sv(impl.verdict)),
        ("passed", _sv(passed)),
    )
    tables = (
        ("decay_report.csv", decay_report_to_csv(cond)),
        ("implication.csv", implication_report_to_csv(impl)),
        ("audit_boundary.csv", audit_to_csv(reports["boundary"])),
    )
    return ExperimentReport(kind="decay", digest=scn.digest(), passed=passed,
                            summary=tuple(summary), tables=tables)


def theorem_consistency_monitor(reports) -> list[str]:
    """Digest list of uniqueness runs where a reachable-region coefficient
    gap failed to show in the traces (forbidden in the continuum; a red
    flag for the pipeline)."""
    violations = []
    for rep in reports:
        if rep.kind != "uniqueness":
            continue
        summary = dict(rep.summary)
        if summary.get("category") == "violation":
            violations.append(rep.digest)
    return violations


def emit_outputs(report: ExperimentReport, out_dir) -> list[tuple[str, str]]:
    """Write the report's CSV tables, summary, plot script, and a manifest
    of content hashes. Returns (filename, sha256) pairs."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        raise OSError(f"cannot create output directory {out}: {err}") from err
    files: dict[str, str] = {}
    buf = io.StringIO()
    buf.write("key,value\n")
    for key, value in report.summary:
        buf.write(f"{key},{value}\n")
    files["summary.csv"] = buf.getvalue()
    for name, content in report.tables:
        files[name] = content
    if report.plot_script:
        files["plots.gp"] = report.plot_script
    manifest = []
    for name in sorted(files):
        content = files[name]
        digest = hashlib.sha256(content.encode("utf-8")).hexdigest()
        manifest.append((name, digest))
        try:
            (out / name).write_text(content, encoding="utf-8")
        except OSError as err:
            raise OSError(f"cannot write {out / name}: {err}") from err
    manifest_text = "".join(f"{digest}  {name}\n" for name, digest in manifest)
    (out / "manifest.txt").write_text(manifest_text, encoding="utf-8")
    return manifest


__all__ = [
    "Scenario", "ExperimentReport", "build_scenario", "scenario_from_file",
    "scenario_from_text", "run_uniqueness_experiment",
    "run_corollary_experiment", "run_audit_campaign", "audit_report_bundle",
    "run_omega_experiment", "run_decay_experiment",
    "theorem_consistency_monitor", "emit_outputs",
]
