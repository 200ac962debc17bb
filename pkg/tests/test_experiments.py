import hashlib
from importlib.resources import files

import numpy as np
import pytest

from tracelab.experiments import (
    audit_report_bundle,
    build_scenario,
    emit_outputs,
    run_audit_campaign,
    run_corollary_experiment,
    run_decay_experiment,
    run_omega_experiment,
    run_uniqueness_experiment,
    scenario_from_file,
    scenario_from_text,
    theorem_consistency_monitor,
)

FIXTURES = files("tracelab") / "fixtures"


def fixture(name, seed):
    return scenario_from_file(str(FIXTURES / f"{name}.cfg"), seed)


def with_overrides(name, **pairs):
    """Fixture text with the given section_key=value lines replaced."""
    text = (FIXTURES / f"{name}.cfg").read_text()
    keys = {k.replace("_", ".", 1) for k in pairs}
    lines = [ln for ln in text.splitlines()
             if ln.split("=")[0].strip() not in keys]
    lines += [f"{k.replace('_', '.', 1)} = {v}" for k, v in pairs.items()]
    return "\n".join(lines) + "\n"


def test_seed_is_mandatory():
    from tracelab.config import parse_config

    cfg = parse_config("grid.dim = 1\ngrid.extents = 1.0\ngrid.counts = 10\n")
    with pytest.raises(ValueError, match="seed"):
        build_scenario(cfg, None)


def test_digest_depends_on_seed_and_config():
    s1 = fixture("uniqueness_baseline", 1)
    s2 = fixture("uniqueness_baseline", 2)
    s3 = fixture("uniqueness_gap_inside", 1)
    assert s1.digest() != s2.digest()
    assert s1.digest() != s3.digest()
    assert s1.digest() == fixture("uniqueness_baseline", 1).digest()


def test_uniqueness_baseline_clean():
    rep = run_uniqueness_experiment(fixture("uniqueness_baseline", 5))
    info = dict(rep.summary)
    assert info["category"] == "identical_coefficients"
    assert float(info["discrepancy"]) < 1e-9
    assert rep.passed


def test_uniqueness_gap_inside_separates():
    rep = run_uniqueness_experiment(fixture("uniqueness_gap_inside", 5))
    info = dict(rep.summary)
    assert info["category"] == "separation_observed"
    assert float(info["discrepancy"]) > 1e-6
    assert rep.passed


def test_uniqueness_gap_outside_is_theorem_silent():
    rep = run_uniqueness_experiment(fixture("uniqueness_gap_outside", 5))
    info = dict(rep.summary)
    assert info["category"] == "theorem_silent"
    assert float(info["f_norm_on_reachable"]) == 0.0
    assert float(info["f_norm_off_reachable"]) > 0.0
    assert rep.passed


def test_monitor_over_shipped_uniqueness_suite():
    reports = [
        run_uniqueness_experiment(fixture(name, 5))
        for name in ("uniqueness_baseline", "uniqueness_gap_inside",
                     "uniqueness_gap_outside")
    ]
    assert theorem_consistency_monitor(reports) == []


def test_corollary_equal_coefficients_full_match():
    rep = run_corollary_experiment(fixture("corollary_equal", 9))
    info = dict(rep.summary)
    assert info["full_match"] == "true"
    assert info["matched_clusters"] == "0;1;2"
    assert float(info["max_rate_error"]) < 1e-3
    assert rep.passed


def test_corollary_distinct_spectra_detected():
    text = (FIXTURES / "corollary_equal.cfg").read_text() + "\nc2.value = 5.0\n"
    scn = scenario_from_text(text, 9)
    rep = run_corollary_experiment(scn)
    info = dict(rep.summary)
    # shifted rates: nothing pairs at the tight rate tolerance
    assert info["full_match"] == "false"
    assert info["matched_pairs"] == "0"
    assert rep.passed  # no claim checked when coefficients differ


def test_omega_runs_and_reports_masks():
    rep = run_omega_experiment(fixture("example_enclosed_island", 3))
    names = [name for name, _ in rep.tables]
    assert "reachable_mask.csv" in names and "reachable_ascii.txt" in names
    info = dict(rep.summary)
    assert int(info["reachable_count"]) > 0


def test_audit_campaign_zero_samples_empty_bundle():
    scn = scenario_from_text(with_overrides("audit_default", carleman_samples=0),
                             seed=1)
    reports, constants = run_audit_campaign(scn)
    assert reports == {} and constants == {}
    bundle = audit_report_bundle(scn, reports, constants)
    assert bundle.passed and bundle.tables == ()


def test_audit_campaign_constants_reproducible():
    text = with_overrides("audit_default", carleman_samples=20)
    a = run_audit_campaign(scenario_from_text(text, 13), which=("boundary",))
    b = run_audit_campaign(scenario_from_text(text, 13), which=("boundary",))
    assert a[1] == b[1]
    assert a[0]["boundary"].max_ratio == b[0]["boundary"].max_ratio


def test_decay_experiment_passes():
    rep = run_decay_experiment(fixture("decay_default", 11))
    info = dict(rep.summary)
    assert info["condition_verdict"] == "true"
    assert info["all_bounds_hold"] == "true"
    assert rep.passed


def test_emit_outputs_manifest_and_determinism(tmp_path):
    rep = run_uniqueness_experiment(fixture("uniqueness_baseline", 5))
    man1 = emit_outputs(rep, tmp_path / "a")
    man2 = emit_outputs(rep, tmp_path / "b")
    assert man1 == man2
    for name, digest in man1:
        content = (tmp_path / "a" / name).read_bytes()
        assert hashlib.sha256(content).hexdigest() == digest
    names = [n for n, _ in man1]
    assert "summary.csv" in names and "plots.gp" in names
    assert (tmp_path / "a" / "manifest.txt").exists()


def test_emit_outputs_minimal_report(tmp_path):
    from tracelab.experiments import ExperimentReport

    rep = ExperimentReport(kind="omega", digest="x", passed=True,
                           summary=(("kind", "omega"),), tables=())
    manifest = emit_outputs(rep, tmp_path)
    assert [n for n, _ in manifest] == ["summary.csv"]
