import numpy as np
import pytest

from tracelab import fields
from tracelab.decay import (
    ThetaSpec,
    check_condition,
    construct_initial_data,
    decay_report_to_csv,
    envelope_constant,
    implication_report_to_csv,
    superlinearity_proxy,
    trend_slope,
    verify_implication,
)
from tracelab.grids import build_boundary_mask, build_grid
from tracelab.operators import assemble_operator, coercive_shift, with_shift
from tracelab.spectral import eigendecompose, mode_norms


@pytest.fixture(scope="module")
def setup():
    g = build_grid(1, [1.0], [50])
    op = assemble_operator(g, fields.constant(g, 1.0), fields.constant(g, 0.0))
    op = with_shift(op, coercive_shift(op))
    dec = eigendecompose(op)
    obs = build_boundary_mask(g, "xlo")
    return g, op, dec, obs


def test_admissible_theta_with_decaying_norms_passes(setup):
    g, op, dec, obs = setup
    lam = dec.cluster_eigenvalues()
    norms_sq = np.exp(-lam**0.9)
    rep = check_condition(norms_sq, lam, ThetaSpec(power=0.7), "superlinear")
    assert rep.verdict
    assert rep.trend_slope < 0
    assert np.all(np.diff(rep.partial_sums) >= 0)


def test_critical_exponent_rejected(setup):
    g, op, dec, obs = setup
    lam = dec.cluster_eigenvalues()
    with pytest.raises(ValueError, match="critical"):
        check_condition(np.exp(-lam), lam, ThetaSpec(power=2.0 / 3.0), "superlinear")
    assert not superlinearity_proxy(ThetaSpec(power=2.0 / 3.0), lam.max())
    assert superlinearity_proxy(ThetaSpec(power=0.7), lam.max())


def test_finite_mode_combination_passes_every_admissible_theta(setup):
    g, op, dec, obs = setup
    lam = dec.cluster_eigenvalues()
    norms_sq = np.zeros(lam.size)
    norms_sq[:4] = [1.0, 0.5, 0.2, 0.1]
    for p in (0.7, 0.8, 1.0):
        rep = check_condition(norms_sq, lam, ThetaSpec(power=p), "superlinear")
        assert rep.verdict


def test_condition_monotonicity_in_theta(setup):
    # pointwise smaller theta gives a smaller weighted sum
    g, op, dec, obs = setup
    lam = dec.cluster_eigenvalues()
    norms_sq = np.exp(-2.0 * lam**0.8)
    small = check_condition(norms_sq, lam, ThetaSpec(power=0.7, scale=0.5),
                            "superlinear")
    big = check_condition(norms_sq, lam, ThetaSpec(power=0.75), "superlinear")
    assert big.verdict and small.verdict
    assert small.total <= big.total


def test_sqrt_vs_linear_weight_ordering(setup):
    # exp(sigma1 sqrt(lam)) <= exp(sigma lam) termwise once sqrt(lam) <= lam
    g, op, dec, obs = setup
    lam = dec.cluster_eigenvalues()
    norms_sq = np.exp(-2.0 * lam)
    sqrt_rep = check_condition(norms_sq, lam, ThetaSpec(power=0.5), "sqrt")
    linear_rep = check_condition(norms_sq, lam, ThetaSpec(power=1.0), "linear")
    assert np.all(sqrt_rep.weighted_terms <= linear_rep.weighted_terms + 1e-300)
    assert sqrt_rep.total <= linear_rep.total
    assert sqrt_rep.verdict and linear_rep.verdict


def test_construct_initial_data_deterministic_and_compliant(setup):
    g, op, dec, obs = setup
    theta = ThetaSpec(power=0.7)
    a1 = construct_initial_data(dec, theta, seed=42)
    a2 = construct_initial_data(dec, theta, seed=42)
    assert np.array_equal(a1, a2)
    a3 = construct_initial_data(dec, theta, seed=43)
    assert not np.array_equal(a1, a3)
    # computed projections need the rounding-noise floor: coefficients far
    # below machine precision come back as noise and would poison the sum
    norms = mode_norms(dec, a1)
    floor = 1e-26 * norms.sum()
    rep = check_condition(norms, dec.cluster_eigenvalues(), theta,
                          "superlinear", noise_floor_sq=floor)
    assert rep.verdict
    unfloored = check_condition(norms, dec.cluster_eigenvalues(), theta,
                                "superlinear")
    assert not unfloored.verdict  # noise amplification, honestly reported


def test_constructed_norms_match_coefficients(setup):
    g, op, dec, obs = setup
    theta = ThetaSpec(power=0.7)
    a = construct_initial_data(dec, theta, seed=7)
    lam = dec.cluster_eigenvalues()
    rng = np.random.default_rng(7)
    draws = 0.5 + 0.5 * rng.random(dec.num_clusters)
    expected = (np.exp(-(theta(lam) + lam ** (2.0 / 3.0)) / 2.0) * draws) ** 2
    got = mode_norms(dec, a)
    assert np.allclose(got, expected, atol=1e-10)


def test_envelope_constant_bounds_on_grid():
    c1, sigma1 = 0.8, 1.0
    eta_max = 1000.0
    c2 = envelope_constant(c1, sigma1, eta_max)
    grid = np.geomspace(1.0, eta_max, 512)
    lhs = grid**2 * np.exp(c1 * grid ** (2.0 / 3.0) + sigma1 * np.sqrt(grid))
    rhs = c2 * np.exp(c2 * grid ** (2.0 / 3.0))
    assert np.all(lhs <= rhs * (1 + 1e-9))


def test_trend_slope_of_growing_terms_positive():
    terms = np.exp(np.linspace(0, 5, 20))
    assert trend_slope(terms) > 0
    assert trend_slope(np.exp(-np.linspace(0, 5, 20))) < 0


def test_verify_implication_identical_operators(setup):
    g, op, dec, obs = setup
    a = construct_initial_data(dec, ThetaSpec(power=0.7), seed=11)
    rep = verify_implication(dec, dec, a, audit_constant=0.7, s_star=2.0,
                             obs_weight_max=0.11, observation=obs, sigma1=1.0)
    assert rep.all_bounds_hold
    assert rep.verdict
    assert rep.trend_slope < 0
    assert rep.c1 == pytest.approx(2.0 * rep.s_star * 0.11)
    # direct weighted sum is below the bounded one (the bound has margin)
    assert rep.weighted_sum_direct <= rep.weighted_sum_bound


def test_verify_implication_single_mode(setup):
    g, op, dec, obs = setup
    a = dec.eigenvectors[:, 2].copy()
    rep = verify_implication(dec, dec, a, audit_constant=0.7, s_star=2.0,
                             obs_weight_max=0.11, observation=obs)
    active = [r for r in rep.rows if r.first_norm_sq > 1e-20]
    assert len(active) == 1
    assert active[0].holds
    # exact scaling of the threshold parameter, non-negative bound rows
    for r in rep.rows:
        assert r.s_k == rep.s_star * r.eigenvalue ** (2.0 / 3.0)
        assert r.bound >= 0.0


def test_verify_implication_requires_constants(setup):
    g, op, dec, obs = setup
    a = construct_initial_data(dec, ThetaSpec(power=0.7), seed=1)
    with pytest.raises(ValueError, match="constants"):
        verify_implication(dec, dec, a, audit_constant=0.0, s_star=2.0,
                           obs_weight_max=0.1, observation=obs)


def test_verify_implication_rejects_mismatched_spectra(setup):
    g, op, dec, obs = setup
    op2 = assemble_operator(g, fields.constant(g, 1.0), fields.constant(g, -30.0))
    dec2 = eigendecompose(with_shift(op2, coercive_shift(op2)))
    a = construct_initial_data(dec, ThetaSpec(power=0.7), seed=1)
    with pytest.raises(ValueError, match="match"):
        verify_implication(dec, dec2, a, audit_constant=0.7, s_star=2.0,
                           obs_weight_max=0.1, observation=obs)


def test_csv_outputs(setup):
    g, op, dec, obs = setup
    lam = dec.cluster_eigenvalues()
    rep = check_condition(np.exp(-lam**0.9), lam, ThetaSpec(power=0.7),
                          "superlinear")
    text = decay_report_to_csv(rep)
    assert text.splitlines()[0] == "mode,weighted_term,partial_sum"
    assert text.strip().splitlines()[-1].startswith("summary,")
    a = construct_initial_data(dec, ThetaSpec(power=0.7), seed=11)
    irep = verify_implication(dec, dec, a, audit_constant=0.7, s_star=2.0,
                              obs_weight_max=0.11, observation=obs)
    itext = implication_report_to_csv(irep)
    assert itext.splitlines()[0].startswith("eigenvalue,")
    assert itext.strip().splitlines()[-1].startswith("summary,")
