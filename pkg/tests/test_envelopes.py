import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from deul.damping import ConfigError, DampingLaw
from deul.envelopes import (
    ProbeSet,
    block_norms,
    cancellation_curve,
    check_cancellation,
    check_integral_lemma,
    check_phi_lower,
    check_phi_upper,
    elliptic_probes,
    min_integral_bound,
    write_reports,
)
from deul.propagator import solve_multipliers
from deul.spectra import l2_norm, make_profile, split
from deul.zones import ZoneConfig, classify_codes

LAW = DampingLaw(1.0, 0.5)
CFG = ZoneConfig.default(LAW)
CONST = DampingLaw(2.0, 0.0)


def test_v_second_multiplier_floor_at_zero_frequency():
    mu = CONST.mu
    t = np.linspace(math.log(2) / mu, 20.0, 30)
    m = solve_multipliers("V", CONST, 0.0, 0.0, t)
    np.testing.assert_allclose(m.phi2, (1 - np.exp(-mu * t)) / mu, rtol=1e-9)
    assert np.all(m.phi2 >= 1 / (2 * mu) - 1e-12)


def test_u_second_multiplier_tracks_inverse_damping():
    t = np.array([1e3, 1e4])
    m = solve_multipliers("U", LAW, 0.0, 10.0, t)
    ratio = m.phi2 * LAW.b(t)
    assert abs(ratio[-1] - 1) < abs(ratio[0] - 1) < 0.02


def test_elliptic_probes_stay_elliptic():
    p = elliptic_probes("V", LAW, CFG, seed=3, rows=6)
    for k, g in zip(p.ks, p.ts):
        assert np.all(classify_codes(g, k, "V", LAW, CFG) == 3)
    assert p.train.sum() == 3


def test_probe_sets_are_seeded():
    a = elliptic_probes("U", LAW, CFG, seed=5, rows=4)
    b = elliptic_probes("U", LAW, CFG, seed=5, rows=4)
    assert np.array_equal(a.ts, b.ts) and np.array_equal(a.train, b.train)


@pytest.mark.parametrize("fam", ["V", "U"])
def test_elliptic_upper_envelopes(fam):
    reps = check_phi_upper(fam, "ell", LAW, CFG)
    for r in reps:
        assert r.passed, r.claim
        assert r.max_ratio <= 1.0


def test_hyperbolic_probe():
    ts = np.concatenate([[0.0], np.geomspace(0.1, 1e3, 15)])
    probes = ProbeSet(np.array([5.0, 3.0]), np.zeros(2), np.vstack([ts, ts]), np.array([True, False]), "k = 5 and 3")
    (rep,) = check_phi_upper("V", "hyp", LAW, CFG, probes, eps_hyp=0.05)
    assert rep.passed and rep.max_ratio <= 1.0


def test_mixed_case_is_v_only():
    with pytest.raises(ConfigError):
        check_phi_upper("U", "mixed", LAW, CFG)
    with pytest.raises(ConfigError):
        check_phi_upper("V", "bogus", LAW, CFG)


def test_lower_envelopes_have_positive_floor():
    probes = elliptic_probes("V", LAW, CFG, seed=2, s_min=64.0, min_gap=True)
    for r in check_phi_lower("V", LAW, CFG, 64.0, probes):
        assert r.min_ratio > 0
        assert r.passed, r.claim


def test_lower_probes_must_start_after_t0():
    probes = elliptic_probes("V", LAW, CFG, seed=2, rows=4, s_min=20.0)
    with pytest.raises(ConfigError):
        check_phi_lower("V", LAW, CFG, 1e4, probes)


def test_cancellation_exact_at_zero_frequency():
    ts = np.linspace(5.0, 20.0, 7)
    cur = cancellation_curve(CONST, 0.0, 5.0, ts)
    np.testing.assert_allclose(cur["combination"], np.exp(-2.0 * (ts - 5.0)), rtol=1e-8, atol=1e-14)
    np.testing.assert_allclose(cur["phi1"], 1.0, rtol=1e-9)


def test_cancellation_report_details():
    rep = check_cancellation(LAW, CFG, k=1e-3, s=100.0)
    d = rep.details
    assert d["k0_abs_error"] <= 1e-10
    # the residual plateau sits at the k^2 / b(s) term of the envelope
    assert d["end_ratio_over_k2_bs2"] == pytest.approx(1.0, rel=0.2)
    assert d["improvement_factor_at_end"] > 100


def test_integral_at_zero():
    bound, val = min_integral_bound(1.0, 0.5, LAW, 0.0)
    assert val == 0.0 and bound > 0


def test_integral_quadrature_against_dense_trapezoid():
    t = 10.0
    _, val = min_integral_bound(2.0, 0.5, CONST, t)
    # independent oracle: the integrand is smooth and bounded on [0, t]
    s = np.linspace(0.0, t, 2_000_001)
    y = (1 + t - s) ** -2.0 * (1 + s) ** -0.5
    ref = np.sum((y[1:] + y[:-1]) / 2) * (s[1] - s[0])
    assert val == pytest.approx(ref, rel=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.1, 0.9), st.floats(1.0, 1e4))
def test_regime_boundary_continuity(gamma_exp, t):
    law = DampingLaw(1.0, 0.0)
    d = 1e-9
    below, _ = min_integral_bound(1.0 - d, gamma_exp, law, 0.0)
    at = min_integral_bound(1.0, gamma_exp, law, t)[0]
    below = min_integral_bound(1.0 - d, gamma_exp, law, t)[0]
    above = min_integral_bound(1.0 + d, gamma_exp, law, t)[0]
    log = math.log(math.e + t)
    assert below == pytest.approx(at / log, rel=1e-6)
    assert above == pytest.approx(at / log, rel=1e-6)


@pytest.mark.parametrize(
    "beta,gamma_exp,variant,k,lam",
    [
        (2.0, 2.0, "basic", 0.0, 0.0),
        (1.0, 0.5, "basic", 0.0, 0.0),
        (0.5, 0.5, "basic", 0.0, 0.0),
        (0.5, 0.5, "basic", 0.0, 0.5),
        (1.0, 0.5, "gamma", 1.0, 0.5),
    ],
)
def test_integral_lemma_regimes(beta, gamma_exp, variant, k, lam):
    rep = check_integral_lemma(beta, gamma_exp, DampingLaw(1.0, lam), variant, k)
    assert rep.passed, rep.details


def test_integral_rejects_bad_exponents():
    with pytest.raises(ConfigError):
        min_integral_bound(0.0, 1.0, LAW, 1.0)
    with pytest.raises(ConfigError):
        min_integral_bound(1.0, 1.0, LAW, 1.0, variant="nope")


def test_blocks_act_as_identity_at_start():
    prof = make_profile("hat", R=0.25, n_nodes=48, dk_max=0.1)
    norms, _ = block_norms(LAW, prof, [10.0], [10.0], orders=(0,))
    base = l2_norm(prof.nodes, prof.weights, prof.v, 2)
    assert norms[0, 0, 0, 0, 0] == pytest.approx(base, rel=1e-12)
    assert norms[0, 0, 1, 1, 0] == pytest.approx(base, rel=1e-12)
    assert norms[0, 0, 0, 1, 0] == 0.0 and norms[0, 0, 1, 0, 0] == 0.0


def test_high_frequency_data_decay_fast():
    _, high = split(make_profile("hat", R=4.0, n_nodes=48, k_max=10.0, dk_max=0.1), 2.0)
    norms, _ = block_norms(LAW, high, [0.0], [0.0, 10.0, 100.0], orders=(0,))
    g11 = norms[0, :, 0, 0, 0]
    assert g11[2] / g11[0] < math.exp(-(0.5 - 0.05) * LAW.integral_b(0.0, 100.0))


def test_reports_serialise(tmp_path):
    rep = check_integral_lemma(1.0, 0.5, LAW, "basic")
    write_reports(tmp_path / "r.json", [rep])
    data = json.loads((tmp_path / "r.json").read_text())
    assert data[0]["claim"] == rep.claim and data[0]["passed"] == rep.passed
