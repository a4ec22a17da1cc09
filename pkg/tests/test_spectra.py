import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from deul.damping import ConfigError, DampingLaw
from deul.spectra import (
    NormSeries,
    expected_slopes,
    evolve_norms,
    fit_slope,
    l1hat_norm,
    l2_norm,
    make_profile,
    physical_l1_norm,
    radial_nodes,
    smooth_cutoff,
    sphere_area,
    split,
)

LAW = DampingLaw(1.0, 0.5)


def dense_oracle(f, n, a=0.0, k_max=40.0, m=400_001):
    # trapezoid on a uniform grid, independent of the Gauss panels
    k = np.linspace(0.0, k_max, m)
    y = k ** (2 * a + n - 1) * f(k) ** 2
    return math.sqrt(sphere_area(n) * np.sum((y[1:] + y[:-1]) / 2) * (k[1] - k[0]))


def test_sphere_area():
    assert sphere_area(2) == pytest.approx(2 * math.pi, rel=1e-15)
    assert sphere_area(3) == pytest.approx(4 * math.pi, rel=1e-15)


def test_hat_values():
    p = make_profile("hat", R=1.0)
    assert smooth_cutoff(0.5, 1.0) == 1.0
    assert smooth_cutoff(2.5, 1.0) == 0.0
    assert np.all(np.diff(smooth_cutoff(np.linspace(1.0, 2.0, 50), 1.0)) <= 0)
    assert p.v.max() == 1.0


def test_gaussian_l2_norm():
    p = make_profile("gaussian", n=2, sigma=1.0)
    val = l2_norm(p.nodes, p.weights, p.v, 2)
    assert val == pytest.approx(math.sqrt(math.pi), rel=1e-10)
    assert val == pytest.approx(dense_oracle(lambda k: np.exp(-k * k / 2), 2), rel=1e-6)


def test_gaussian_derivative_norm_in_three_dimensions():
    p = make_profile("gaussian", n=3, sigma=1.0)
    val = l2_norm(p.nodes, p.weights, p.v, 3, 1.0)
    assert val == pytest.approx(dense_oracle(lambda k: np.exp(-k * k / 2), 3, 1.0), rel=1e-6)


def test_zero_profile_norms_vanish():
    nodes, weights = radial_nodes()
    z = np.zeros_like(nodes)
    assert l2_norm(nodes, weights, z, 2) == 0.0
    assert l1hat_norm(nodes, weights, z, 2) == 0.0


@settings(max_examples=30, deadline=None)
@given(st.floats(-10.0, 10.0), st.floats(0.0, 2.0))
def test_l2_norm_is_homogeneous(c, a):
    p = make_profile("hat", R=0.5)
    base = l2_norm(p.nodes, p.weights, p.v, 2, a)
    assert l2_norm(p.nodes, p.weights, c * p.v, 2, a) == pytest.approx(abs(c) * base, rel=1e-13, abs=1e-300)


def test_l1hat_equals_value_at_origin():
    # exp(-k^2/2) is the transform of exp(-|x|^2/2), which is 1 at the origin
    p = make_profile("gaussian", n=2)
    assert l1hat_norm(p.nodes, p.weights, p.v, 2) == pytest.approx(1.0, rel=1e-10)


def test_physical_l1_norm_of_gaussian():
    p = make_profile("gaussian", n=2, k_max=12.0, n_nodes=320, dk_max=0.05)
    assert physical_l1_norm(p.nodes, p.weights, p.v, 2) == pytest.approx(2 * math.pi, rel=1e-4)


def test_split_is_a_partition():
    p = make_profile("gaussian", n=2)
    lo, hi = split(p, 0.25)
    assert np.max(np.abs(lo.v + hi.v - p.v)) <= 1e-14
    q = make_profile("hat", R=0.1)
    assert np.all(split(q, 0.2)[1].v == 0)


def test_split_disjoint_supports_pythagoras():
    p = make_profile("hat", R=0.1)
    lo, hi = split(p, 0.2)
    n = [l2_norm(x.nodes, x.weights, x.v, 2) for x in (p, lo, hi)]
    assert n[0] ** 2 == pytest.approx(n[1] ** 2 + n[2] ** 2, rel=1e-12)


def test_node_refinement_is_converged():
    p1 = make_profile("hat", R=0.25)
    p2 = make_profile("hat", R=0.25, n_nodes=800, dk_max=0.005)
    for a in (0.0, 1.0, 2.0):
        assert l2_norm(p1.nodes, p1.weights, p1.v, 2, a) == pytest.approx(l2_norm(p2.nodes, p2.weights, p2.v, 2, a), rel=1e-6)


def test_bad_profile_kind():
    with pytest.raises(ConfigError):
        make_profile("annulus")
    with pytest.raises(ConfigError):
        radial_nodes(k_min=0.0)


def test_fit_slope_exact_power():
    t = np.geomspace(1e2, 1e4, 20)
    fit = fit_slope(NormSeries("x", t, t ** -0.75), (1e2, 1e4))
    assert fit.slope == pytest.approx(-0.75, abs=1e-12)
    assert fit.r2 == pytest.approx(1.0)
    assert fit_slope(NormSeries("c", t, np.full_like(t, 3.0)), (1e2, 1e4)).slope == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ConfigError):
        fit_slope(NormSeries("x", t, t), (1.0, 2.0))


def test_evolution_at_start_returns_initial_norms():
    p = make_profile("hat", R=0.25)
    out = evolve_norms(p, LAW, [0.0, 1.0], orders=(0.0, 1.0))
    assert out["v"].value[0] == pytest.approx(l2_norm(p.nodes, p.weights, p.v, 2), rel=1e-12)
    assert out["u"].value[0] == 0.0


def test_decay_rates_of_hat_data():
    p = make_profile("hat", R=0.25)
    t = np.geomspace(1e2, 1e4, 25)
    out = evolve_norms(p, LAW, t, orders=(0.0,), l1hat=True)
    v_rate, u_rate = expected_slopes(2, 0.5)
    sv = fit_slope(out["v"], (1e2, 1e4)).slope
    su = fit_slope(out["u"], (1e2, 1e4)).slope
    assert sv == pytest.approx(v_rate(0), abs=0.03)
    assert su == pytest.approx(u_rate(0), abs=0.03)
    assert su <= sv - 0.25 + 0.05
    assert fit_slope(out["v_l1hat"], (1e2, 1e4)).slope == pytest.approx(-1.5, abs=0.05)
