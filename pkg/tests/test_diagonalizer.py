import numpy as np
import pytest
from scipy.integrate import quad

from deul.damping import ConfigError, DampingLaw
from deul.diagonalizer import (
    E_LIMIT,
    M,
    M_INV,
    build_frame,
    equivalence_check,
    multipliers_from_E,
    q_decay_exponent,
    reconstruct_E,
    solve_q,
)
from deul.propagator import solve_multipliers

LAW = DampingLaw(1.0, 0.5)
CONST = DampingLaw(2.0, 0.0)


def test_m_inverse():
    np.testing.assert_allclose(M @ M_INV, np.eye(2), atol=1e-15)


def test_conjugation_identity():
    fr = build_frame(np.array([100.0, 1e3]), 0.001, "V", LAW)
    lhs = fr.A
    rhs = M @ (fr.D + fr.R) @ M_INV
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * np.max(np.abs(lhs))


@pytest.mark.parametrize("fam", ["V", "U"])
def test_commutator_identity(fam):
    fr = build_frame(100.0, 0.001, fam, LAW)
    N = fr.N1 - np.eye(2)
    resid = N @ fr.D - fr.D @ N - (fr.R - fr.F0)
    assert np.max(np.abs(resid)) <= 1e-12


def test_constant_symbol_has_trivial_frame():
    fr = build_frame(np.array([1.0, 50.0]), 0.0, "V", CONST)
    assert np.all(fr.N1 == np.eye(2))
    assert np.all(fr.R == 0) and np.all(fr.R1 == 0)


def test_refinement_decay_exponents():
    ts = np.array([1e2, 1e3, 1e4])
    fr = build_frame(ts, 0.001, "V", LAW)
    n_max = np.max(np.abs(fr.N1 - np.eye(2)), axis=(1, 2))
    r_max = np.max(np.abs(fr.R1), axis=(1, 2))
    assert np.polyfit(np.log1p(ts), np.log(n_max), 1)[0] == pytest.approx(-0.5, abs=0.05)
    assert np.polyfit(np.log1p(ts), np.log(r_max), 1)[0] == pytest.approx(-1.5, abs=0.1)


def test_frame_rejects_non_elliptic_points():
    with pytest.raises(ConfigError):
        build_frame(100.0, 5.0, "V", LAW)


def test_q_at_start_is_identity():
    vq = solve_q("V", LAW, 0.001, 100.0, 100.0)
    assert np.array_equal(vq.Q, np.eye(2))
    E, _ = reconstruct_E("V", LAW, 0.001, 100.0, 100.0)
    np.testing.assert_allclose(E, np.eye(2), atol=1e-15)


def test_q_equals_h_without_refinement_term():
    vq = solve_q("V", CONST, 0.0, 0.0, 5.0)
    assert np.max(np.abs(vq.Q - vq.H)) == 0.0


def test_picard_bound():
    k, s, t = 0.001, 100.0, 400.0
    vq = solve_q("V", LAW, k, s, t)
    r1 = lambda x: float(np.max(np.abs(build_frame(x, k, "V", LAW).R1)))
    integral, _ = quad(r1, s, t, epsrel=1e-10)
    assert np.max(np.abs(vq.Q - vq.H)) <= np.expm1(integral)
    assert vq.residual <= 1e-12


def test_q_minus_h_decays_in_s():
    slope, _ = q_decay_exponent("V", LAW, 0.001, np.array([100.0, 200.0, 400.0, 800.0]))
    assert slope == pytest.approx(-0.5, abs=0.1)


def test_equivalence_constant_coefficients():
    assert equivalence_check("V", CONST, 0.0, 0.0, 3.0) <= 1e-10


def test_equivalence_trivial_interval():
    assert equivalence_check("V", LAW, 0.001, 100.0, 100.0) == 0.0


@pytest.mark.parametrize("fam", ["V", "U"])
def test_equivalence_standard_probe(fam):
    assert equivalence_check(fam, LAW, 1e-3, 100.0, 400.0) <= 1e-5


def test_terminal_right_frame_is_worse():
    k, s, t = 1e-3, 20.0, 400.0
    from deul.diagonalizer import direct_E

    Ed = direct_E("V", LAW, k, s, t)
    good, _ = reconstruct_E("V", LAW, k, s, t)
    bad, _ = reconstruct_E("V", LAW, k, s, t, right_frame="terminal")
    assert np.max(np.abs(good - Ed)) < np.max(np.abs(bad - Ed))


def test_multipliers_from_fundamental_matrix():
    k, s, t = 1e-3, 100.0, 400.0
    phi1, phi2 = multipliers_from_E("V", LAW, k, s, t)
    m = solve_multipliers("V", LAW, k, s, [t])
    assert phi1 == pytest.approx(m.phi1[0], rel=1e-6)
    assert phi2 == pytest.approx(m.phi2[0], rel=1e-6)


def test_normalised_matrix_approaches_limit():
    Et, _ = reconstruct_E("V", LAW, 1e-3, 400.0, 1600.0, normalized=True)
    assert np.max(np.abs(Et - E_LIMIT)) < 1.0 / 16
