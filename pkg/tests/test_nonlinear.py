import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from deul.damping import ConfigError
from deul.nonlinear import (
    ENERGY_CONSTANT,
    EulerParams,
    Grid,
    SolverConfig,
    bump,
    data_profile,
    energy_check,
    energy_order,
    init_field,
    linear_compare,
    load_config,
    mass,
    mass_drift,
    order_check,
    output_times,
    parse_config,
    read_snapshot,
    run,
    write_snapshot,
)

P = EulerParams()
SMALL = SolverConfig(L=64.0, N=64, T=4.0, dt=0.2, eps=0.05, cadence=2.0, startup=0.0)


def test_bump_profile():
    assert bump(0.0) == 1.0
    assert bump(1.0) == 0.0 and bump(-1.5) == 0.0
    assert 0 < bump(0.5) < 1


def test_initial_peak_is_amplitude():
    f = init_field(P, SMALL)
    assert f.v.max() == pytest.approx(SMALL.eps, rel=1e-12)
    assert np.all(f.u1 == 0) and np.all(f.u2 == 0)


def test_plancherel_weights():
    g = Grid(32.0, 32)
    rng = np.random.default_rng(0)
    f = rng.standard_normal((32, 32))
    assert g.norm2(g.fwd(f)) == pytest.approx(np.sum(f ** 2) * g.dx ** 2, rel=1e-12)


def test_mass_matches_radial_quadrature():
    # dx ~ 0.2; at dx ~ 0.4 the bump edge limits the trapezoid sum to ~3e-7
    cfg = replace(SMALL, L=100.0, N=512, T=2.0, dt=0.1)
    f = init_field(P, cfg)
    ref, _ = quad(lambda r: (P.density(data_profile(np.array(r), cfg)) - 1.0) * 2 * math.pi * r, 0.0, cfg.r0, epsabs=0, epsrel=1e-13, limit=200)
    assert mass(P, f) == pytest.approx(ref, rel=1e-10)


def test_zero_state_stays_zero():
    res = run(P, replace(SMALL, kind="zero"))
    assert np.all(res.final.stack() == 0)
    assert np.all(res.energy == 0)


def test_real_fields_keep_hermitian_symmetry():
    res = run(P, SMALL)
    col = res.final.V[:, 0]
    np.testing.assert_allclose(col[1:], np.conj(col[1:][::-1]), atol=1e-14 * np.abs(col).max())


def test_mass_is_conserved():
    cfg = replace(SMALL, N=256, dt=0.05)
    res = run(P, cfg)
    assert mass_drift(P, res, init_field(P, cfg)) <= 1e-8


def test_linear_flow_consistency():
    cfg = SolverConfig(L=200.0, N=64, T=4.0, dt=0.02, eps=0.05, cadence=2.0, startup=0.0, nonlinear=False)
    cmp = linear_compare(P, cfg)
    assert np.max(cmp.ratio) <= 1e-8


def test_rk4_order():
    cfg = SolverConfig(L=32.0, N=32, T=2.0, dt=0.2, eps=0.05, cadence=2.0, startup=0.0)
    assert 12 <= order_check(P, cfg, (0.2, 0.1, 0.05)) <= 20


def test_energy_ledger_at_small_amplitude():
    res = run(P, SMALL)
    ok, margin = energy_check(res)
    assert ok and margin == pytest.approx(ENERGY_CONSTANT - np.max((res.energy + res.dissipation) / res.energy[0]))


def test_energy_order():
    assert energy_order(2) == 4


def test_schedule_covers_horizon():
    cfg = SolverConfig(T=12.0, dt=0.5, startup=2.0, refine=4, L=200.0, N=512)
    ticks = cfg.schedule()
    assert sum(ticks) * cfg.dt / cfg.refine == pytest.approx(cfg.T)
    assert ticks[:16] == [1] * 16


def test_output_times():
    assert output_times(SolverConfig(T=5.0, cadence=2.0, dt=0.125)).tolist() == [0.0, 2.0, 4.0, 5.0]


def test_snapshot_round_trip(tmp_path):
    f = run(P, SMALL).final
    path = tmp_path / "snap.bin"
    write_snapshot(path, f)
    L, t, v, u1, u2 = read_snapshot(path)
    assert (L, t) == (SMALL.L, SMALL.T)
    assert np.array_equal(v, f.v) and np.array_equal(u1, f.u1) and np.array_equal(u2, f.u2)


def test_snapshot_rejects_garbage(tmp_path):
    p = tmp_path / "bad.bin"
    p.write_bytes(b"NOPE")
    with pytest.raises(ConfigError):
        read_snapshot(p)


@pytest.mark.parametrize(
    "change",
    [
        {"dt": 1.0},  # CFL
        {"N": 100},
        {"eps": 0.2},
        {"T": 90.0},  # beyond the no-wrap window
        {"r0": 60.0},
        {"kind": "vortex"},
        {"T": 4.05},
    ],
)
def test_invalid_configs(change):
    with pytest.raises(ConfigError):
        replace(SolverConfig(), **change).validate()


def test_default_config_is_valid():
    SolverConfig().validate()


def test_parse_config():
    params, cfg = parse_config({"L": "100", "N": "256", "T": "38", "mu": "2", "lambda": "0.25", "gamma": "1.5"})
    assert (cfg.L, cfg.N, cfg.T) == (100.0, 256, 38.0)
    assert params.law.mu == 2.0 and params.law.lam == 0.25 and params.gamma_adiabatic == 1.5
    with pytest.raises(ConfigError):
        parse_config({"nodes": "3"})
    with pytest.raises(ConfigError):
        parse_config({"N": "many"})


def test_load_config(tmp_path):
    p = tmp_path / "run.ini"
    p.write_text("L = 100\nN = 256\nT = 38\n")
    _, cfg = load_config(p)
    assert cfg.N == 256
    p.write_text("[other]\nL = 100\n")
    with pytest.raises(ConfigError):
        load_config(p)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.ini")


def test_params_validation():
    with pytest.raises(ConfigError):
        EulerParams(gamma_adiabatic=1.0)
    with pytest.raises(ConfigError):
        EulerParams(n=3)


@settings(max_examples=30, deadline=None)
@given(st.floats(-0.5, 0.5))
def test_density_inverts_enthalpy_variable(v):
    # v = (rho^varpi - 1) / varpi
    rho = P.density(v)
    assert (rho ** P.varpi - 1) / P.varpi == pytest.approx(v, abs=1e-12)
