"""Multiplier families, the 2x2 Green matrix and their cross-checks."""

import csv
from dataclasses import dataclass

import numpy as np

from .damping import ConfigError, DampingLaw
from .ode import integrate
from .zones import FAMILIES, fmt

RTOL = 1e-10
ATOL = 1e-12


@dataclass(frozen=True)
class Multipliers:
    """Fundamental pair of y'' + k^2 y + b y' = 0 (V) or y'' + k^2 y + (b y)' = 0 (U)
    normalised at t = s, with their time derivatives."""

    phi1: np.ndarray
    phi2: np.ndarray
    dphi1: np.ndarray
    dphi2: np.ndarray

    def wronskian(self):
        return self.phi1 * self.dphi2 - self.phi2 * self.dphi1


@dataclass(frozen=True)
class GreenMatrix:
    """Propagator of d/dt (v, u) = [[0, -k], [k, -b]] (v, u); g has shape (..., 2, 2)."""

    g: np.ndarray

    @property
    def det(self):
        g = self.g
        return g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0]


def _prep(ks, ss, t_out):
    ks = np.atleast_1d(np.asarray(ks, dtype=float))
    ss = np.broadcast_to(np.asarray(ss, dtype=float), ks.shape).copy()
    t_out = np.asarray(t_out, dtype=float)
    if t_out.ndim == 1:
        t_out = np.broadcast_to(t_out, (ks.size, t_out.size))
    if np.any(ks < 0):
        raise ConfigError("frequencies must be nonnegative")
    if np.any(ss < 0) or np.any(t_out < ss[:, None]):
        raise ConfigError("times must satisfy 0 <= s <= t")
    return ks, ss, np.ascontiguousarray(t_out)


def _rescaled(law, ss, core):
    """Wrap core(t, y, rows) with the energy rescaling e^{(1/2) int_s^t b}.

    Without it, decaying oscillatory rows sink below atol and carry noise of
    that size; the rescaled state stays O(1) there and only grows on rows
    where the relative tolerance governs anyway.
    """

    def rhs(t, y, rows):
        return core(t, y, rows) + (0.5 * law.b(t))[:, None] * y

    def unscale(t, y, rows):
        return y * np.exp(-0.5 * law.integral_b(ss[rows], t))[:, None]

    return rhs, unscale


def multipliers_batch(family, law: DampingLaw, ks, ss, t_out, rtol=RTOL, atol=ATOL):
    """Multipliers for many (k, s) rows at once; arrays come back with shape (B, P)."""
    if family not in FAMILIES:
        raise ConfigError(f"unknown family {family!r}")
    ks, ss, t_out = _prep(ks, ss, t_out)
    k2 = ks * ks
    u_fam = family == "U"

    def core(t, y, rows):
        b = law.b(t)
        kk = k2[rows]
        out = np.empty_like(y)
        out[:, 0] = y[:, 1]
        out[:, 2] = y[:, 3]
        if u_fam:
            c = kk + law.db(t)
            out[:, 1] = -c * y[:, 0] - b * y[:, 1]
            out[:, 3] = -c * y[:, 2] - b * y[:, 3]
        else:
            out[:, 1] = -kk * y[:, 0] - b * y[:, 1]
            out[:, 3] = -kk * y[:, 2] - b * y[:, 3]
        return out

    rhs, unscale = _rescaled(law, ss, core)
    y0 = np.tile([1.0, 0.0, 0.0, 1.0], (ks.size, 1))
    Y, _ = integrate(rhs, ss, y0, t_out, rtol=rtol, atol=atol)
    B, P = t_out.shape
    rows = np.repeat(np.arange(B), P)
    Y = unscale(t_out.ravel(), Y.reshape(B * P, 4), rows).reshape(B, P, 4)
    return Multipliers(Y[..., 0], Y[..., 2], Y[..., 1], Y[..., 3])


def solve_multipliers(family, law, k, s, t_grid, rtol=RTOL, atol=ATOL) -> Multipliers:
    m = multipliers_batch(family, law, [k], [s], np.asarray(t_grid, float)[None, :], rtol, atol)
    return Multipliers(m.phi1[0], m.phi2[0], m.dphi1[0], m.dphi2[0])


def green_batch(law: DampingLaw, ks, ss, t_out, rtol=RTOL, atol=ATOL, cutoff=None):
    """Green matrices for many rows, shape (B, P, 2, 2).

    With a cutoff, a row is retired once both columns have Euclidean norm below
    it; since the column norms never increase, every later entry is bounded by
    the cutoff and is returned as zero.
    """
    ks, ss, t_out = _prep(ks, ss, t_out)

    def core(t, y, rows):
        b = law.b(t)
        k = ks[rows]
        out = np.empty_like(y)
        # columns stored as (v1, u1, v2, u2)
        out[:, 0] = -k * y[:, 1]
        out[:, 1] = k * y[:, 0] - b * y[:, 1]
        out[:, 2] = -k * y[:, 3]
        out[:, 3] = k * y[:, 2] - b * y[:, 3]
        return out

    rhs, unscale = _rescaled(law, ss, core)

    def below_cutoff(t, y, rows):
        z = unscale(t, y, rows)
        c1 = z[:, 0] ** 2 + z[:, 1] ** 2
        c2 = z[:, 2] ** 2 + z[:, 3] ** 2
        return np.maximum(c1, c2) < cutoff * cutoff

    stop = below_cutoff if cutoff is not None else None

    y0 = np.tile([1.0, 0.0, 0.0, 1.0], (ks.size, 1))
    Y, _ = integrate(rhs, ss, y0, t_out, rtol=rtol, atol=atol, stop=stop)
    B, P = t_out.shape
    rows = np.repeat(np.arange(B), P)
    Y = unscale(t_out.ravel(), Y.reshape(B * P, 4), rows).reshape(B, P, 4)
    g = np.empty((B, P, 2, 2))
    g[..., 0, 0] = Y[..., 0]
    g[..., 1, 0] = Y[..., 1]
    g[..., 0, 1] = Y[..., 2]
    g[..., 1, 1] = Y[..., 3]
    return g


def green(law, k, s, t_grid, rtol=RTOL, atol=ATOL) -> GreenMatrix:
    return GreenMatrix(green_batch(law, [k], [s], np.asarray(t_grid, float)[None, :], rtol, atol)[0])


def reconstruct_green(mv: Multipliers, mu_: Multipliers, k, b_s) -> GreenMatrix:
    """Assemble the Green matrix from the two multiplier families."""
    k = np.asarray(k, dtype=float)
    b_s = np.asarray(b_s, dtype=float)
    g = np.stack(
        [
            np.stack([mv.phi1, -k * mv.phi2], axis=-1),
            np.stack([k * mu_.phi2, mu_.phi1 - b_s * mu_.phi2], axis=-1),
        ],
        axis=-2,
    )
    return GreenMatrix(g)


def translation_probe(law, k, s, t, rtol=RTOL, atol=ATOL):
    """max|G(t,s) - G(t-s,0)| / max|G(t,s)|; zero for constant damping."""
    g = green_batch(law, [k, k], [s, 0.0], np.array([[t], [t - s]]), rtol, atol)
    a, b = g[0, 0], g[1, 0]
    return float(np.max(np.abs(a - b)) / np.max(np.abs(a)))


def write_multipliers_csv(path, family, ks, ss, ts, m: Multipliers):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["family", "k", "s", "t", "phi1", "phi2"])
        for i in range(len(ks)):
            for j in range(ts.shape[1]):
                w.writerow([family, fmt(ks[i]), fmt(ss[i]), fmt(ts[i, j]), fmt(m.phi1[i, j]), fmt(m.phi2[i, j])])


def write_green_csv(path, ks, ss, ts, g):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "s", "t", "g11", "g12", "g21", "g22"])
        for i in range(len(ks)):
            for j in range(ts.shape[1]):
                gg = g[i, j]
                w.writerow([fmt(ks[i]), fmt(ss[i]), fmt(ts[i, j])] + [fmt(x) for x in gg.ravel()])
