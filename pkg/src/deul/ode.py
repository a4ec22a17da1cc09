"""Batched embedded Runge-Kutta integrator (Dormand-Prince 5(4) and 8(5,3)).

Every row of the batch carries its own time, step size and error control, so a
sweep over many frequencies runs as one vectorised loop.  Steps are clipped to
land exactly on the requested output times, which makes interpolation
unnecessary.
"""

from dataclasses import dataclass

import numpy as np
from scipy.integrate._ivp import dop853_coefficients as _d853


class IntegrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class Tableau:
    a: np.ndarray  # (s, s) stage matrix
    b: np.ndarray  # (s,) propagating weights
    c: np.ndarray  # (s,) nodes
    e: tuple  # error weights over s + 1 stages (last one is the FSAL stage)
    exponent: float


def _dopri5():
    a = np.zeros((6, 6))
    a[1, :1] = [1 / 5]
    a[2, :2] = [3 / 40, 9 / 40]
    a[3, :3] = [44 / 45, -56 / 15, 32 / 9]
    a[4, :4] = [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]
    a[5, :5] = [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]
    b = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
    c = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
    e = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
    return Tableau(a, b, c, (e,), -1 / 5)


def _dop853():
    s = _d853.N_STAGES
    return Tableau(_d853.A[:s, :s], _d853.B, _d853.C[:s], (_d853.E5, _d853.E3), -1 / 8)


TABLEAUX = {"dopri5": _dopri5(), "dop853": _dop853()}


def _error_norm(tab, K, h, sc):
    if len(tab.e) == 1:
        err = h[:, None] * np.einsum("i,imd->md", tab.e[0], K) / sc
        return np.sqrt(np.mean(err ** 2, axis=1))
    # combined fifth/third-order estimate of the 8(5,3) pair
    n = K.shape[2]
    e5 = np.einsum("i,imd->md", tab.e[0], K) / sc
    e3 = np.einsum("i,imd->md", tab.e[1], K) / sc
    n5 = np.sum(e5 ** 2, axis=1)
    n3 = np.sum(e3 ** 2, axis=1)
    den = n5 + 0.01 * n3
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.abs(h) * n5 / np.sqrt(den * n)
    return np.where(den > 0, out, 0.0)


def _initial_step(rhs, t, y, f, rows, rtol, atol, order):
    sc = atol + rtol * np.abs(y)
    d0 = np.sqrt(np.mean((y / sc) ** 2, axis=1))
    d1 = np.sqrt(np.mean((f / sc) ** 2, axis=1))
    h0 = np.where((d0 < 1e-5) | (d1 < 1e-5), 1e-6, 0.01 * d0 / np.maximum(d1, 1e-300))
    f1 = rhs(t + h0, y + h0[:, None] * f, rows)
    d2 = np.sqrt(np.mean(((f1 - f) / sc) ** 2, axis=1)) / h0
    dm = np.maximum(d1, d2)
    h1 = np.where(dm <= 1e-15, np.maximum(1e-6, h0 * 1e-3), (0.01 / np.maximum(dm, 1e-300)) ** (1 / (order + 1)))
    return np.minimum(100 * h0, h1)


def integrate(rhs, t0, y0, t_out, rtol=1e-10, atol=1e-12, stop=None, method="dop853", max_steps=5_000_000):
    """Integrate y' = rhs(t, y, rows) for a batch of independent rows.

    rhs receives per-row times t (m,), states y (m, d) and the batch indices of
    those rows, and returns (m, d).  t0 has shape (B,), y0 (B, d) and t_out
    (B, P) with every row nondecreasing and starting at or after t0.

    stop(t, y, rows) may return a boolean mask of rows that can be retired;
    their remaining outputs are left at zero.  Returns (Y, retired) with Y of
    shape (B, P, d).
    """
    tab = TABLEAUX[method]
    t0 = np.asarray(t0, dtype=float)
    y0 = np.atleast_2d(np.asarray(y0, dtype=float))
    t_out = np.atleast_2d(np.asarray(t_out, dtype=float))
    B, d = y0.shape
    P = t_out.shape[1]
    if t0.shape != (B,) or t_out.shape[0] != B:
        raise ValueError("batch shapes disagree")
    if np.any(np.diff(t_out, axis=1) < 0) or np.any(t_out[:, 0] < t0):
        raise ValueError("output times must be nondecreasing and start at or after t0")

    Y = np.zeros((B, P, d))
    t = t0.copy()
    y = y0.copy()
    nxt = np.zeros(B, dtype=int)
    retired = np.zeros(B, dtype=bool)
    allrows = np.arange(B)

    def record(rows):
        # store every output time already reached by these rows
        while rows.size:
            hit = t_out[rows, np.minimum(nxt[rows], P - 1)] <= t[rows]
            hit &= nxt[rows] < P
            rows = rows[hit]
            Y[rows, nxt[rows]] = y[rows]
            nxt[rows] += 1

    record(allrows)
    f = rhs(t, y, allrows)
    order = 5 if method == "dopri5" else 8
    h = _initial_step(rhs, t, y, f, allrows, rtol, atol, order)
    steps = np.zeros(B, dtype=int)
    ns = tab.b.size

    while True:
        idx = np.flatnonzero((nxt < P) & ~retired)
        if idx.size == 0:
            break
        if steps[idx].max() > max_steps:
            raise IntegrationError("step budget exhausted")
        ti, yi, hn = t[idx], y[idx], h[idx]
        target = t_out[idx, nxt[idx]]
        gap = target - ti
        land = hn >= gap
        hh = np.where(land, gap, hn)
        hc = hh[:, None]
        K = np.empty((ns + 1, idx.size, d))
        K[0] = f[idx]
        # an oversized trial step may overflow; it is then simply rejected
        with np.errstate(over="ignore", invalid="ignore"):
            for s in range(1, ns):
                ys = yi + hc * np.einsum("i,imd->md", tab.a[s, :s], K[:s])
                K[s] = rhs(ti + tab.c[s] * hh, ys, idx)
            ynew = yi + hc * np.einsum("i,imd->md", tab.b, K[:ns])
            K[ns] = rhs(ti + hh, ynew, idx)
            sc = atol + rtol * np.maximum(np.abs(yi), np.abs(ynew))
            err = _error_norm(tab, K, hh, sc)
        err = np.where(np.isfinite(err), err, np.inf)
        ok = err <= 1.0
        with np.errstate(divide="ignore"):
            fac = np.clip(0.9 * np.maximum(err, 1e-12) ** tab.exponent, 0.2, 10.0)
        fac = np.where(ok, fac, np.minimum(fac, 1.0))
        hnew = hh * fac
        # a step shortened to hit an output time should not shrink the next one
        hnew = np.where(land & ok, np.maximum(hnew, hn * np.minimum(fac, 1.0)), hnew)
        if np.any(hnew <= 1e-14 * np.maximum(1.0, np.abs(ti))):
            raise IntegrationError("step size underflow")
        h[idx] = hnew
        steps[idx] += 1
        acc = idx[ok]
        if acc.size:
            t[acc] = np.where(land[ok], target[ok], ti[ok] + hh[ok])
            y[acc] = ynew[ok]
            f[acc] = K[ns][ok]
            record(acc)
            if stop is not None:
                live = acc[nxt[acc] < P]
                if live.size:
                    retired[live[stop(t[live], y[live], live)]] = True
    return Y, retired
