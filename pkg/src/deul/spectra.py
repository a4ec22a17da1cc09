"""Radial Fourier-side norms of the linear flow and log-log slope fits.

Fields are radial in frequency.  With the unitary transform convention the
L2 norm of a field equals the L2 norm of its transform, so every Sobolev-type
norm reduces to a one-dimensional quadrature in |xi| with the surface area of
the unit sphere as prefactor.
"""

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma as gamma_fn, jv

from .damping import ConfigError, DampingLaw
from .propagator import green_batch
from .zones import fmt

GAUSS_POINTS = 8


def sphere_area(n):
    """Surface area of the unit sphere in R^n."""
    return 2.0 * math.pi ** (n / 2) / gamma_fn(n / 2)


def smooth_cutoff(k, R):
    """C-infinity radial cutoff: 1 on [0, R], 0 on [2R, inf), monotone between."""
    k = np.asarray(k, dtype=float)

    def f(x):
        return np.where(x > 0, np.exp(-1.0 / np.maximum(x, 1e-300)), 0.0)

    x = (2.0 * R - k) / R
    return f(x) / (f(x) + f(1.0 - x))


def radial_nodes(k_min=1e-4, k_max=50.0, n_nodes=400, k_extra=(), dk_max=None):
    """Composite Gauss-Legendre rule: one panel on [0, k_min] plus panels on a
    geometric partition of [k_min, k_max]; breakpoints in k_extra are added and
    panels wider than dk_max are subdivided."""
    if not 0 < k_min < k_max:
        raise ConfigError("need 0 < k_min < k_max")
    npan = max(1, int(round(n_nodes / GAUSS_POINTS)))
    edges = np.geomspace(k_min, k_max, npan + 1)
    extra = [x for x in k_extra if k_min < x < k_max]
    edges = np.unique(np.concatenate([[0.0], edges, extra]))
    if dk_max:
        # the propagator oscillates like cos(k t), so wide panels alias at large t
        pieces = [np.linspace(a, b, int(np.ceil((b - a) / dk_max)) + 1)[:-1] for a, b in zip(edges[:-1], edges[1:])]
        edges = np.concatenate(pieces + [edges[-1:]])
    x, w = np.polynomial.legendre.leggauss(GAUSS_POINTS)
    a, b = edges[:-1, None], edges[1:, None]
    nodes = (0.5 * (b - a) * x + 0.5 * (b + a)).ravel()
    weights = (0.5 * (b - a) * w).ravel()
    return nodes, weights


@dataclass
class RadialProfile:
    """Radial amplitudes of (v, u, w) data on a quadrature rule in |xi|.

    u holds the longitudinal part of the velocity and w the transverse part.
    """

    nodes: np.ndarray
    weights: np.ndarray
    n: int
    v: np.ndarray
    u: np.ndarray
    w: np.ndarray

    def channel(self, name):
        return {"v": self.v, "u": self.u, "w": self.w}[name]


def make_profile(kind="hat", n=2, R=0.25, sigma=1.0, channel="v", n_nodes=400, k_min=1e-4, k_max=50.0, dk_max=0.01):
    """Build data concentrated in one channel.

    kind 'hat' is the smooth cutoff of radius R, 'gaussian' is exp(-k^2 / (2 sigma^2)).
    """
    if n < 1:
        raise ConfigError("dimension must be positive")
    extra = (R, 2 * R) if kind == "hat" else ()
    nodes, weights = radial_nodes(k_min, k_max, n_nodes, extra, dk_max)
    if kind == "hat":
        amp = smooth_cutoff(nodes, R)
    elif kind == "gaussian":
        amp = np.exp(-nodes ** 2 / (2 * sigma ** 2))
    else:
        raise ConfigError(f"unknown profile kind {kind!r}")
    z = np.zeros_like(nodes)
    parts = {"v": z, "u": z, "w": z}
    if channel not in parts:
        raise ConfigError(f"unknown channel {channel!r}")
    parts = dict(parts)
    parts[channel] = amp
    return RadialProfile(nodes, weights, n, parts["v"], parts["u"], parts["w"])


def split(profile: RadialProfile, R):
    """Low- and high-frequency parts via the smooth cutoff."""
    chi = smooth_cutoff(profile.nodes, R)

    def part(c):
        return RadialProfile(profile.nodes, profile.weights, profile.n, c * profile.v, c * profile.u, c * profile.w)

    return part(chi), part(1.0 - chi)


def l2_norm(nodes, weights, amp, n, a=0.0):
    """|| Lambda^a f ||_{L2} of a radial field from its transform amplitudes."""
    amp = np.abs(np.asarray(amp))
    # factor out the peak so tiny amplitudes do not underflow when squared
    peak = amp.max(axis=0) if amp.size else np.zeros(amp.shape[1:])
    unit = np.where(peak > 0, peak, 1.0)
    nodes = np.reshape(nodes, nodes.shape + (1,) * (amp.ndim - 1))
    integrand = nodes ** (n - 1 + 2 * a) * (amp / unit) ** 2
    return peak * np.sqrt(sphere_area(n) * np.tensordot(weights, integrand, axes=(0, 0)))


def _abs_panel_integral(nodes, weights, vals):
    """Integral of |g| over Gauss panels, splitting each panel at the real roots
    of its interpolating polynomial so sign changes cost no accuracy."""
    q = GAUSS_POINTS
    npan = nodes.size // q
    x, _ = np.polynomial.legendre.leggauss(q)
    half = weights.reshape(npan, q).sum(axis=1) / 2
    g = vals.reshape(npan, q, -1)
    # nodal values -> power-basis coefficients on the reference panel [-1, 1]
    to_pow = np.linalg.inv(np.vander(x, q, increasing=True))
    c = np.einsum("ij,pjx->pxi", to_pow, g)  # (npan, X, q)
    C = c.reshape(-1, q)
    scale = np.max(np.abs(C), axis=1)
    out = np.zeros(C.shape[0])
    live = scale > 0
    # roots do not care about scale; normalising keeps subnormal tails finite
    Cl = C[live] / scale[live, None]
    lead = Cl[:, -1].copy()
    tiny = np.abs(lead) < 1e-13
    lead[tiny] = 1e-13
    comp = np.zeros((Cl.shape[0], q - 1, q - 1))
    comp[:, 1:, :-1] = np.eye(q - 2)
    comp[:, :, -1] = -Cl[:, :-1] / lead[:, None]
    roots = np.linalg.eigvals(comp)
    real = np.abs(roots.imag) < 1e-9
    r = np.where(real & (np.abs(roots.real) < 1), roots.real, np.nan)
    brk = np.sort(np.concatenate([np.full((r.shape[0], 1), -1.0), r, np.full((r.shape[0], 1), 1.0)], axis=1), axis=1)
    brk = np.where(np.isnan(brk), 1.0, brk)
    # antiderivative of the unmodified polynomial at the breakpoints
    anti = np.concatenate([np.zeros((Cl.shape[0], 1)), C[live] / np.arange(1, q + 1)], axis=1)
    P = np.zeros_like(brk)
    for j in range(q, -1, -1):
        P = P * brk + anti[:, j : j + 1]
    out[live] = np.sum(np.abs(np.diff(P, axis=1)), axis=1)
    out = out.reshape(npan, -1) * half[:, None]
    return out.sum(axis=0).reshape(vals.shape[1:])


def l1hat_norm(nodes, weights, amp, n, a=0.0):
    """(2 pi)^(-n/2) || |xi|^a f_hat ||_{L1}, an upper bound for || Lambda^a f ||_{L_inf}."""
    amp = np.asarray(amp)
    kk = np.reshape(nodes, nodes.shape + (1,) * (amp.ndim - 1))
    integrand = kk ** (n - 1 + a) * amp
    pref = (2 * math.pi) ** (-n / 2) * sphere_area(n)
    if nodes.size % GAUSS_POINTS == 0:
        flat = integrand.reshape(nodes.size, -1)
        return pref * _abs_panel_integral(nodes, weights, flat).reshape(amp.shape[1:])
    return pref * np.tensordot(weights, np.abs(integrand), axes=(0, 0))


def physical_l1_norm(nodes, weights, amp, n, r_max=None, n_r=4000):
    """|| f ||_{L1} in space by inverse Hankel transform of a radial amplitude."""
    amp = np.asarray(amp, dtype=float)
    sel = amp != 0
    if not sel.any():
        return 0.0
    nodes, weights, amp = nodes[sel], weights[sel], amp[sel]
    if r_max is None:
        r_max = 200.0 / nodes.max()
    r = np.linspace(0.0, r_max, n_r + 1)[1:]
    nu = n / 2 - 1
    kern = jv(nu, np.outer(r, nodes)) * nodes ** (n / 2)
    prof = r ** (-nu) * (kern @ (weights * amp))
    dr = r[1] - r[0]
    return sphere_area(n) * np.sum(np.abs(prof) * r ** (n - 1)) * dr


@dataclass
class NormSeries:
    label: str
    t: np.ndarray
    value: np.ndarray


@dataclass
class SlopeFit:
    label: str
    slope: float
    intercept: float
    r2: float
    window: tuple
    n_points: int
    extra: dict = field(default_factory=dict)

    def as_dict(self):
        return {
            "label": self.label,
            "slope": self.slope,
            "intercept": self.intercept,
            "r2": self.r2,
            "window": list(self.window),
            "n_points": self.n_points,
            **self.extra,
        }


def evolve_fields(profile: RadialProfile, law: DampingLaw, t_grid, cutoff=1e-18):
    """Transform amplitudes of (v, u, w) at each time, shape (P, n_nodes)."""
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(t_grid < 0) or np.any(np.diff(t_grid) < 0):
        raise ConfigError("time grid must be nonnegative and nondecreasing")
    P, M = t_grid.size, profile.nodes.size
    v = np.zeros((P, M))
    u = np.zeros((P, M))
    active = np.flatnonzero((profile.v != 0) | (profile.u != 0))
    if active.size:
        # scale the cutoff by the data size so retired nodes are negligible
        amp = np.maximum(np.abs(profile.v[active]), np.abs(profile.u[active])).max()
        g = green_batch(
            law,
            profile.nodes[active],
            np.zeros(active.size),
            np.broadcast_to(t_grid, (active.size, P)),
            cutoff=cutoff * amp if cutoff else None,
        )
        v0 = profile.v[active][:, None]
        u0 = profile.u[active][:, None]
        v[:, active] = (g[..., 0, 0] * v0 + g[..., 0, 1] * u0).T
        u[:, active] = (g[..., 1, 0] * v0 + g[..., 1, 1] * u0).T
    w = law.vorticity_factor(0.0, t_grid)[:, None] * profile.w[None, :]
    return {"v": v, "u": u, "w": w}


def evolve_norms(profile: RadialProfile, law: DampingLaw, t_grid, orders=(0.0,), channels=("v", "u"), l1hat=False, cutoff=1e-18):
    """Norm series ||Lambda^a (channel)(t)|| for each requested order and channel."""
    fields = evolve_fields(profile, law, t_grid, cutoff)
    out = {}
    for ch in channels:
        for a in orders:
            lab = f"{ch}" if a == 0 else f"{ch}_a{a:g}"
            vals = l2_norm(profile.nodes, profile.weights, fields[ch].T, profile.n, a)
            out[lab] = NormSeries(lab, np.asarray(t_grid, float), np.asarray(vals))
            if l1hat:
                lab1 = f"{lab}_l1hat"
                vals1 = l1hat_norm(profile.nodes, profile.weights, fields[ch].T, profile.n, a)
                out[lab1] = NormSeries(lab1, np.asarray(t_grid, float), np.asarray(vals1))
    return out


def fit_slope(series: NormSeries, window) -> SlopeFit:
    """Least-squares slope of log(value) against log(t) on the window."""
    lo, hi = window
    sel = (series.t >= lo) & (series.t <= hi) & (series.value > 0)
    if np.count_nonzero(sel) < 3:
        raise ConfigError("slope window holds fewer than three points")
    x = np.log(series.t[sel])
    y = np.log(series.value[sel])
    p = np.polyfit(x, y, 1)
    res = y - np.polyval(p, x)
    ss = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(res ** 2) / ss if ss > 0 else 1.0
    return SlopeFit(series.label, float(p[0]), float(p[1]), float(r2), (float(lo), float(hi)), int(sel.sum()))


def expected_slopes(n, lam):
    """Decay exponents of ||Lambda^a v|| and ||Lambda^a u|| for data in v."""
    base = n * (1 + lam) / 4

    def v(a):
        return -(base + a * (1 + lam) / 2)

    def u(a):
        return -(base + (a + 1) * (1 + lam) / 2 - lam)

    return v, u


def write_series_csv(path, series_list):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label", "t", "value"])
        for s in series_list:
            for t, v in zip(s.t, s.value):
                w.writerow([s.label, fmt(t), fmt(v)])


def write_fits_json(path, fits):
    with open(path, "w") as fh:
        json.dump([f.as_dict() for f in fits], fh, indent=2, sort_keys=True)
        fh.write("\n")
