"""Symbols of the two multiplier families and the phase-space zone partition."""

import csv
import enum
import math
from dataclasses import dataclass

import numpy as np

from .damping import ConfigError, DampingLaw

FAMILIES = ("V", "U")


class Zone(enum.Enum):
    Hyperbolic = "Hyp"
    PseudoDiff = "PD"
    Reduced = "Red"
    Elliptic = "Ell"
    BoundedResidual = "Res"


ZONE_ORDER = [Zone.Hyperbolic, Zone.PseudoDiff, Zone.Reduced, Zone.Elliptic, Zone.BoundedResidual]


def _check_family(family):
    if family not in FAMILIES:
        raise ConfigError(f"family must be one of {FAMILIES}, got {family!r}")


def default_t_ell(law: DampingLaw, eps: float = 0.1) -> float:
    """Smallest t with |b'|/b^2 <= 1/8 and a nonempty elliptic band at k = 0."""
    lam, mu = law.lam, law.mu
    t = 0.0
    if lam > 0:
        # |b'|/b^2 = (lam/mu) (1+t)^(lam-1) is decreasing
        t = max(0.0, (8.0 * lam / mu) ** (1.0 / (1.0 - lam)) - 1.0)

    def ok(tt):
        b, db = law.b(tt), law.db(tt)
        return min(b * b / 4 + db / 2, b * b / 4 - db / 2) >= eps * eps * b * b

    if ok(t):
        return float(t)
    lo, hi = t, max(1.0, 2 * t)
    while not ok(hi):
        lo, hi = hi, 2 * hi
        if hi > 1e300:
            raise ConfigError("no elliptic band at zero frequency")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        lo, hi = (lo, mid) if ok(mid) else (mid, hi)
    return float(hi)


@dataclass(frozen=True)
class ZoneConfig:
    eps: float = 0.1
    bigN: float = 2.0
    t_ell: float = 0.0
    c0: float = 2.0

    def __post_init__(self):
        if not (0 < self.eps < 0.5):
            raise ConfigError("eps must lie in (0, 1/2)")
        if not self.bigN > 1:
            raise ConfigError("bigN must exceed 1")
        if self.t_ell < 0:
            raise ConfigError("t_ell must be nonnegative")

    @classmethod
    def default(cls, law: DampingLaw, eps=0.1, bigN=2.0):
        return cls(eps=eps, bigN=bigN, t_ell=default_t_ell(law, eps), c0=law.mu * bigN)

    def validate(self, law: DampingLaw):
        if self.c0 < law.mu * self.bigN:
            raise ConfigError("c0 must be at least mu * bigN")
        return self


@dataclass(frozen=True)
class SymbolValue:
    m: np.ndarray
    sqrt_abs_m: np.ndarray
    d_sqrt_abs_m: np.ndarray
    d2_sqrt_abs_m: np.ndarray


def symbol(t, k, family, law: DampingLaw) -> SymbolValue:
    """m = k^2 - b^2/4 -+ b'/2 (minus for V, plus for U) with time derivatives of sqrt|m|."""
    _check_family(family)
    t = np.asarray(t, dtype=float)
    k = np.asarray(k, dtype=float)
    b, db, d2b, d3b = law.b(t), law.db(t), law.d2b(t), law.d3b(t)
    sgn = -1.0 if family == "V" else 1.0
    m = k * k - b * b / 4 + sgn * db / 2
    dm = -b * db / 2 + sgn * d2b / 2
    d2m = -(db * db + b * d2b) / 2 + sgn * d3b / 2
    am = np.abs(m)
    w = np.sqrt(am)
    s = np.sign(m)
    with np.errstate(divide="ignore", invalid="ignore"):
        dw = s * dm / (2 * w)
        d2w = s * d2m / (2 * w) - dw * dw / w
    return SymbolValue(m, w, dw, d2w)


def classify_codes(t, k, family, law, cfg: ZoneConfig):
    """Vectorised classification; returns indices into the Zone list order
    Hyperbolic, PseudoDiff, Reduced, Elliptic, BoundedResidual."""
    sv = symbol(t, k, family, law)
    b = law.b(t)
    w, m = sv.sqrt_abs_m, sv.m
    t = np.broadcast_to(np.asarray(t, dtype=float), m.shape)
    ell = (w >= cfg.eps * b) & (m <= 0) & (t >= cfg.t_ell)
    red = w <= cfg.eps * b
    pd = (w >= cfg.eps * b) & (w <= cfg.bigN * b) & (m >= 0)
    hyp = (w >= cfg.bigN * b) & (m >= 0)
    code = np.full(m.shape, 4, dtype=int)
    # later assignments win: Ell > Red > PD > Hyp > residual
    code[hyp] = 0
    code[pd] = 1
    code[red] = 2
    code[ell] = 3
    return code


def classify(t, k, family, law, cfg: ZoneConfig) -> Zone:
    return ZONE_ORDER[int(classify_codes(float(t), float(k), family, law, cfg))]


def _ell_margin(t, k, family, law, cfg):
    # nonnegative exactly on the elliptic set (ignoring the t >= t_ell clause)
    sv = symbol(t, k, family, law)
    b = law.b(t)
    return -sv.m - cfg.eps ** 2 * b * b


def t_xi(k, family, law: DampingLaw, cfg: ZoneConfig):
    """Last time at which frequency k is elliptic; inf if it stays elliptic, None if never."""
    _check_family(family)
    k = float(k)
    t0 = cfg.t_ell
    g = lambda tt: _ell_margin(tt, k, family, law, cfg)
    if law.lam == 0.0:
        return math.inf if g(t0) >= 0 else None
    if k == 0.0:
        return math.inf if g(t0) >= 0 else None
    # beyond t_hi the symbol is positive: b^2/4 + |b'|/2 < k^2
    t_hi = max(2 * t0, 1.0)
    while law.b(t_hi) ** 2 / 4 + abs(law.db(t_hi)) / 2 >= k * k:
        t_hi *= 2
    grid = t0 + (t_hi - t0) * np.expm1(np.linspace(0.0, np.log1p(t_hi - t0), 4097)) / (t_hi - t0)
    grid[-1] = t_hi
    vals = g(grid)
    pos = np.flatnonzero(vals >= 0)
    if pos.size == 0:
        return None
    i = pos[-1]
    if i == grid.size - 1:
        return float(t_hi)
    lo, hi = grid[i], grid[i + 1]
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        lo, hi = (mid, hi) if g(mid) >= 0 else (lo, mid)
    return float(lo)


def xi_t(t, family, law: DampingLaw, cfg: ZoneConfig):
    """Largest elliptic frequency at time t, or None when the elliptic band is empty."""
    _check_family(family)
    t = float(t)
    if t < cfg.t_ell:
        return None
    g = lambda kk: _ell_margin(t, kk, family, law, cfg)
    if g(0.0) < 0:
        return None
    lo, hi = 0.0, float(law.b(t)) + abs(float(law.db(t)))
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        lo, hi = (mid, hi) if g(mid) >= 0 else (lo, mid)
    return lo


def standard_ell_grid(family, law, cfg, t_lo=1e2, t_hi=1e5, nt=40, nk=24):
    """(t, k) pairs on a log grid in t with k spread over (0, xi_t / 2)."""
    ts, ks = [], []
    for t in np.geomspace(t_lo, t_hi, nt):
        xi = xi_t(t, family, law, cfg)
        if xi is None:
            continue
        for k in 0.5 * xi * np.linspace(0.0, 1.0, nk + 1)[1:]:
            ts.append(t)
            ks.append(k)
    return np.array(ts), np.array(ks)


def certify_ell_bounds(family, law: DampingLaw, cfg: ZoneConfig, t=None, k=None):
    """Check the two-sided bounds on sqrt|m| + d(sqrt|m|)/(2 sqrt|m|) - b/2 in the elliptic zone.

    For V the constants are explicit, C = sup|b'|/b^2 + 2.  For U two constants
    are fitted over the grid and reported.  Returns a dict with slacks,
    violation count and the fitted decay exponent of the remainder.
    """
    _check_family(family)
    if t is None:
        t, k = standard_ell_grid(family, law, cfg)
    t = np.asarray(t, dtype=float)
    k = np.asarray(k, dtype=float)
    codes = classify_codes(t, k, family, law, cfg)
    if np.any(codes != 3):
        raise ConfigError("certification grid leaves the elliptic zone")
    sv = symbol(t, k, family, law)
    b, db, d2b = law.b(t), law.db(t), law.d2b(t)
    w = sv.sqrt_abs_m
    lhs = w + sv.d_sqrt_abs_m / (2 * w) - b / 2
    r_exact = d2b / (8 * np.abs(sv.m))
    r_bound = db * db / b ** 3 + np.abs(d2b) / b ** 2
    scale = np.abs(lhs) + np.abs(db) / b + k * k / b + r_bound
    tol = 1e-12 * scale
    out = {"family": family, "n_points": int(t.size)}
    if family == "V":
        c = law.lam / law.mu + 2.0
        upper = -k * k / b + db / b + np.abs(r_exact)
        lower = -c * k * k / b + db / b - r_bound
        up_slack = upper - lhs
        lo_slack = lhs - lower
        out.update(C=c, C3=law.lam / law.mu)
        remainder = np.abs(r_exact)
    else:
        pos = k > 0
        c1 = float(np.min((r_bound[pos] - lhs[pos]) * b[pos] / k[pos] ** 2))
        c2 = float(max(0.0, np.max((-lhs[pos] - r_bound[pos]) * b[pos] / k[pos] ** 2)))
        upper = -c1 * k * k / b + r_bound
        lower = -c2 * k * k / b - r_bound
        up_slack = upper - lhs
        lo_slack = lhs - lower
        out.update(C1=c1, C2=c2)
        remainder = r_bound
    viol = (up_slack < -tol) | (lo_slack < -tol)
    if family == "U" and out["C1"] <= 0:
        viol |= lhs > r_bound + tol
    out["violations"] = int(np.count_nonzero(viol))
    # scale vanishes only where every term does (constant damping, k = 0)
    unit = np.where(scale > 0, scale, 1.0)
    out["min_upper_slack"] = float(np.min(up_slack / unit))
    out["min_lower_slack"] = float(np.min(lo_slack / unit))
    # remainder exponent along the line k = xi_t / 4
    ts = np.unique(t)
    kk = np.array([0.25 * xi_t(tt, family, law, cfg) for tt in ts])
    sv2 = symbol(ts, kk, family, law)
    if family == "V":
        rr = np.abs(law.d2b(ts) / (8 * np.abs(sv2.m)))
    else:
        rr = law.db(ts) ** 2 / law.b(ts) ** 3 + np.abs(law.d2b(ts)) / law.b(ts) ** 2
    if np.all(rr > 0) and ts.size > 1:
        out["remainder_exponent"] = float(np.polyfit(np.log1p(ts), np.log(rr), 1)[0])
    else:
        out["remainder_exponent"] = None
    out["remainder_constant"] = float(np.max(rr * (1 + ts) ** (2 - law.lam)))
    out["max_remainder_on_grid"] = float(np.max(remainder))
    return out


def write_atlas(path, family, law, cfg, ts, ks):
    """Zone atlas CSV with one row per (t, k) pair of the tensor grid."""
    T, K = np.meshgrid(np.asarray(ts, float), np.asarray(ks, float), indexing="ij")
    codes = classify_codes(T, K, family, law, cfg)
    sv = symbol(T, K, family, law)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "k", "family", "tag", "m", "sqrt_abs_m"])
        for t, k, c, m, r in zip(T.ravel(), K.ravel(), codes.ravel(), sv.m.ravel(), sv.sqrt_abs_m.ravel()):
            w.writerow([fmt(t), fmt(k), family, ZONE_ORDER[c].value, fmt(m), fmt(r)])
    return codes


def fmt(x):
    return format(float(x), ".17g")
