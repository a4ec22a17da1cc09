"""Elliptic-zone diagonalisation of the reduced second-order equation.

In the elliptic zone sqrt|m| = w > 0 and the reduced unknown of either family
solves y'' = w^2 y.  With V = (w y, D_t y), D_t = -i d/dt, the system
D_t V = A V is conjugated to a diagonal principal part, one step of
refinement is applied, and the remaining amplitude Q solves a Volterra
equation.  The fundamental matrix is then

    E(t, s) = exp(int_s^t (w + w'/(2 w))) M N1(t) Q(t, s) N1(s)^{-1} M^{-1}.
"""

import json
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .damping import ConfigError, DampingLaw
from .ode import integrate
from .zones import ZoneConfig, classify_codes, symbol

M = np.array([[1j, -1j], [1.0, 1.0]])
M_INV = 0.5 * np.array([[-1j, 1.0], [1j, 1.0]])
J = np.array([[0.0, 1.0], [-1.0, 0.0]])
E_LIMIT = 0.5 * np.array([[1.0, 1j], [-1j, 1.0]])

# coefficient of w'/w^2 in the refinement matrix N1 - I; 1/4 removes the
# first-order off-diagonal coupling exactly
N1_COEFF = 0.25


@dataclass
class DiagFrame:
    """Pointwise frame quantities, each with a leading time axis."""

    t: np.ndarray
    w: np.ndarray
    dw: np.ndarray
    A: np.ndarray
    D: np.ndarray
    R: np.ndarray
    N1: np.ndarray
    F0: np.ndarray
    R1: np.ndarray


def build_frame(t, k, family, law: DampingLaw, n1_coeff=N1_COEFF) -> DiagFrame:
    t = np.atleast_1d(np.asarray(t, dtype=float))
    sv = symbol(t, k, family, law)
    if np.any(sv.m >= 0):
        raise ConfigError("frame requested outside the elliptic region m < 0")
    w, dw, d2w = sv.sqrt_abs_m, sv.d_sqrt_abs_m, sv.d2_sqrt_abs_m
    Dw = -1j * dw
    n = t.size
    A = np.zeros((n, 2, 2), complex)
    A[:, 0, 0] = Dw / w
    A[:, 0, 1] = w
    A[:, 1, 0] = -w
    D = np.zeros((n, 2, 2), complex)
    D[:, 0, 0] = -1j * w
    D[:, 1, 1] = 1j * w
    R = (Dw / (2 * w))[:, None, None] * np.array([[1.0, -1.0], [-1.0, 1.0]])
    c = n1_coeff * dw / w ** 2
    dc = n1_coeff * (d2w / w ** 2 - 2 * dw * dw / w ** 3)
    N = c[:, None, None] * J
    N1 = np.eye(2) + N
    DtN = (-1j * dc)[:, None, None] * J
    F0 = (Dw / (2 * w))[:, None, None] * np.eye(2)
    R1 = -np.linalg.solve(N1, DtN - R @ N + N @ F0)
    return DiagFrame(t, w, dw, A, D, R, N1, F0, R1)


def _panels(s, t, wfun, ratio=0.1):
    """Panel edges on [s, t], no wider than ratio (1 + theta) nor 1/(2 w)."""
    edges = [s]
    while edges[-1] < t:
        e = edges[-1]
        h = min(ratio * (1 + e), 0.5 / float(wfun(e)))
        edges.append(min(t, e + h))
    return np.array(edges)


@dataclass
class VolterraQ:
    nodes: np.ndarray
    Q_nodes: np.ndarray
    Q: np.ndarray  # Q(t, s)
    H: np.ndarray  # H(t, s)
    iterations: int
    residual: float


def solve_q(family, law, k, s, t, q=8, max_iter=50, tol=1e-12, n1_coeff=N1_COEFF) -> VolterraQ:
    """Nystrom solution of Q = H + i int_s^t H(t, .) R1 Q by Picard iteration
    on composite Gauss panels."""
    if t < s:
        raise ConfigError("need t >= s")
    if t == s:
        eye = np.eye(2, dtype=complex)
        return VolterraQ(np.array([s]), eye[None], eye.copy(), eye.copy(), 0, 0.0)
    wfun = lambda x: symbol(x, k, family, law).sqrt_abs_m
    edges = _panels(s, t, wfun)
    x, wq = np.polynomial.legendre.leggauss(q)
    a, b = edges[:-1, None], edges[1:, None]
    nodes = (0.5 * (b - a) * x + 0.5 * (a + b)).ravel()
    wts = (0.5 * (b - a) * wq).ravel()
    npan = edges.size - 1
    # S[i, j] = int_{-1}^{x_i} l_j for the Lagrange basis on the Gauss nodes
    V = np.vander(x, q, increasing=True)
    Vi = np.linalg.inv(V)
    pw = np.arange(1, q + 1)
    S = ((x[:, None] ** pw + (-1.0) ** (pw + 1)) / pw) @ Vi
    nn = nodes.size
    W = np.zeros((nn, nn))
    for p in range(npan):
        sl = slice(p * q, (p + 1) * q)
        W[sl, : p * q] = wts[None, : p * q]
        W[sl, sl] = 0.5 * (edges[p + 1] - edges[p]) * S
    fr = build_frame(nodes, k, family, law, n1_coeff)
    om = wfun(nodes)
    Om = W @ om  # int_s^theta w at every node
    Om_t = wts @ om
    dO = Om[:, None] - Om[None, :]
    H2 = np.exp(-2 * np.minimum(dO, 350.0))
    H2[dO < -350] = 0.0  # never reached for in-panel pairs
    K1 = W
    K2 = W * H2
    H0 = np.zeros((nn, 2, 2), complex)
    H0[:, 0, 0] = 1.0
    H0[:, 1, 1] = np.exp(-2 * Om)
    Y = H0.copy()
    R1 = fr.R1
    it, res = 0, np.inf
    for it in range(1, max_iter + 1):
        Z = R1 @ Y  # (nn, 2, 2)
        new = H0.copy()
        new[:, 0, :] += 1j * (K1 @ Z[:, 0, :])
        new[:, 1, :] += 1j * (K2 @ Z[:, 1, :])
        res = float(np.max(np.abs(new - Y)))
        Y = new
        if res <= tol:
            break
    Z = R1 @ Y
    Ht = np.diag([1.0, np.exp(-2 * Om_t)]).astype(complex)
    h2 = np.exp(-2 * (Om_t - Om))
    Qt = Ht.copy()
    Qt[0, :] += 1j * (wts @ Z[:, 0, :])
    Qt[1, :] += 1j * ((wts * h2) @ Z[:, 1, :])
    return VolterraQ(nodes, Y, Qt, Ht, it, res)


def _scalar_exponent(family, law, k, s, t):
    """int_s^t (w + w'/(2w)) = int_s^t w + log sqrt(w(t)/w(s))."""
    wfun = lambda x: float(symbol(x, k, family, law).sqrt_abs_m)
    val, _ = quad(wfun, s, t, epsabs=0.0, epsrel=1e-13, limit=500)
    return val + 0.5 * np.log(wfun(t) / wfun(s))


def reconstruct_E(family, law, k, s, t, right_frame="initial", n1_coeff=N1_COEFF, normalized=False):
    """Fundamental matrix of D_t V = A V from the diagonalised representation.

    right_frame='terminal' evaluates the right refinement factor at t instead
    of s; that variant is kept only to measure how far it is from the true
    solution operator.
    """
    vq = solve_q(family, law, k, s, t, n1_coeff=n1_coeff)
    if t == s:
        return vq.Q.copy(), vq
    fr = build_frame([s, t], k, family, law, n1_coeff)
    right = fr.N1[1] if right_frame == "terminal" else fr.N1[0]
    Et = M @ fr.N1[1] @ vq.Q @ np.linalg.inv(right) @ M_INV
    if normalized:
        return Et, vq
    return np.exp(_scalar_exponent(family, law, k, s, t)) * Et, vq


def direct_E(family, law, k, s, t, rtol=1e-12, atol=1e-14):
    """Integrate V' = i A V from the two basis vectors, in the scaled variable
    exp(-int w) V so the solution stays O(1)."""

    def rhs(tt, y, rows):
        sv = symbol(tt, k, family, law)
        w, dw = sv.sqrt_abs_m, sv.d_sqrt_abs_m
        out = np.empty_like(y)
        for col in (0, 4):
            v1 = y[:, col] + 1j * y[:, col + 1]
            v2 = y[:, col + 2] + 1j * y[:, col + 3]
            d1 = (dw / w) * v1 + 1j * w * v2 - w * v1
            d2 = -1j * w * v1 - w * v2
            out[:, col], out[:, col + 1] = d1.real, d1.imag
            out[:, col + 2], out[:, col + 3] = d2.real, d2.imag
        return out

    y0 = np.array([[1.0, 0, 0, 0, 0, 0, 1.0, 0]])
    Y, _ = integrate(rhs, np.array([s]), y0, np.array([[t]]), rtol=rtol, atol=atol)
    y = Y[0, 0]
    E = np.array([[y[0] + 1j * y[1], y[4] + 1j * y[5]], [y[2] + 1j * y[3], y[6] + 1j * y[7]]])
    wint, _ = quad(lambda x: float(symbol(x, k, family, law).sqrt_abs_m), s, t, epsabs=0.0, epsrel=1e-13, limit=500)
    return np.exp(wint) * E


def equivalence_check(family, law, k, s, t, **kw):
    """Max elementwise relative deviation between the reconstructed and the
    directly integrated fundamental matrix."""
    E, _ = reconstruct_E(family, law, k, s, t, **kw)
    Ed = direct_E(family, law, k, s, t)
    # entries that vanish exactly are compared in absolute terms
    den = np.where(Ed != 0, np.abs(Ed), 1.0)
    return float(np.max(np.abs(E - Ed) / den))


def multipliers_from_E(family, law, k, s, t):
    """(phi1, phi2) of the chosen family recovered from the fundamental matrix."""
    Et, _ = reconstruct_E(family, law, k, s, t, normalized=True)
    fr = build_frame([s, t], k, family, law)
    ws, wt = fr.w
    expo = _scalar_exponent(family, law, k, s, t) - 0.5 * law.integral_b(s, t)
    amp = np.exp(expo) / wt
    bs = float(law.b(s))
    phi1 = amp * (ws * Et[0, 0] - 1j * (bs / 2) * Et[0, 1])
    phi2 = -1j * amp * Et[0, 1]
    return phi1, phi2


def q_decay_exponent(family, law, k, s_values, t_factor=4.0):
    """Fitted exponent of max|Q - H|(s t_factor, s) against 1 + s."""
    vals = []
    for s in s_values:
        vq = solve_q(family, law, k, s, t_factor * s)
        vals.append(np.max(np.abs(vq.Q - vq.H)))
    vals = np.array(vals)
    slope = float(np.polyfit(np.log1p(s_values), np.log(vals), 1)[0])
    return slope, vals


def estimate_t0(family, law, cfg: ZoneConfig, k_values, s_grid, t_factor=4.0, margin=2.0):
    """Smallest grid time s from which max|E~ - M H M^{-1}| stays below 1/(16 margin)
    for every probe frequency still elliptic on [s, t_factor s]."""
    worst = []
    for s in s_grid:
        err = 0.0
        for k in k_values:
            t = t_factor * s
            tt = np.linspace(s, t, 9)
            if np.any(classify_codes(tt, k, family, law, cfg) != 3):
                continue
            Et, vq = reconstruct_E(family, law, k, s, t, normalized=True)
            err = max(err, float(np.max(np.abs(Et - M @ vq.H @ M_INV))))
        worst.append(err)
    worst = np.array(worst)
    ok = worst <= 1.0 / (16.0 * margin)
    for i in range(len(s_grid)):
        if ok[i:].all():
            return float(s_grid[i]), worst
    return None, worst


def report(family, law, cfg, k, s, t, path=None):
    """Diagnostics for one elliptic probe; written as JSON when path is given."""
    tt = np.linspace(s, t, 17)
    if np.any(classify_codes(tt, k, family, law, cfg) != 3):
        raise ConfigError("probe segment leaves the elliptic zone")
    E, vq = reconstruct_E(family, law, k, s, t)
    Et, _ = reconstruct_E(family, law, k, s, t, normalized=True)
    out = {
        "family": family,
        "mu": law.mu,
        "lam": law.lam,
        "k": k,
        "s": s,
        "t": t,
        "picard_iterations": vq.iterations,
        "picard_residual": vq.residual,
        "volterra_nodes": int(vq.nodes.size),
        "q_minus_h_max": float(np.max(np.abs(vq.Q - vq.H))),
        "e_normalized_minus_limit_max": float(np.max(np.abs(Et - E_LIMIT))),
        "equivalence": equivalence_check(family, law, k, s, t),
        "equivalence_terminal_right_frame": equivalence_check(family, law, k, s, t, right_frame="terminal"),
        "equivalence_half_refinement": equivalence_check(family, law, k, s, t, n1_coeff=0.5),
        "E_real": E.real.tolist(),
        "E_imag": E.imag.tolist(),
    }
    if path is not None:
        with open(path, "w") as fh:
            json.dump(out, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return out
