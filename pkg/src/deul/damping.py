"""Time-dependent damping coefficient b(t) = mu * (1 + t)^(-lam) and its closed forms."""

from dataclasses import dataclass

import numpy as np


class ConfigError(ValueError):
    """Raised for invalid parameters; the CLI maps it to exit code 2."""


@dataclass(frozen=True)
class DampingLaw:
    mu: float
    lam: float

    def __post_init__(self):
        if not (np.isfinite(self.mu) and self.mu > 0):
            raise ConfigError(f"mu must be positive, got {self.mu}")
        if not (np.isfinite(self.lam) and 0.0 <= self.lam < 1.0):
            raise ConfigError(f"lam must lie in [0, 1), got {self.lam}")

    def b(self, t):
        return self.mu * (1.0 + np.asarray(t, dtype=float)) ** (-self.lam)

    def db(self, t):
        return -self.lam * self.mu * (1.0 + np.asarray(t, dtype=float)) ** (-self.lam - 1.0)

    def d2b(self, t):
        lam = self.lam
        return lam * (lam + 1.0) * self.mu * (1.0 + np.asarray(t, dtype=float)) ** (-lam - 2.0)

    def d3b(self, t):
        lam = self.lam
        return -lam * (lam + 1.0) * (lam + 2.0) * self.mu * (1.0 + np.asarray(t, dtype=float)) ** (-lam - 3.0)

    def integral_b(self, s, t):
        """Exact value of the integral of b over [s, t]."""
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        p = 1.0 - self.lam
        # log1p/expm1 keep short intervals accurate
        return self.mu * (1.0 + s) ** p * np.expm1(p * (np.log1p(t) - np.log1p(s))) / p

    def integral_inv_b(self, s, t):
        """Exact value of the integral of 1/b over [s, t]."""
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        p = 1.0 + self.lam
        return (1.0 + s) ** p * np.expm1(p * (np.log1p(t) - np.log1p(s))) / (self.mu * p)

    def vorticity_factor(self, s, t):
        """Exact decay factor exp(-int_s^t b) of the curl part of the velocity."""
        return np.exp(-self.integral_b(s, t))


@dataclass(frozen=True)
class Envelope:
    """Diffusive-scale decay envelopes for times 0 <= s <= t."""

    law: DampingLaw

    def gamma(self, t, s=0.0):
        p = 1.0 + self.law.lam
        t = np.asarray(t, dtype=float)
        s = np.asarray(s, dtype=float)
        return (1.0 + ((1.0 + t) ** p - (1.0 + s) ** p)) ** -0.5

    def theta(self, t, s=0.0):
        t = np.asarray(t, dtype=float)
        return np.minimum(self.gamma(t, s), (1.0 + t) ** (-self.law.lam))


def check_interval(s, t):
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(s < 0) or np.any(t < s):
        raise ConfigError("times must satisfy 0 <= s <= t")
