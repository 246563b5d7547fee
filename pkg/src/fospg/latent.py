"""Superposition operators ``U(psi)(x) = Upsilon(x, psi(x))`` and their entropies.

Four families map the latent variable onto the open interval between the
bounds::

    fermi-dirac   lo + (hi - lo) sigmoid(z)
    algebraic     mid + half z / sqrt(1 + z^2)
    exp           lo + exp(z)
    softplus      lo + log(1 + exp(z))

Each family comes with the convex entropy ``R`` whose derivative is the
inverse of ``Upsilon`` and the conjugate ``R*(z) = z Upsilon(z) - R(Upsilon(z))``.
The latent argument is clamped to ``[-PSI_MAX, PSI_MAX]`` before any
exponential, so evaluation never overflows.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy.special import expit, spence

PSI_MAX = 500.0
DERIVATIVE_FLOOR = 1e-300

FERMI_DIRAC = "fermi-dirac"
ALGEBRAIC = "algebraic"
EXP = "exp"
SOFTPLUS = "softplus"
KINDS = (FERMI_DIRAC, ALGEBRAIC, EXP, SOFTPLUS)
DOUBLE_SIDED = (FERMI_DIRAC, ALGEBRAIC)

BoundValue = Union[float, Callable]


class BoundsError(ValueError):
    pass


@dataclass(frozen=True)
class Bounds:
    """Lower/upper obstacles: constants, +-inf, or callables ``f(x, y)``."""

    lower: BoundValue = -np.inf
    upper: BoundValue = np.inf

    @staticmethod
    def _eval(b, x):
        x = np.asarray(x, dtype=float)
        if callable(b):
            return np.broadcast_to(np.asarray(b(x[..., 0], x[..., 1]), dtype=float), x.shape[:-1]).copy()
        return np.full(x.shape[:-1], float(b))

    def evaluate(self, x):
        lo, hi = self._eval(self.lower, x), self._eval(self.upper, x)
        both = np.isfinite(lo) & np.isfinite(hi)
        if np.any(lo[both] >= hi[both]):
            raise BoundsError("lower bound must lie strictly below the upper bound")
        return lo, hi

    @property
    def has_lower(self):
        return callable(self.lower) or np.isfinite(self.lower)

    @property
    def has_upper(self):
        return callable(self.upper) or np.isfinite(self.upper)


def _clamp(z):
    return np.clip(np.asarray(z, dtype=float), -PSI_MAX, PSI_MAX)


def _softplus(z):
    return np.logaddexp(0.0, z)


def _xlogx(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = t[pos] * np.log(t[pos])
    return out


class PointwiseLatent:
    """Latent operator with its bounds frozen at a set of points."""

    def __init__(self, kind, lo, hi):
        self.kind = kind
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        if kind in DOUBLE_SIDED and not (np.all(np.isfinite(self.lo)) and np.all(np.isfinite(self.hi))):
            raise BoundsError(f"{kind} needs finite lower and upper bounds")
        if kind not in DOUBLE_SIDED and not np.all(np.isfinite(self.lo)):
            raise BoundsError(f"{kind} needs a finite lower bound")

    # -- Upsilon --------------------------------------------------------------
    def upsilon(self, z):
        z = _clamp(z)
        lo, hi = self.lo, self.hi
        if self.kind == FERMI_DIRAC:
            y = lo + (hi - lo) * expit(z)
            return np.clip(y, lo, hi)
        if self.kind == ALGEBRAIC:
            y = 0.5 * (lo + hi) + 0.5 * (hi - lo) * _ratio(z)
            return np.clip(y, lo, hi)
        if self.kind == EXP:
            return lo + np.exp(z)
        return lo + _softplus(z)

    def upsilon_prime(self, z):
        z = _clamp(z)
        if self.kind == FERMI_DIRAC:
            s = expit(z)
            d = (self.hi - self.lo) * s * expit(-z)
        elif self.kind == ALGEBRAIC:
            d = 0.5 * (self.hi - self.lo) * (1.0 + z * z) ** -1.5
        elif self.kind == EXP:
            d = np.exp(z)
        else:
            d = expit(z)
        return np.maximum(d, DERIVATIVE_FLOOR)

    def upsilon_inverse(self, y):
        """``R'(y)``: the latent value mapped to ``y``; ``y`` must be strictly inside."""
        y = np.asarray(y, dtype=float)
        a = y - self.lo
        if np.any(a <= 0) or np.any(self.hi - y <= 0):
            raise BoundsError("inverse requires a value strictly inside the bounds")
        if self.kind == FERMI_DIRAC:
            return np.log(a) - np.log(self.hi - y)
        if self.kind == ALGEBRAIC:
            t = (y - 0.5 * (self.lo + self.hi)) / (0.5 * (self.hi - self.lo))
            return t / np.sqrt((1 - t) * (1 + t))
        if self.kind == EXP:
            return np.log(a)
        # log(exp(a) - 1), stable for small and large a
        return np.where(a > 30, a + np.log1p(-np.exp(-a)), np.log(np.expm1(np.minimum(a, 30))))

    # -- entropy ----------------------------------------------------------------
    def entropy(self, y):
        """``R(y)``; +inf outside the closed interval between the bounds."""
        y = np.asarray(y, dtype=float)
        a = y - self.lo
        out = np.full(np.broadcast(y, self.lo).shape, np.inf)
        inside = (a >= 0) & (y <= self.hi)
        a = np.broadcast_to(a, out.shape)
        b = np.broadcast_to(self.hi - y, out.shape)
        if self.kind == FERMI_DIRAC:
            val = _xlogx(a) + _xlogx(b)
        elif self.kind == ALGEBRAIC:
            half = np.broadcast_to(0.5 * (self.hi - self.lo), out.shape)
            t = np.clip((a - half) / half, -1, 1)
            val = -half * np.sqrt((1 - t) * (1 + t))
        elif self.kind == EXP:
            val = _xlogx(a) - a
        else:
            # integral of log(exp(s) - 1) = s^2/2 + Li2(exp(-s)), Li2(x) = spence(1 - x)
            with np.errstate(over="ignore", invalid="ignore"):
                val = 0.5 * a * a + spence(1.0 - np.exp(-np.maximum(a, 0)))
        out[inside] = np.broadcast_to(val, out.shape)[inside]
        return out

    def entropy_prime(self, y):
        return self.upsilon_inverse(y)

    def conjugate(self, z):
        """``R*(z) = z Upsilon(z) - R(Upsilon(z))``."""
        z = np.asarray(z, dtype=float)
        if self.kind == FERMI_DIRAC:
            w = self.hi - self.lo
            return self.lo * z + w * _softplus(z) - _xlogx(w)
        if self.kind == EXP:
            return self.lo * z + np.exp(_clamp(z))
        y = self.upsilon(z)
        return z * y - self.entropy(y)

    def in_bounds(self, y, strict=True):
        y = np.asarray(y)
        if strict:
            return bool(np.all(y > self.lo) and np.all(y < self.hi))
        return bool(np.all(y >= self.lo) and np.all(y <= self.hi))


def _ratio(z):
    """``z / sqrt(1 + z^2)`` without overflow and never exceeding 1 in magnitude."""
    z = np.asarray(z, dtype=float)
    big = np.abs(z) > 1
    out = np.empty_like(z)
    out[~big] = z[~big] / np.sqrt(1 + z[~big] ** 2)
    zb = z[big]
    out[big] = np.sign(zb) / np.sqrt(1 + 1 / zb**2)
    return out


@dataclass(frozen=True)
class LatentOperator:
    kind: str
    bounds: Bounds

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown latent operator {self.kind!r}; choose from {KINDS}")

    def at(self, x) -> PointwiseLatent:
        lo, hi = self.bounds.evaluate(x)
        return PointwiseLatent(self.kind, lo, hi)

    # point-by-point conveniences
    def upsilon(self, x, z):
        return self.at(x).upsilon(z)

    def upsilon_prime(self, x, z):
        return self.at(x).upsilon_prime(z)

    def upsilon_inverse(self, x, y):
        return self.at(x).upsilon_inverse(y)

    def entropy(self, x, y):
        return self.at(x).entropy(y)

    def entropy_prime(self, x, y):
        return self.at(x).entropy_prime(y)

    def conjugate(self, x, z):
        return self.at(x).conjugate(z)


def discrete_bregman(lat: PointwiseLatent, u_vals, v_vals, weights):
    """``D_h(u, v) = (R(u) - R(v), 1)_h - (R'(v), u - v)_h``.

    ``u_vals``/``v_vals`` are values at the quadrature points of ``lat`` and
    ``weights`` the matching physical quadrature weights.
    """
    v_vals = np.asarray(v_vals, dtype=float)
    if not lat.in_bounds(v_vals, strict=True):
        raise BoundsError("second argument of D_h must lie strictly inside the bounds")
    ru = lat.entropy(u_vals)
    if not np.all(np.isfinite(ru)):
        raise BoundsError("first argument of D_h must lie within the closed bounds")
    integrand = ru - lat.entropy(v_vals) - lat.upsilon_inverse(v_vals) * (np.asarray(u_vals) - v_vals)
    return float(np.sum(weights * integrand))
