"""Resolvents of maximally monotone operators and proximity operators.

Set-valued operators are exposed only through their resolvent map
``x -> J_{gamma A}(x)``; no graph representation exists anywhere in the
package.  The module offers plain functions for the individual maps and
thin immutable classes that bundle a map with its dimension so problem
builders can pass them around uniformly.  All maps are firmly
nonexpansive for every ``gamma > 0``.
"""

from __future__ import annotations

import numpy as np


def _check_gamma(gamma):
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma!r}")
    return float(gamma)


# ---------------------------------------------------------------------------
# Proximity operators (resolvents of subdifferentials)
# ---------------------------------------------------------------------------

def prox_norm(gamma, x):
    """Prox of gamma * Euclidean norm: block soft threshold."""
    _check_gamma(gamma)
    x = np.asarray(x, dtype=float)
    n = np.linalg.norm(x)
    if n <= gamma:
        return np.zeros_like(x)
    return (1.0 - gamma / n) * x


def prox_dist_interval(gamma, lo, hi, x):
    """Coordinatewise prox of gamma * distance to [lo, hi].

    Points within gamma of their interval are projected onto it; points
    farther away move toward it by exactly gamma.
    """
    _check_gamma(gamma)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if np.any(lo > hi):
        raise ValueError("interval bounds must satisfy lo <= hi")
    x = np.asarray(x, dtype=float)
    proj = np.clip(x, lo, hi)
    gap = x - proj
    return np.where(np.abs(gap) <= gamma, proj, x - gamma * np.sign(gap))


def prox_hinge(gamma, xi, u, x):
    """Prox of gamma * max{0, 1 - xi*<x, u>} with label xi in {-1, 1}.

    Three closed-form branches; the boundaries compare the raw inner
    product, with no tolerance.
    """
    _check_gamma(gamma)
    u = np.asarray(u, dtype=float)
    uu = float(u @ u)
    if uu == 0.0:
        raise ValueError("hinge feature vector must be nonzero")
    if xi not in (-1, 1):
        raise ValueError(f"hinge label must be -1 or 1, got {xi!r}")
    x = np.asarray(x, dtype=float)
    s = xi * float(u @ x)
    if s >= 1.0:
        return x.copy()
    if s <= 1.0 - gamma * uu:
        return x + (gamma * xi) * u
    return x + ((1.0 - s) / uu * xi) * u


def prox_quadratic(gamma, weight, center, x):
    """Prox of gamma * (weight/2) * ||x - center||^2."""
    _check_gamma(gamma)
    gw = gamma * weight
    return (np.asarray(x, dtype=float) + gw * np.asarray(center, dtype=float)) / (1.0 + gw)


def project_box(lo, hi, x):
    return np.clip(np.asarray(x, dtype=float), lo, hi)


# ---------------------------------------------------------------------------
# Resolvents of the clipping / constraint operators
# ---------------------------------------------------------------------------

def resolvent_hard_clip(gamma, r, clip_hi, x):
    """Resolvent of B = proj_{[0, clip_hi]} - r, coordinatewise closed form."""
    _check_gamma(gamma)
    t = np.asarray(x, dtype=float) + gamma * np.asarray(r, dtype=float)
    return t - gamma * np.minimum(np.maximum(0.0, t / (1.0 + gamma)), clip_hi)


def resolvent_soft_clip(gamma, level, x):
    """Resolvent of the saturation map F(t) = level*max{0,t}/(level+|t|).

    For nonnegative inputs the unique root of z + gamma*F(z) = x solves a
    quadratic; negative inputs pass through unchanged (F vanishes there).
    """
    _check_gamma(gamma)
    if not level > 0:
        raise ValueError(f"clip level must be positive, got {level!r}")
    x = np.asarray(x, dtype=float)
    a = x - level * (1.0 + gamma)
    root = 0.5 * (a + np.sqrt(a * a + 4.0 * level * np.maximum(x, 0.0)))
    return np.where(x >= 0.0, root, x)


def resolvent_mean_constraint(gamma, target, x):
    """Resolvent of t -> t - target on the 1-D aggregate variable."""
    _check_gamma(gamma)
    return (np.asarray(x, dtype=float) + gamma * target) / (1.0 + gamma)


# ---------------------------------------------------------------------------
# Spectral-phase constraint
# ---------------------------------------------------------------------------

def _conj_reflect(spectrum):
    """conj(S) sampled at negated frequencies, one axis at a time."""
    out = spectrum
    for ax in range(spectrum.ndim):
        out = np.roll(np.flip(out, axis=ax), 1, axis=ax)
    return np.conj(out)


def _real_inverse_dft(spectrum, shape, what):
    spectrum = 0.5 * (spectrum + _conj_reflect(spectrum))
    out = np.fft.ifftn(spectrum)
    scale = max(1.0, float(np.abs(out.real).max()))
    resid = float(np.abs(out.imag).max())
    if resid > 1e-9 * scale:
        raise ValueError(f"{what}: imaginary residue {resid:.3e} exceeds "
                         f"tolerance after symmetrization")
    return out.real.reshape(shape)


def phase_projection(theta, x, shape=None):
    """Project onto the set of signals whose DFT phase equals theta.

    Spectral bins with zero modulus stay at zero (the limit of the angle
    formula); the masked spectrum is Hermitian-symmetrized before the
    inverse transform so the output is exactly real.
    """
    x = np.asarray(x, dtype=float)
    shape = tuple(shape) if shape is not None else x.shape
    theta = np.asarray(theta, dtype=float).reshape(shape)
    spec = np.fft.fftn(x.reshape(shape))
    masked = (np.abs(spec)
              * np.maximum(np.cos(np.angle(spec) - theta), 0.0)
              * np.exp(1j * theta))
    return _real_inverse_dft(masked, shape, "phase projection").ravel()


def phase_residual_op(theta, x, shape=None):
    """Displacement x - P(x) from the phase-constraint set; firmly nonexpansive."""
    x = np.asarray(x, dtype=float)
    return x - phase_projection(theta, x, shape)


def resolvent_phase(gamma, theta, y, shape=None):
    """Resolvent of the phase-residual operator: a gamma-weighted average
    of the input with its phase projection."""
    _check_gamma(gamma)
    y = np.asarray(y, dtype=float)
    return (y + gamma * phase_projection(theta, y, shape)) / (1.0 + gamma)


# ---------------------------------------------------------------------------
# Dual / inverse transforms
# ---------------------------------------------------------------------------

def prox_conjugate(gamma, prox, y):
    """Prox of the convex conjugate through the Moreau decomposition.

    ``prox(g, x)`` must evaluate the prox of g*f at x; then
    prox_{gamma f*}(y) = y - gamma * prox_{f/gamma}(y/gamma).
    """
    _check_gamma(gamma)
    y = np.asarray(y, dtype=float)
    return y - gamma * prox(1.0 / gamma, y / gamma)


def inverse_resolvent(gamma, resolvent, y):
    """Resolvent of the inverse operator:
    J_{gamma B^{-1}}(y) = y - gamma * J_{B/gamma}(y/gamma)."""
    _check_gamma(gamma)
    y = np.asarray(y, dtype=float)
    return y - gamma * resolvent.resolve(1.0 / gamma, y / gamma)


# ---------------------------------------------------------------------------
# Operator objects
# ---------------------------------------------------------------------------

class Resolvent:
    """A maximally monotone operator on R^dim, represented by its resolvent."""

    dim: int

    def resolve(self, gamma, x) -> np.ndarray:
        if not gamma > 0:
            raise ValueError(f"gamma must be positive, got {gamma!r}")
        if type(x) is not np.ndarray or x.dtype != np.float64:
            x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"{type(self).__name__}: expected a vector of "
                             f"length {self.dim}, got shape {x.shape}")
        return self._resolve(float(gamma), x)

    def _resolve(self, gamma, x):
        raise NotImplementedError

    def cost_units(self) -> float:
        return 10.0 * self.dim

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim})"


class ProxNorm(Resolvent):
    """Subdifferential of weight * ||.||; resolvent is block soft thresholding."""

    def __init__(self, dim, weight=1.0):
        self.dim = int(dim)
        self.weight = float(weight)

    def _resolve(self, gamma, x):
        return prox_norm(gamma * self.weight, x)


class ProxDistInterval(Resolvent):
    """Subdifferential of the sum of coordinatewise interval distances."""

    def __init__(self, lo, hi):
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lo and hi must be 1-D arrays of equal length")
        if np.any(lo > hi):
            raise ValueError("interval bounds must satisfy lo <= hi")
        self.lo, self.hi = lo, hi
        self.dim = lo.size

    def _resolve(self, gamma, x):
        return prox_dist_interval(gamma, self.lo, self.hi, x)


class ProxQuadratic(Resolvent):
    """Subdifferential of (weight/2) * ||x - center||^2."""

    def __init__(self, weight, center):
        self.weight = float(weight)
        self.center = np.asarray(center, dtype=float)
        self.dim = self.center.size

    def _resolve(self, gamma, x):
        return prox_quadratic(gamma, self.weight, self.center, x)


class ProxHinge(Resolvent):
    """Subdifferential of weight * max{0, 1 - label*<x, feature>}."""

    def __init__(self, label, feature, weight=1.0):
        self.feature = np.asarray(feature, dtype=float)
        if not np.any(self.feature):
            raise ValueError("hinge feature vector must be nonzero")
        if label not in (-1, 1):
            raise ValueError(f"hinge label must be -1 or 1, got {label!r}")
        self.label = int(label)
        self.weight = float(weight)
        self.dim = self.feature.size
        self._uu = float(self.feature @ self.feature)

    def _resolve(self, gamma, x):
        g = gamma * self.weight
        s = self.label * float(self.feature @ x)
        if s >= 1.0:
            return x.copy()
        if s <= 1.0 - g * self._uu:
            return x + (g * self.label) * self.feature
        return x + ((1.0 - s) / self._uu * self.label) * self.feature


class ProjBox(Resolvent):
    """Normal cone of a box; the resolvent is the clamp, for every gamma."""

    def __init__(self, lo, hi, dim):
        self.lo = float(lo)
        self.hi = float(hi)
        if self.lo > self.hi:
            raise ValueError("box bounds must satisfy lo <= hi")
        self.dim = int(dim)

    def _resolve(self, gamma, x):
        return project_box(self.lo, self.hi, x)


class ResolventHardClip(Resolvent):
    """Saturating measurement proj_{[0, clip_hi]} shifted by observed data."""

    def __init__(self, data, clip_hi):
        self.data = np.asarray(data, dtype=float)
        self.clip_hi = float(clip_hi)
        self.dim = self.data.size

    def _resolve(self, gamma, x):
        return resolvent_hard_clip(gamma, self.data, self.clip_hi, x)


class ResolventSoftClip(Resolvent):
    """Smooth saturation at ``level`` shifted by observed data."""

    def __init__(self, level, data=None, dim=None):
        self.level = float(level)
        if data is None:
            if dim is None:
                raise ValueError("need data or dim")
            data = np.zeros(int(dim))
        self.data = np.asarray(data, dtype=float)
        self.dim = self.data.size

    def _resolve(self, gamma, x):
        return resolvent_soft_clip(gamma, self.level, x + gamma * self.data)


class ResolventMeanConstraint(Resolvent):
    """Aggregate (1-D) observation pinned to a target value."""

    dim = 1

    def __init__(self, target):
        self.target = float(target)

    def _resolve(self, gamma, x):
        return resolvent_mean_constraint(gamma, self.target, x)


class ResolventPhase(Resolvent):
    """DFT-phase constraint residual on a 1-D or 2-D grid, optionally
    shifted by observed data."""

    def __init__(self, theta, shape, data=None):
        self.shape = tuple(shape)
        self.theta = np.asarray(theta, dtype=float).reshape(self.shape)
        self.dim = int(np.prod(self.shape))
        self.data = (np.zeros(self.dim) if data is None
                     else np.asarray(data, dtype=float).ravel())

    def _resolve(self, gamma, x):
        return resolvent_phase(gamma, self.theta, x + gamma * self.data,
                               self.shape)

    def cost_units(self):
        n = self.dim
        return 20.0 * n * max(1.0, np.log2(n))


class ProxIndicatorPoint(Resolvent):
    """Normal cone of a single point; the resolvent is constant."""

    def __init__(self, point):
        self.point = np.asarray(point, dtype=float)
        self.dim = self.point.size

    def _resolve(self, gamma, x):
        return self.point.copy()


class CustomResolvent(Resolvent):
    """Wrap a user-supplied map (gamma, x) -> J_{gamma A}(x)."""

    def __init__(self, dim, fn):
        self.dim = int(dim)
        self._fn = fn

    def _resolve(self, gamma, x):
        return np.asarray(self._fn(gamma, x), dtype=float)


def zero_operator(dim) -> CustomResolvent:
    """The zero map; its resolvent is the identity at every scale."""
    return CustomResolvent(dim, lambda gamma, x: x.copy())
