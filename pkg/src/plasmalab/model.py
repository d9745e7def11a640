"""Plasma Hamiltonian, confining/perturbing potentials and correlation factors.

Configurations are stored in the plasma-scaled frame as float arrays of shape
``(N, 2)``; a single point is a length-2 array ``(x, y)``. The ``sqrt(N - 1)``
rescaling only enters through the correlation term ``W``.

The perturbed Hamiltonian is::

    H(Z) = sum_j (|z_j|^2 + eps U(z_j))
           + 2 ell / (N - 1) * sum_{i<j} w(z_i - z_j)
           + W(Z) / (N - 1)

with ``w(z) = -log|z|`` and ``W(Z) = -2 log|F(sqrt(N - 1) Z)|``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class SingularConfigurationError(ValueError):
    """Raised when a derivative is requested at coincident points or a zero of F."""


def as_configuration(points, n: int | None = None) -> np.ndarray:
    """Validate and copy ``points`` into a finite ``(N, 2)`` float array."""
    cfg = np.array(points, dtype=float)
    if cfg.ndim == 1 and cfg.shape == (2,):
        cfg = cfg[None, :]
    if cfg.ndim != 2 or cfg.shape[1] != 2 or cfg.shape[0] < 1:
        raise ValueError(f"configuration must have shape (N, 2) with N >= 1, got {cfg.shape}")
    if not np.all(np.isfinite(cfg)):
        raise ValueError("configuration contains non-finite coordinates")
    if n is not None and cfg.shape[0] != n:
        raise ValueError(f"configuration has {cfg.shape[0]} points, expected {n}")
    return cfg


def _points(z) -> tuple[np.ndarray, bool]:
    arr = np.asarray(z, dtype=float)
    scalar = arr.ndim == 1
    return np.atleast_2d(arr), scalar


# ---------------------------------------------------------------------------
# Potentials
# ---------------------------------------------------------------------------


class Potential:
    """One-body potential on the plane.

    Subclasses implement ``value`` and ``gradient`` on a point ``(2,)`` or an
    array of points ``(M, 2)``, and report ``laplacian_sup_norm``.
    """

    kind: str = "abstract"
    #: True when the potential is only piecewise C^2 (truncation kinks).
    has_kink: bool = False

    def value(self, z):
        raise NotImplementedError

    def gradient(self, z):
        raise NotImplementedError

    def laplacian_sup_norm(self) -> float:
        raise NotImplementedError

    def describe(self) -> dict:
        raise NotImplementedError

    def __call__(self, z):
        return self.value(z)

    @staticmethod
    def zero() -> "ZeroPotential":
        return ZeroPotential()

    @staticmethod
    def radial_power(s: float) -> "RadialPower":
        return RadialPower(float(s))

    @staticmethod
    def quadratic(axx: float = 1.0, axy: float = 0.0, ayy: float = 1.0) -> "Quadratic":
        return Quadratic(float(axx), float(axy), float(ayy))

    @staticmethod
    def custom_grid(xs, ys, values) -> "GridPotential":
        return GridPotential(xs, ys, values)


@dataclass(frozen=True)
class ZeroPotential(Potential):
    kind = "zero"

    def value(self, z):
        pts, scalar = _points(z)
        out = np.zeros(len(pts))
        return float(out[0]) if scalar else out

    def gradient(self, z):
        pts, scalar = _points(z)
        out = np.zeros_like(pts)
        return out[0] if scalar else out

    def laplacian_sup_norm(self) -> float:
        return 0.0

    def describe(self) -> dict:
        return {"kind": "zero"}


@dataclass(frozen=True)
class RadialPower(Potential):
    """``V(x) = |x|^s``."""

    s: float
    kind = "radial_power"

    def __post_init__(self):
        if not self.s > 0:
            raise ValueError(f"radial_power exponent must be positive, got {self.s}")

    def value(self, z):
        pts, scalar = _points(z)
        r = np.hypot(pts[:, 0], pts[:, 1])
        out = r**self.s
        return float(out[0]) if scalar else out

    def gradient(self, z):
        pts, scalar = _points(z)
        r2 = np.einsum("ij,ij->i", pts, pts)
        with np.errstate(divide="ignore", invalid="ignore"):
            coef = self.s * r2 ** (0.5 * self.s - 1.0)
        # the origin is a critical point for s > 1 and a cusp otherwise
        coef = np.where(r2 > 0, coef, 0.0)
        out = coef[:, None] * pts
        return out[0] if scalar else out

    def laplacian_sup_norm(self) -> float:
        # Laplacian of r^s is s^2 r^(s-2): bounded only for s == 2.
        if self.s == 2.0:
            return 4.0
        return math.inf

    def describe(self) -> dict:
        return {"kind": "radial_power", "s": self.s}


@dataclass(frozen=True)
class Quadratic(Potential):
    """``V(x, y) = axx x^2 + axy x y + ayy y^2``."""

    axx: float = 1.0
    axy: float = 0.0
    ayy: float = 1.0
    kind = "quadratic"

    def value(self, z):
        pts, scalar = _points(z)
        x, y = pts[:, 0], pts[:, 1]
        out = self.axx * x * x + self.axy * x * y + self.ayy * y * y
        return float(out[0]) if scalar else out

    def gradient(self, z):
        pts, scalar = _points(z)
        x, y = pts[:, 0], pts[:, 1]
        out = np.stack([2 * self.axx * x + self.axy * y, self.axy * x + 2 * self.ayy * y], axis=1)
        return out[0] if scalar else out

    def laplacian_sup_norm(self) -> float:
        return abs(2.0 * (self.axx + self.ayy))

    def describe(self) -> dict:
        return {"kind": "quadratic", "axx": self.axx, "axy": self.axy, "ayy": self.ayy}


class GridPotential(Potential):
    """Bilinear interpolation of tabulated values ``values[i, j] = V(xs[i], ys[j])``.

    Outside the grid the coordinates are clamped to the boundary, so the
    potential is extended constantly along the normal direction.
    """

    kind = "custom_grid"

    def __init__(self, xs, ys, values):
        self.xs = np.ascontiguousarray(xs, dtype=float)
        self.ys = np.ascontiguousarray(ys, dtype=float)
        self.values = np.ascontiguousarray(values, dtype=float)
        if self.xs.ndim != 1 or self.ys.ndim != 1 or len(self.xs) < 2 or len(self.ys) < 2:
            raise ValueError("grid axes must be 1-D with at least two nodes")
        if self.values.shape != (len(self.xs), len(self.ys)):
            raise ValueError(
                f"values shape {self.values.shape} does not match axes ({len(self.xs)}, {len(self.ys)})"
            )
        if np.any(np.diff(self.xs) <= 0) or np.any(np.diff(self.ys) <= 0):
            raise ValueError("grid axes must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid values must be finite")

    def _locate(self, pts):
        x = np.clip(pts[:, 0], self.xs[0], self.xs[-1])
        y = np.clip(pts[:, 1], self.ys[0], self.ys[-1])
        i = np.clip(np.searchsorted(self.xs, x, side="right") - 1, 0, len(self.xs) - 2)
        j = np.clip(np.searchsorted(self.ys, y, side="right") - 1, 0, len(self.ys) - 2)
        hx = self.xs[i + 1] - self.xs[i]
        hy = self.ys[j + 1] - self.ys[j]
        tx = (x - self.xs[i]) / hx
        ty = (y - self.ys[j]) / hy
        return i, j, tx, ty, hx, hy

    def value(self, z):
        pts, scalar = _points(z)
        i, j, tx, ty, _, _ = self._locate(pts)
        v = self.values
        out = (
            (1 - tx) * (1 - ty) * v[i, j]
            + tx * (1 - ty) * v[i + 1, j]
            + (1 - tx) * ty * v[i, j + 1]
            + tx * ty * v[i + 1, j + 1]
        )
        return float(out[0]) if scalar else out

    def gradient(self, z):
        pts, scalar = _points(z)
        i, j, tx, ty, hx, hy = self._locate(pts)
        v = self.values
        gx = ((1 - ty) * (v[i + 1, j] - v[i, j]) + ty * (v[i + 1, j + 1] - v[i, j + 1])) / hx
        gy = ((1 - tx) * (v[i, j + 1] - v[i, j]) + tx * (v[i + 1, j + 1] - v[i + 1, j])) / hy
        inside_x = (pts[:, 0] > self.xs[0]) & (pts[:, 0] < self.xs[-1])
        inside_y = (pts[:, 1] > self.ys[0]) & (pts[:, 1] < self.ys[-1])
        out = np.stack([np.where(inside_x, gx, 0.0), np.where(inside_y, gy, 0.0)], axis=1)
        return out[0] if scalar else out

    def laplacian_sup_norm(self) -> float:
        """Max over interior nodes of the 5-point (non-uniform 3+3) stencil."""
        v, xs, ys = self.values, self.xs, self.ys
        if len(xs) < 3 or len(ys) < 3:
            return 0.0
        hl = (xs[1:-1] - xs[:-2])[:, None]
        hr = (xs[2:] - xs[1:-1])[:, None]
        d2x = 2 * (hl * v[2:, 1:-1] - (hl + hr) * v[1:-1, 1:-1] + hr * v[:-2, 1:-1]) / (hl * hr * (hl + hr))
        kl = (ys[1:-1] - ys[:-2])[None, :]
        kr = (ys[2:] - ys[1:-1])[None, :]
        d2y = 2 * (kl * v[1:-1, 2:] - (kl + kr) * v[1:-1, 1:-1] + kr * v[1:-1, :-2]) / (kl * kr * (kl + kr))
        return float(np.max(np.abs(d2x + d2y)))

    def describe(self) -> dict:
        return {
            "kind": "custom_grid",
            "x_range": [float(self.xs[0]), float(self.xs[-1])],
            "y_range": [float(self.ys[0]), float(self.ys[-1])],
            "shape": list(self.values.shape),
        }


@dataclass(frozen=True)
class TruncatedPotential(Potential):
    """``V_B(x) = min(V(x), B)``."""

    inner: Potential
    cap: float
    kind = "truncated"
    has_kink = True

    def value(self, z):
        return np.minimum(self.inner.value(z), self.cap) if np.ndim(z) > 1 else min(self.inner.value(z), self.cap)

    def gradient(self, z):
        pts, scalar = _points(z)
        below = self.inner.value(pts) < self.cap
        out = np.where(below[:, None], self.inner.gradient(pts), 0.0)
        return out[0] if scalar else out

    def laplacian_sup_norm(self) -> float:
        # The kink on {V = B} is ignored; has_kink flags it for reports.
        return self.inner.laplacian_sup_norm()

    def describe(self) -> dict:
        return {"kind": "truncated", "cap": self.cap, "inner": self.inner.describe()}


def truncate_potential(v: Potential, cap: float) -> TruncatedPotential:
    """Return the potential ``min(v, cap)``."""
    cap = float(cap)
    if not math.isfinite(cap):
        raise ValueError("truncation cap must be finite")
    return TruncatedPotential(v, cap)


ZERO = ZeroPotential()


# ---------------------------------------------------------------------------
# Correlation factors
# ---------------------------------------------------------------------------


def _scale(n: int) -> float:
    return math.sqrt(n - 1)


def _neg2log(g: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return -2.0 * np.log(np.abs(g))


class CorrelationFactor:
    """Symmetric holomorphic prefactor F entering through ``W = -2 log|F(sqrt(N-1) Z)|``.

    Subclasses provide ``w_value`` and ``w_gradient``. ``w_delta`` has a generic
    full-recompute default; product-form factors override it with an O(N)
    update, which the minimizer and the sampler rely on.
    """

    name = "abstract"

    def w_value(self, cfg: np.ndarray, n: int) -> float:
        raise NotImplementedError

    def w_gradient(self, cfg: np.ndarray, n: int) -> np.ndarray:
        raise NotImplementedError

    def w_delta(self, cfg: np.ndarray, j: int, z_new, n: int) -> float:
        """``W`` after moving point ``j`` to ``z_new`` minus ``W`` before."""
        moved = cfg.copy()
        moved[j] = z_new
        return self.w_value(moved, n) - self.w_value(cfg, n)

    def w_difference(self, cfg_a: np.ndarray, cfg_b: np.ndarray, n: int) -> float:
        """``W(cfg_b) - W(cfg_a)``; product-form factors compute it term by term."""
        return self.w_value(cfg_b, n) - self.w_value(cfg_a, n)

    def kernel_terms(self):
        """Product-form description for the compiled sampler, or None."""
        return None

    @property
    def is_trivial(self) -> bool:
        return False

    def describe(self) -> dict:
        return {"kind": self.name}


class TrivialFactor(CorrelationFactor):
    """F = 1, i.e. the pure Laughlin plasma."""

    name = "trivial"

    def w_value(self, cfg, n):
        return 0.0

    def w_gradient(self, cfg, n):
        return np.zeros_like(np.asarray(cfg, dtype=float))

    def w_delta(self, cfg, j, z_new, n):
        return 0.0

    def kernel_terms(self):
        return KernelTerms()

    @property
    def is_trivial(self):
        return True

    def __eq__(self, other):
        return isinstance(other, TrivialFactor)

    def __hash__(self):
        return hash("trivial")


@dataclass(frozen=True)
class KernelTerms:
    """Flat product-form data: roots of f1, and the pair structure of f2."""

    one_body_roots: tuple = ()
    one_body_log_leading: float = 0.0
    diff_power: int = 0
    diff_sq_roots: tuple = ()
    sum_roots: tuple = ()
    pair_log_leading: float = 0.0


def _neg2log_ratio(ga: np.ndarray, delta: np.ndarray) -> float:
    """Sum of ``-2 log|ga + delta| + 2 log|ga|`` without cancellation."""
    num = np.real(delta * np.conj(2.0 * ga + delta))
    with np.errstate(divide="ignore", invalid="ignore"):
        return float(-np.sum(np.log1p(num / (ga.real**2 + ga.imag**2))))


def _complex_tuple(values) -> tuple:
    return tuple(complex(v) for v in values)


@dataclass(frozen=True)
class OneBodyPolynomial(CorrelationFactor):
    """``F = prod_j f1(z_j)`` with ``f1(u) = leading * prod_k (u - roots[k])``.

    Roots are given in the physical (unscaled) frame, since F is evaluated at
    ``sqrt(N - 1) Z``.
    """

    roots: tuple = ()
    leading: complex = 1.0
    name = "one_body"

    def __post_init__(self):
        object.__setattr__(self, "roots", _complex_tuple(self.roots))
        if self.leading == 0:
            raise ValueError("leading coefficient must be nonzero")

    @classmethod
    def from_coefficients(cls, coeffs: Sequence[complex]) -> "OneBodyPolynomial":
        """Build from polynomial coefficients, highest degree first."""
        coeffs = np.trim_zeros(np.asarray(coeffs, dtype=complex), "f")
        if len(coeffs) == 0:
            raise ValueError("zero polynomial is not an admissible factor")
        return cls(tuple(np.roots(coeffs)), complex(coeffs[0]))

    def _sz(self, cfg, n):
        cfg = np.asarray(cfg, dtype=float)
        return _scale(n) * (cfg[:, 0] + 1j * cfg[:, 1])

    def w_value(self, cfg, n):
        sz = self._sz(cfg, n)
        total = -2.0 * len(sz) * math.log(abs(self.leading))
        for r in self.roots:
            total += float(np.sum(_neg2log(sz - r)))
        return total

    def w_gradient(self, cfg, n):
        sz = self._sz(cfg, n)
        s = _scale(n)
        acc = np.zeros(len(sz), dtype=complex)
        for r in self.roots:
            d = sz - r
            if np.any(d == 0):
                raise SingularConfigurationError("configuration sits on a zero of the one-body factor")
            acc += s / d
        g = -2.0 * np.conj(acc)
        return np.stack([g.real, g.imag], axis=1)

    def w_delta(self, cfg, j, z_new, n):
        s = _scale(n)
        old = s * complex(cfg[j, 0], cfg[j, 1])
        new = s * complex(z_new[0], z_new[1])
        out = 0.0
        for r in self.roots:
            out += float(_neg2log(np.array([new - r]))[0] - _neg2log(np.array([old - r]))[0])
        return out

    def w_difference(self, cfg_a, cfg_b, n):
        sa = self._sz(cfg_a, n)
        delta = self._sz(cfg_b, n) - sa
        return sum(_neg2log_ratio(sa - r, delta) for r in self.roots)

    def kernel_terms(self):
        return KernelTerms(one_body_roots=self.roots, one_body_log_leading=math.log(abs(self.leading)))

    def describe(self):
        return {"kind": self.name, "roots": [[r.real, r.imag] for r in self.roots], "leading": [complex(self.leading).real, complex(self.leading).imag]}


@dataclass(frozen=True)
class PairPolynomial(CorrelationFactor):
    """``F = prod_{i<j} f2(z_i, z_j)`` with

    ``f2(u, v) = leading * (u - v)^diff_power * prod_k ((u - v)^2 - a_k) * prod_m (u + v - b_m)``,

    which is symmetric in (u, v) up to the sign of ``(u - v)^diff_power``
    (``|F|`` is symmetric either way). ``PairPolynomial()`` is ``prod (z_i - z_j)``.
    """

    diff_power: int = 1
    diff_sq_roots: tuple = ()
    sum_roots: tuple = ()
    leading: complex = 1.0
    name = "pair"

    def __post_init__(self):
        if int(self.diff_power) != self.diff_power or self.diff_power < 0:
            raise ValueError("diff_power must be a non-negative integer")
        object.__setattr__(self, "diff_power", int(self.diff_power))
        object.__setattr__(self, "diff_sq_roots", _complex_tuple(self.diff_sq_roots))
        object.__setattr__(self, "sum_roots", _complex_tuple(self.sum_roots))
        if self.leading == 0:
            raise ValueError("leading coefficient must be nonzero")

    def _pairs(self, cfg):
        cfg = np.asarray(cfg, dtype=float)
        z = cfg[:, 0] + 1j * cfg[:, 1]
        i, j = np.triu_indices(len(z), k=1)
        return z, i, j

    def w_value(self, cfg, n):
        z, i, j = self._pairs(cfg)
        s = _scale(n)
        d = s * (z[i] - z[j])
        total = -2.0 * len(i) * math.log(abs(self.leading))
        if self.diff_power:
            total += self.diff_power * float(np.sum(_neg2log(d)))
        for a in self.diff_sq_roots:
            total += float(np.sum(_neg2log(d * d - a)))
        for b in self.sum_roots:
            total += float(np.sum(_neg2log(s * (z[i] + z[j]) - b)))
        return total

    def w_gradient(self, cfg, n):
        z, i, j = self._pairs(cfg)
        s = _scale(n)
        diff = z[i] - z[j]
        # d/dz_i of log g for each pair; the z_j derivative follows by symmetry/antisymmetry
        dlog_i = np.zeros(len(i), dtype=complex)
        dlog_j = np.zeros(len(i), dtype=complex)
        if np.any(diff == 0) and (self.diff_power or self.diff_sq_roots):
            raise SingularConfigurationError("coincident points are zeros of the pair factor")
        if self.diff_power:
            t = self.diff_power / diff
            dlog_i += t
            dlog_j -= t
        for a in self.diff_sq_roots:
            g = s * s * diff * diff - a
            if np.any(g == 0):
                raise SingularConfigurationError("configuration sits on a zero of the pair factor")
            t = 2 * s * s * diff / g
            dlog_i += t
            dlog_j -= t
        for b in self.sum_roots:
            g = s * (z[i] + z[j]) - b
            if np.any(g == 0):
                raise SingularConfigurationError("configuration sits on a zero of the pair factor")
            t = s / g
            dlog_i += t
            dlog_j += t
        acc = np.zeros(len(z), dtype=complex)
        np.add.at(acc, i, dlog_i)
        np.add.at(acc, j, dlog_j)
        g = -2.0 * np.conj(acc)
        return np.stack([g.real, g.imag], axis=1)

    def _pair_terms(self, zj, others, s):
        d = s * (zj - others)
        out = np.zeros(len(others))
        if self.diff_power:
            out += self.diff_power * _neg2log(d)
        for a in self.diff_sq_roots:
            out += _neg2log(d * d - a)
        for b in self.sum_roots:
            out += _neg2log(s * (zj + others) - b)
        return out

    def w_delta(self, cfg, j, z_new, n):
        cfg = np.asarray(cfg, dtype=float)
        z = cfg[:, 0] + 1j * cfg[:, 1]
        others = np.delete(z, j)
        s = _scale(n)
        new = self._pair_terms(complex(z_new[0], z_new[1]), others, s)
        old = self._pair_terms(z[j], others, s)
        with np.errstate(invalid="ignore"):
            return float(np.sum(new) - np.sum(old))

    def w_difference(self, cfg_a, cfg_b, n):
        za, i, j = self._pairs(cfg_a)
        zb = np.asarray(cfg_b, dtype=float)
        zb = zb[:, 0] + 1j * zb[:, 1]
        s = _scale(n)
        da = s * (za[i] - za[j])
        dd = s * ((zb[i] - zb[j]) - (za[i] - za[j]))
        out = 0.0
        if self.diff_power:
            out += self.diff_power * _neg2log_ratio(da, dd)
        for a in self.diff_sq_roots:
            out += _neg2log_ratio(da * da - a, dd * (2.0 * da + dd))
        for b in self.sum_roots:
            sa = s * (za[i] + za[j])
            out += _neg2log_ratio(sa - b, s * ((zb[i] + zb[j]) - (za[i] + za[j])))
        return out

    def kernel_terms(self):
        return KernelTerms(
            diff_power=self.diff_power,
            diff_sq_roots=self.diff_sq_roots,
            sum_roots=self.sum_roots,
            pair_log_leading=math.log(abs(self.leading)),
        )

    def describe(self):
        return {
            "kind": self.name,
            "diff_power": self.diff_power,
            "diff_sq_roots": [[a.real, a.imag] for a in self.diff_sq_roots],
            "sum_roots": [[b.real, b.imag] for b in self.sum_roots],
        }


@dataclass(frozen=True)
class CompositeFactor(CorrelationFactor):
    """Product of a one-body and a pair factor (the ``V_2^D`` class)."""

    one_body: OneBodyPolynomial = field(default_factory=OneBodyPolynomial)
    pair: PairPolynomial = field(default_factory=PairPolynomial)
    name = "composite"

    def w_value(self, cfg, n):
        return self.one_body.w_value(cfg, n) + self.pair.w_value(cfg, n)

    def w_gradient(self, cfg, n):
        return self.one_body.w_gradient(cfg, n) + self.pair.w_gradient(cfg, n)

    def w_delta(self, cfg, j, z_new, n):
        return self.one_body.w_delta(cfg, j, z_new, n) + self.pair.w_delta(cfg, j, z_new, n)

    def w_difference(self, cfg_a, cfg_b, n):
        return self.one_body.w_difference(cfg_a, cfg_b, n) + self.pair.w_difference(cfg_a, cfg_b, n)

    def kernel_terms(self):
        a = self.one_body.kernel_terms()
        b = self.pair.kernel_terms()
        return KernelTerms(
            one_body_roots=a.one_body_roots,
            one_body_log_leading=a.one_body_log_leading,
            diff_power=b.diff_power,
            diff_sq_roots=b.diff_sq_roots,
            sum_roots=b.sum_roots,
            pair_log_leading=b.pair_log_leading,
        )

    def describe(self):
        return {"kind": self.name, "one_body": self.one_body.describe(), "pair": self.pair.describe()}


# ---------------------------------------------------------------------------
# Parameters and Hamiltonian
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PlasmaParams:
    n: int
    ell: int
    epsilon: float = 0.0
    u: Potential = ZERO

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")
        if int(self.ell) != self.ell or self.ell < 1:
            raise ValueError(f"ell must be a positive integer, got {self.ell}")
        if not (self.epsilon >= 0 and math.isfinite(self.epsilon)):
            raise ValueError(f"epsilon must be finite and >= 0, got {self.epsilon}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "ell", int(self.ell))
        object.__setattr__(self, "epsilon", float(self.epsilon))

    @property
    def temperature(self) -> float:
        return 1.0 / self.n

    @property
    def pair_coefficient(self) -> float:
        """``2 ell / (N - 1)``; zero for a single particle (empty sum)."""
        return 0.0 if self.n == 1 else 2.0 * self.ell / (self.n - 1)

    def describe(self) -> dict:
        return {
            "n": self.n,
            "ell": self.ell,
            "epsilon": self.epsilon,
            "temperature": self.temperature,
            "u": self.u.describe(),
        }


@dataclass(frozen=True)
class EnergyBreakdown:
    confinement: float
    coulomb: float
    correlation: float
    perturbation: float
    total: float

    def as_dict(self) -> dict:
        return {
            "confinement": self.confinement,
            "coulomb": self.coulomb,
            "correlation": self.correlation,
            "perturbation": self.perturbation,
            "total": self.total,
        }


def coulomb_kernel(z) -> float:
    """2D Coulomb kernel ``-log|z|``; ``+inf`` at the origin."""
    r = math.hypot(float(z[0]), float(z[1]))
    if r == 0.0:
        return math.inf
    return -math.log(r)


def _canonical(cfg: np.ndarray) -> np.ndarray:
    # lexicographic sort fixes the summation order, making energy exactly permutation invariant
    order = np.lexsort((cfg[:, 1], cfg[:, 0]))
    return cfg[order]


def _coulomb_sum(cfg: np.ndarray) -> float:
    n = len(cfg)
    if n < 2:
        return 0.0
    i, j = np.triu_indices(n, k=1)
    d = cfg[i] - cfg[j]
    r2 = np.einsum("ij,ij->i", d, d)
    if np.any(r2 == 0):
        return math.inf
    return float(-0.5 * np.sum(np.log(r2)))


def _correlation(cfg: np.ndarray, p: PlasmaParams, f: CorrelationFactor) -> float:
    if f.is_trivial:
        return 0.0
    if p.n == 1:
        raise ValueError("a non-trivial correlation factor needs n >= 2 (W/(N-1) is undefined)")
    return f.w_value(cfg, p.n) / (p.n - 1)


def energy(cfg, p: PlasmaParams, f: CorrelationFactor | None = None) -> EnergyBreakdown:
    """Evaluate the perturbed plasma Hamiltonian term by term.

    Coincident points give ``coulomb = +inf``; a zero of F gives
    ``correlation = +inf``. Either makes ``total`` infinite.
    """
    f = f or TrivialFactor()
    cfg = _canonical(as_configuration(cfg, p.n))
    confinement = float(np.sum(cfg * cfg))
    perturbation = p.epsilon * float(np.sum(p.u.value(cfg))) if p.epsilon else 0.0
    coulomb = p.pair_coefficient * _coulomb_sum(cfg) if p.n > 1 else 0.0
    correlation = _correlation(cfg, p, f)
    total = confinement + coulomb + correlation + perturbation
    return EnergyBreakdown(confinement, coulomb, correlation, perturbation, total)


def total_energy(cfg, p: PlasmaParams, f: CorrelationFactor | None = None) -> float:
    return energy(cfg, p, f).total


def gradient(cfg, p: PlasmaParams, f: CorrelationFactor | None = None) -> np.ndarray:
    """Analytic gradient ``dH/dz_j`` as an ``(N, 2)`` array."""
    f = f or TrivialFactor()
    cfg = as_configuration(cfg, p.n)
    g = 2.0 * cfg
    if p.epsilon:
        g = g + p.epsilon * p.u.gradient(cfg)
    if p.n > 1:
        d = cfg[:, None, :] - cfg[None, :, :]
        r2 = np.einsum("ijk,ijk->ij", d, d)
        np.fill_diagonal(r2, np.inf)
        if np.any(r2 == 0):
            raise SingularConfigurationError("gradient undefined at coincident points")
        g = g - p.pair_coefficient * np.sum(d / r2[:, :, None], axis=1)
        if not f.is_trivial:
            g = g + f.w_gradient(cfg, p.n) / (p.n - 1)
    elif not f.is_trivial:
        raise ValueError("a non-trivial correlation factor needs n >= 2")
    return g


def energy_delta(cfg: np.ndarray, j: int, z_new, p: PlasmaParams, f: CorrelationFactor | None = None) -> float:
    """``H`` after moving point ``j`` to ``z_new`` minus ``H`` before, in O(N)."""
    f = f or TrivialFactor()
    z_old = cfg[j]
    z_new = np.asarray(z_new, dtype=float)
    out = float(z_new @ z_new - z_old @ z_old)
    if p.epsilon:
        out += p.epsilon * (p.u.value(z_new) - p.u.value(z_old))
    if p.n > 1:
        others = np.delete(cfg, j, axis=0)
        dn = others - z_new
        do = others - z_old
        rn = np.einsum("ij,ij->i", dn, dn)
        if np.any(rn == 0):
            return math.inf
        ro = np.einsum("ij,ij->i", do, do)
        out += p.pair_coefficient * float(-0.5 * np.sum(np.log(rn)) + 0.5 * np.sum(np.log(ro)))
        if not f.is_trivial:
            out += f.w_delta(cfg, j, z_new, p.n) / (p.n - 1)
    return out


def energy_difference(cfg_a, cfg_b, p: PlasmaParams, f: CorrelationFactor | None = None) -> float:
    """``H(cfg_b) - H(cfg_a)`` evaluated term by term to avoid cancellation.

    Used by line searches, where the two configurations are close and the
    plain difference of totals would be dominated by rounding.
    """
    f = f or TrivialFactor()
    a = np.asarray(cfg_a, dtype=float)
    b = np.asarray(cfg_b, dtype=float)
    step = b - a
    out = float(np.sum(step * (a + b)))
    if p.epsilon:
        out += p.epsilon * float(np.sum(p.u.value(b) - p.u.value(a)))
    if p.n > 1:
        i, j = np.triu_indices(p.n, k=1)
        da = a[i] - a[j]
        dd = step[i] - step[j]
        ra = np.einsum("ij,ij->i", da, da)
        rel = np.einsum("ij,ij->i", dd, 2.0 * da + dd) / ra
        if np.any(rel <= -1.0):
            return math.inf
        out += p.pair_coefficient * float(-0.5 * np.sum(np.log1p(rel)))
        if not f.is_trivial:
            out += f.w_difference(a, b, p.n) / (p.n - 1)
    return out


def pair_factor_shift_constant(p: PlasmaParams) -> float:
    """Constant ``-(N/2) log(N-1)`` relating ``(ell, prod(z_i - z_j))`` to ``(ell + 1, F = 1)``."""
    if p.n < 2:
        raise ValueError("pair factor shift needs n >= 2")
    return -0.5 * p.n * math.log(p.n - 1)
