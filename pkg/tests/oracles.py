"""Independent reference computations used to freeze expected values.

Nothing here calls into ``plasmalab``; each oracle re-derives its quantity
from the bare formulas.
"""

from __future__ import annotations

import math

import numpy as np


def two_body_quadrature(ell: int, half_width: float = 5.0, points: int = 64):
    """Tensor-grid trapezoid quadrature of ``exp(-2 H_2)`` on ``[-a, a]^4``.

    ``H_2 = |z1|^2 + |z2|^2 - 2 ell log|z1 - z2|`` (N = 2, F = 1, eps = 0).
    Returns ``(log Z, E|z1|^2, E|z1 - z2|^2)``. The integrand is smooth and
    decays like a Gaussian, so the trapezoid rule converges geometrically.
    """
    x = np.linspace(-half_width, half_width, points)
    h = x[1] - x[0]
    w = np.full(points, h)
    w[[0, -1]] = h / 2
    X1, Y1 = np.meshgrid(x, x, indexing="ij")
    W1 = np.outer(w, w)
    a1 = (X1**2 + Y1**2).ravel()
    x1, y1, w1 = X1.ravel(), Y1.ravel(), W1.ravel()
    z = m1 = m2 = 0.0
    for k in range(len(x1)):
        dx = x1[k] - x1
        dy = y1[k] - y1
        r2 = dx * dx + dy * dy
        # exp(-2H) = exp(-2|z1|^2 - 2|z2|^2) |z1 - z2|^(4 ell)
        wt = w1[k] * w1 * np.exp(-2.0 * (a1[k] + a1)) * r2 ** (2 * ell)
        z += wt.sum()
        m1 += (wt * a1[k]).sum()
        m2 += (wt * r2).sum()
    return math.log(z), m1 / z, m2 / z


def two_body_free_energy(ell: int, **kw) -> float:
    """``F_2 = -(1/N) log Z_2`` with N = 2."""
    log_z, _, _ = two_body_quadrature(ell, **kw)
    return -0.5 * log_z


def two_body_minimum(ell: float):
    """1-D calculus for the symmetric pair at +-r: minimize ``2 r^2 - 2 ell log(2 r)``.

    Stationarity ``4 r - 2 ell / r = 0`` gives ``r = sqrt(ell / 2)``.
    Returns ``(separation, energy)``.
    """
    r = math.sqrt(ell / 2.0)
    return 2 * r, 2 * r * r - 2 * ell * math.log(2 * r)


def central_difference_gradient(fun, cfg: np.ndarray, step: float = 1e-5) -> np.ndarray:
    g = np.zeros_like(cfg)
    for idx in np.ndindex(cfg.shape):
        plus = cfg.copy()
        minus = cfg.copy()
        plus[idx] += step
        minus[idx] -= step
        g[idx] = (fun(plus) - fun(minus)) / (2 * step)
    return g


def five_point_laplacian(fun, z: np.ndarray, h: float = 1e-3) -> float:
    ex = np.array([h, 0.0])
    ey = np.array([0.0, h])
    return (fun(z + ex) + fun(z - ex) + fun(z + ey) + fun(z - ey) - 4 * fun(z)) / (h * h)
