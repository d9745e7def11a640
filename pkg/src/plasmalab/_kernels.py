"""Compiled Metropolis sweeps for product-form correlation factors.

Potentials are flattened into ``(kind, params, grid_x, grid_y, grid_v, cap)``
so the one-body term can be evaluated inside the compiled loop.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from plasmalab.model import (
    GridPotential,
    KernelTerms,
    Potential,
    Quadratic,
    RadialPower,
    TruncatedPotential,
    ZeroPotential,
)

KIND_ZERO = 0
KIND_RADIAL = 1
KIND_QUADRATIC = 2
KIND_GRID = 3

_EMPTY = np.zeros(2)
_EMPTY_GRID = np.zeros((2, 2))


class UnsupportedPotential(TypeError):
    pass


def flatten_potential(v: Potential):
    cap = math.inf
    while isinstance(v, TruncatedPotential):
        cap = min(cap, v.cap)
        v = v.inner
    params = np.zeros(3)
    gx, gy, gv = _EMPTY, _EMPTY, _EMPTY_GRID
    if isinstance(v, ZeroPotential):
        kind = KIND_ZERO
    elif isinstance(v, RadialPower):
        kind = KIND_RADIAL
        params[0] = v.s
    elif isinstance(v, Quadratic):
        kind = KIND_QUADRATIC
        params[:] = (v.axx, v.axy, v.ayy)
    elif isinstance(v, GridPotential):
        kind = KIND_GRID
        gx, gy, gv = v.xs, v.ys, v.values
    else:
        raise UnsupportedPotential(type(v).__name__)
    return kind, params, gx, gy, gv, cap


@njit(cache=True)
def _grid_value(gx, gy, gv, x, y):
    x = min(max(x, gx[0]), gx[-1])
    y = min(max(y, gy[0]), gy[-1])
    i = np.searchsorted(gx, x, side="right") - 1
    j = np.searchsorted(gy, y, side="right") - 1
    i = min(max(i, 0), len(gx) - 2)
    j = min(max(j, 0), len(gy) - 2)
    tx = (x - gx[i]) / (gx[i + 1] - gx[i])
    ty = (y - gy[j]) / (gy[j + 1] - gy[j])
    return (
        (1 - tx) * (1 - ty) * gv[i, j]
        + tx * (1 - ty) * gv[i + 1, j]
        + (1 - tx) * ty * gv[i, j + 1]
        + tx * ty * gv[i + 1, j + 1]
    )


@njit(cache=True)
def potential_value(kind, params, gx, gy, gv, cap, x, y):
    if kind == KIND_ZERO:
        v = 0.0
    elif kind == KIND_RADIAL:
        v = math.hypot(x, y) ** params[0]
    elif kind == KIND_QUADRATIC:
        v = params[0] * x * x + params[1] * x * y + params[2] * y * y
    else:
        v = _grid_value(gx, gy, gv, x, y)
    return min(v, cap)


@njit(cache=True)
def _one_body(x, y, eps, kind, params, gx, gy, gv, cap, s, inv_nm1, roots):
    e = x * x + y * y
    if eps != 0.0:
        e += eps * potential_value(kind, params, gx, gy, gv, cap, x, y)
    if len(roots) > 0:
        sz = complex(s * x, s * y)
        acc = 0.0
        for k in range(len(roots)):
            a = abs(sz - roots[k])
            if a == 0.0:
                return math.inf
            acc += math.log(a)
        e += -2.0 * acc * inv_nm1
    return e


@njit(cache=True)
def _pair_row(pos, j, x, y, coul, s, inv_nm1, diff_power, dsq_roots, sum_roots):
    """Sum over k != j of the pair energy between (x, y) and pos[k]."""
    n = pos.shape[0]
    e = 0.0
    has_extra = len(dsq_roots) > 0 or len(sum_roots) > 0
    for k in range(n):
        if k == j:
            continue
        dx = x - pos[k, 0]
        dy = y - pos[k, 1]
        r2 = dx * dx + dy * dy
        if r2 == 0.0:
            return math.inf
        # -log|d| carries 2 ell/(N-1) from w and 2 p/(N-1) from (u - v)^p
        e += -0.5 * (coul + 2.0 * diff_power * inv_nm1) * math.log(r2)
        if has_extra:
            d = complex(s * dx, s * dy)
            for a in dsq_roots:
                g = abs(d * d - a)
                if g == 0.0:
                    return math.inf
                e += -2.0 * math.log(g) * inv_nm1
            sm = complex(s * (x + pos[k, 0]), s * (y + pos[k, 1]))
            for b in sum_roots:
                g = abs(sm - b)
                if g == 0.0:
                    return math.inf
                e += -2.0 * math.log(g) * inv_nm1
    return e


@njit(cache=True, nogil=True)
def run_sweeps(
    pos,
    normals,
    uniforms,
    sigma,
    beta,
    record,
    out,
    energy_out,
    e_current,
    eps,
    kind,
    params,
    gx,
    gy,
    gv,
    cap,
    coul,
    s,
    inv_nm1,
    roots,
    diff_power,
    dsq_roots,
    sum_roots,
):
    """Run ``len(normals)`` systematic-scan sweeps in place.

    ``record[t]`` marks sweeps whose end state is copied into ``out``; the
    running energy after each sweep goes to ``energy_out``. Returns the
    number of accepted single-particle moves and the final energy.
    """
    n = pos.shape[0]
    accepted = 0
    slot = 0
    for t in range(normals.shape[0]):
        for j in range(n):
            x0 = pos[j, 0]
            y0 = pos[j, 1]
            x1 = x0 + sigma * normals[t, j, 0]
            y1 = y0 + sigma * normals[t, j, 1]
            e_new = _one_body(x1, y1, eps, kind, params, gx, gy, gv, cap, s, inv_nm1, roots)
            if e_new == math.inf:
                continue
            if n > 1:
                pr = _pair_row(pos, j, x1, y1, coul, s, inv_nm1, diff_power, dsq_roots, sum_roots)
                if pr == math.inf:
                    continue
                e_new += pr
            e_old = _one_body(x0, y0, eps, kind, params, gx, gy, gv, cap, s, inv_nm1, roots)
            if n > 1:
                e_old += _pair_row(pos, j, x0, y0, coul, s, inv_nm1, diff_power, dsq_roots, sum_roots)
            dh = e_new - e_old
            if dh <= 0.0 or uniforms[t, j] < math.exp(-beta * dh):
                pos[j, 0] = x1
                pos[j, 1] = y1
                e_current += dh
                accepted += 1
        energy_out[t] = e_current
        if record[t]:
            out[slot, :, :] = pos
            slot += 1
    return accepted, e_current


def kernel_arguments(terms: KernelTerms, n: int, ell: int, epsilon: float, u: Potential):
    kind, params, gx, gy, gv, cap = flatten_potential(u)
    s = math.sqrt(n - 1)
    inv_nm1 = 0.0 if n == 1 else 1.0 / (n - 1)
    coul = 0.0 if n == 1 else 2.0 * ell / (n - 1)
    return (
        float(epsilon),
        kind,
        params,
        gx,
        gy,
        gv,
        float(cap),
        coul,
        s,
        inv_nm1,
        np.array(terms.one_body_roots, dtype=np.complex128),
        float(terms.diff_power),
        np.array(terms.diff_sq_roots, dtype=np.complex128),
        np.array(terms.sum_roots, dtype=np.complex128),
    )
