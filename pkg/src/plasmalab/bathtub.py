"""Bathtub problem: minimize ``int V rho`` over ``0 <= rho <= m``, ``int rho = 1``.

The minimizer fills the sublevel sets of V at the maximal density m up to a
fill level lambda. Radial power laws have a closed form; general potentials
are solved by sorting grid cells by V.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from plasmalab.model import Potential, truncate_potential


@dataclass(frozen=True)
class BathtubProblem:
    v: Potential
    max_density: float
    half_width: float | None = None  # square domain [-a, a]^2; auto when None
    h: float | None = None  # cell size; auto when None
    center: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not self.max_density > 0:
            raise ValueError("max_density must be positive")
        if self.half_width is not None and not self.half_width > 0:
            raise ValueError("half_width must be positive")
        if self.h is not None and not self.h > 0:
            raise ValueError("h must be positive")


@dataclass
class BathtubResult:
    energy: float
    fill_level: float
    mass: float
    max_density: float
    # closed form
    radius: float | None = None
    # grid solution
    xs: np.ndarray | None = None
    ys: np.ndarray | None = None
    density: np.ndarray | None = None
    h: float | None = None
    v_cells: np.ndarray | None = None

    def as_dict(self) -> dict:
        out = {
            "energy": self.energy,
            "fill_level": self.fill_level,
            "mass": self.mass,
            "max_density": self.max_density,
        }
        if self.radius is not None:
            out["radius"] = self.radius
        if self.h is not None:
            out["h"] = self.h
            out["grid_shape"] = list(self.density.shape)
        return out

    def density_rows(self):
        """``(x, y, rho)`` rows of the grid solution."""
        if self.density is None:
            raise ValueError("closed-form result has no density grid")
        X, Y = np.meshgrid(self.xs, self.ys, indexing="ij")
        return zip(X.ravel(), Y.ravel(), self.density.ravel())


def bathtub_radial_power(s: float, ell_eff: float) -> BathtubResult:
    """Closed form for ``V = |x|^s`` and density cap ``1/(pi ell_eff)``.

    The plateau fills the disk of radius ``sqrt(ell_eff)``; the energy is
    ``2/(s+2) ell_eff^(s/2)`` and the fill level ``ell_eff^(s/2)``.
    """
    if not (s > 0 and ell_eff > 0):
        raise ValueError("s and ell_eff must be positive")
    return BathtubResult(
        energy=2.0 / (s + 2.0) * ell_eff ** (s / 2.0),
        fill_level=ell_eff ** (s / 2.0),
        mass=1.0,
        max_density=1.0 / (math.pi * ell_eff),
        radius=math.sqrt(ell_eff),
    )


def _fill(vals: np.ndarray, m: float, cell_area: float, reverse_ties: bool):
    flat = vals.ravel()
    if reverse_ties:
        # reversed cell order among equal V
        order = flat.size - 1 - np.argsort(flat[::-1], kind="stable")
    else:
        order = np.argsort(flat, kind="stable")
    cell_mass = m * cell_area
    n_full = int(math.floor(1.0 / cell_mass))
    rho = np.zeros(flat.size)
    rho[order[:n_full]] = m
    rest = 1.0 - n_full * cell_mass
    last = order[n_full - 1] if n_full > 0 else order[0]
    if rest > 1e-15 * cell_mass and n_full < flat.size:
        rho[order[n_full]] = rest / cell_area
        last = order[n_full]
    lam = float(flat[last])
    return rho.reshape(vals.shape), lam


def bathtub_solve_grid(prob: BathtubProblem, reverse_ties: bool = False) -> BathtubResult:
    """Level-set fill on a square grid of cell centers.

    Cells are filled at density m in ascending order of V (ties in cell order,
    or reversed when ``reverse_ties``) until the mass reaches 1, the last cell
    fractionally. When the domain is not given it is doubled until it holds
    mass 1 and no boundary cell lies strictly below the fill level.
    """
    m = prob.max_density
    h = prob.h if prob.h is not None else 1.0 / (100.0 * math.sqrt(m))
    auto = prob.half_width is None
    a = prob.half_width if not auto else max(math.sqrt(1.0 / m), 4 * h)
    cx, cy = prob.center
    while True:
        k = int(math.ceil(a / h))
        centers = (np.arange(-k, k) + 0.5) * h
        xs, ys = cx + centers, cy + centers
        fillable = m * h * h * len(xs) * len(ys)
        if fillable < 1.0:
            if not auto:
                raise ValueError(f"domain too small: fillable mass {fillable:.4g} < 1")
            a *= 2.0
            continue
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        vals = np.asarray(prob.v.value(np.stack([X.ravel(), Y.ravel()], axis=1))).reshape(X.shape)
        rho, lam = _fill(vals, m, h * h, reverse_ties)
        boundary = np.concatenate([vals[0], vals[-1], vals[:, 0], vals[:, -1]])
        if auto and boundary.min() < lam:
            a *= 2.0
            continue
        energy = float(np.sum(vals * rho) * h * h)
        mass = float(np.sum(rho) * h * h)
        return BathtubResult(
            energy=energy, fill_level=lam, mass=mass, max_density=m, xs=xs, ys=ys, density=rho, h=h, v_cells=vals
        )


def bathtub_continuity_check(
    v: Potential, m: float, caps, h: float | None = None
) -> list[tuple[float, float]]:
    """Bathtub energies for ``min(V, B)`` over ascending caps B."""
    caps = [float(c) for c in caps]
    if any(b2 < b1 for b1, b2 in zip(caps, caps[1:])):
        raise ValueError("caps must be ascending")
    out = []
    for cap in caps:
        res = bathtub_solve_grid(BathtubProblem(truncate_potential(v, cap), m, h=h))
        out.append((cap, res.energy))
    return out
