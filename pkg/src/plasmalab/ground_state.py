"""Ground states of the plasma Hamiltonian and their separation/density audits."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import pdist

from plasmalab.model import (
    CorrelationFactor,
    EnergyBreakdown,
    PlasmaParams,
    TrivialFactor,
    as_configuration,
    energy,
    energy_delta,
    energy_difference,
    gradient,
)
from plasmalab.seeds import derive_seed

ARMIJO_SLOPE = 1e-4
BACKTRACK = 0.5
RELOCATION_ANGLES = 16


@dataclass(frozen=True)
class MinimizeOptions:
    max_iterations: int = 20000
    gradient_tolerance: float | None = None  # defaults to 1e-8 * N
    restarts: int = 8
    relocation_moves: bool = True
    seed: int = 0
    threads: int = 1
    max_relocation_rounds: int = 20

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.gradient_tolerance is not None and not self.gradient_tolerance > 0:
            raise ValueError("gradient_tolerance must be > 0")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")

    def tolerance_for(self, n: int) -> float:
        return self.gradient_tolerance if self.gradient_tolerance is not None else 1e-8 * n


@dataclass
class DescentResult:
    configuration: np.ndarray
    total: float
    grad_norm: float
    iterations: int
    converged: bool
    relocations: int = 0
    seed: int = 0


@dataclass
class MinimizeResult:
    """Best configuration over all restarts plus optimizer metadata.

    Unpacks as ``(configuration, energy)``.
    """

    configuration: np.ndarray
    energy: EnergyBreakdown
    converged: bool
    grad_norm: float
    iterations: int
    best_seed: int
    restarts: int
    restart_seeds: list[int] = field(default_factory=list)
    restart_energies: list[float] = field(default_factory=list)
    relocations: int = 0

    def __iter__(self):
        yield self.configuration
        yield self.energy

    def metadata(self) -> dict:
        return {
            "converged": self.converged,
            "grad_norm": self.grad_norm,
            "iterations": self.iterations,
            "best_seed": self.best_seed,
            "restarts": self.restarts,
            "restart_seeds": self.restart_seeds,
            "restart_energies": self.restart_energies,
            "relocations": self.relocations,
        }


def initial_cloud(p: PlasmaParams, seed: int) -> np.ndarray:
    """I.i.d. Gaussian points with ``E|z|^2 = ell / 2``."""
    rng = np.random.default_rng(seed)
    return rng.normal(scale=math.sqrt(p.ell / 4.0), size=(p.n, 2))


def gradient_descent(
    cfg: np.ndarray,
    p: PlasmaParams,
    f: CorrelationFactor,
    tol: float,
    max_iterations: int,
    trace: list | None = None,
) -> DescentResult:
    """Steepest descent with Armijo backtracking.

    The trial step is the Barzilai-Borwein length from the previous
    iteration; it is halved until the Armijo condition holds, so each
    accepted step strictly lowers the energy. Stops at ``|grad|_inf <= tol``
    or when no step length down to 1e-300 decreases the energy.
    """
    x = cfg.copy()
    g = gradient(x, p, f)
    alpha = 0.1 / max(1.0, float(np.max(np.abs(g))))
    x_prev = g_prev = None
    e = energy(x, p, f).total
    for it in range(max_iterations):
        gnorm = float(np.max(np.abs(g)))
        if gnorm <= tol:
            return DescentResult(x, e, gnorm, it, True)
        if x_prev is not None:
            s = x - x_prev
            y = g - g_prev
            sy = float(np.sum(s * y))
            if sy > 0:
                alpha = min(max(float(np.sum(s * s)) / sy, 1e-12), 1e3)
            else:
                alpha = min(2.0 * alpha, 1e3)
        g2 = float(np.sum(g * g))
        while True:
            trial = x - alpha * g
            de = energy_difference(x, trial, p, f)
            if de <= -ARMIJO_SLOPE * alpha * g2 and de < 0:
                break
            alpha *= BACKTRACK
            if alpha < 1e-300:
                return DescentResult(x, e, gnorm, it, False)
        x_prev, g_prev = x, g
        x = trial
        e += de
        if trace is not None:
            trace.append(de)
        g = gradient(x, p, f)
    gnorm = float(np.max(np.abs(g)))
    return DescentResult(x, e, gnorm, max_iterations, gnorm <= tol)


def relocation_sweep(cfg: np.ndarray, p: PlasmaParams, f: CorrelationFactor) -> int:
    """Move each point to the best of 16 ring positions around its nearest neighbour.

    The ring has radius ``sqrt(ell/(N-1))``; a move is taken only when it
    strictly lowers the energy. Modifies ``cfg`` in place and returns the
    number of moves.
    """
    n = len(cfg)
    if n < 2:
        return 0
    radius = math.sqrt(p.ell / (n - 1))
    angles = 2 * math.pi * np.arange(RELOCATION_ANGLES) / RELOCATION_ANGLES
    ring = radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    moves = 0
    for j in range(n):
        d = cfg - cfg[j]
        r2 = np.einsum("ij,ij->i", d, d)
        r2[j] = np.inf
        k = int(np.argmin(r2))
        best, best_delta = None, 0.0
        for cand in cfg[k] + ring:
            delta = energy_delta(cfg, j, cand, p, f)
            if delta < best_delta:
                best, best_delta = cand, delta
        if best is not None:
            cfg[j] = best
            moves += 1
    return moves


def _single_run(p, f, opts: MinimizeOptions, seed: int) -> DescentResult:
    tol = opts.tolerance_for(p.n)
    x = initial_cloud(p, seed)
    res = gradient_descent(x, p, f, tol, opts.max_iterations)
    relocations = 0
    if opts.relocation_moves:
        for _ in range(opts.max_relocation_rounds):
            cfg = res.configuration.copy()
            moved = relocation_sweep(cfg, p, f)
            if not moved:
                break
            relocations += moved
            res = gradient_descent(cfg, p, f, tol, opts.max_iterations)
    res.relocations = relocations
    res.seed = seed
    res.total = energy(res.configuration, p, f).total
    return res


def minimize(
    p: PlasmaParams, f: CorrelationFactor | None = None, opts: MinimizeOptions | None = None
) -> MinimizeResult:
    """Multi-start minimization of the perturbed Hamiltonian.

    Restart ``k`` starts from a Gaussian cloud seeded with
    ``derive_seed(opts.seed, k)``. The winner is the lexicographically smallest
    ``(energy, seed)``, so the result does not depend on thread scheduling.
    Global minimality is not certified.
    """
    f = f or TrivialFactor()
    opts = opts or MinimizeOptions()
    seeds = [derive_seed(opts.seed, k) for k in range(opts.restarts)]
    if opts.threads > 1:
        with ThreadPoolExecutor(opts.threads) as pool:
            runs = list(pool.map(lambda s: _single_run(p, f, opts, s), seeds))
    else:
        runs = [_single_run(p, f, opts, s) for s in seeds]
    best = min(runs, key=lambda r: (r.total, r.seed))
    return MinimizeResult(
        configuration=best.configuration,
        energy=energy(best.configuration, p, f),
        converged=best.converged,
        grad_norm=best.grad_norm,
        iterations=best.iterations,
        best_seed=best.seed,
        restarts=opts.restarts,
        restart_seeds=seeds,
        restart_energies=[r.total for r in runs],
        relocations=best.relocations,
    )


def min_pairwise_distance(cfg) -> float:
    cfg = as_configuration(cfg)
    if len(cfg) < 2:
        raise ValueError("minimal distance needs at least two points")
    return float(np.min(pdist(cfg)))


def separation_delta(p: PlasmaParams) -> float:
    """``4 sqrt(eps) sqrt(|Delta U|_inf)``, the relative shrink of the separation bound."""
    if p.epsilon == 0:
        return 0.0
    return 4.0 * math.sqrt(p.epsilon) * math.sqrt(p.u.laplacian_sup_norm())


@dataclass(frozen=True)
class SeparationAudit:
    min_distance: float
    bound_l0: float
    bound_l_delta: float
    slack: float
    passed: bool
    delta: float = 0.0
    potential_has_kink: bool = False

    @property
    def margin(self) -> float:
        return self.min_distance / self.bound_l_delta - 1.0

    def as_dict(self) -> dict:
        return {
            "min_distance": self.min_distance,
            "bound_l0": self.bound_l0,
            "bound_l_delta": self.bound_l_delta,
            "slack": self.slack,
            "passed": self.passed,
            "delta": self.delta,
            "margin": self.margin,
            "potential_has_kink": self.potential_has_kink,
        }


def audit_separation(cfg, p: PlasmaParams, slack: float = 1e-2) -> SeparationAudit:
    """Compare the minimal distance of ``cfg`` with ``sqrt(ell/(N-1)) (1 - delta)``."""
    cfg = as_configuration(cfg, p.n)
    delta = separation_delta(p)
    if not delta < 1.0:
        raise ValueError(f"epsilon too large: delta = {delta:.4g} >= 1 makes the bound vacuous")
    l0 = math.sqrt(p.ell / (p.n - 1))
    l_delta = l0 * (1.0 - delta)
    dmin = min_pairwise_distance(cfg)
    return SeparationAudit(
        min_distance=dmin,
        bound_l0=l0,
        bound_l_delta=l_delta,
        slack=slack,
        passed=bool(dmin >= l_delta * (1.0 - slack)),
        delta=delta,
        potential_has_kink=p.u.has_kink,
    )


class SmearedDensity:
    """Average of normalized open-disk indicators of radius ``radius`` at ``centers``."""

    def __init__(self, centers, radius: float):
        self.centers = as_configuration(centers)
        if not radius > 0:
            raise ValueError("radius must be positive")
        self.radius = float(radius)
        self._tree = cKDTree(self.centers)

    @property
    def n(self) -> int:
        return len(self.centers)

    @property
    def height(self) -> float:
        """Contribution of a single disk, ``1 / (N pi L^2)``."""
        return 1.0 / (self.n * math.pi * self.radius**2)

    def depth(self, z) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(z, dtype=float))
        # open disks: shrink the query radius by one ulp
        r = np.nextafter(self.radius, 0.0)
        return np.asarray(self._tree.query_ball_point(pts, r, return_length=True))

    def value(self, z):
        out = self.depth(z) * self.height
        return float(out[0]) if np.ndim(z) == 1 else out

    def max_depth(self) -> int:
        """Largest number of disks sharing a point.

        The maximum is attained near a center or near a crossing of two
        circles; crossings are nudged into the lens interior before counting.
        """
        best = int(np.max(self.depth(self.centers)))
        pairs = self._tree.query_pairs(2 * self.radius, output_type="ndarray")
        if len(pairs) == 0:
            return best
        a = self.centers[pairs[:, 0]]
        b = self.centers[pairs[:, 1]]
        d = np.linalg.norm(b - a, axis=1)
        ok = d > 0
        a, b, d = a[ok], b[ok], d[ok]
        mid = 0.5 * (a + b)
        h = np.sqrt(np.maximum(self.radius**2 - (0.5 * d) ** 2, 0.0))
        perp = np.stack([-(b - a)[:, 1], (b - a)[:, 0]], axis=1) / d[:, None]
        nudge = 1e-9 * self.radius
        cand = []
        for sign in (1.0, -1.0):
            x = mid + sign * h[:, None] * perp
            cand.append(x - sign * nudge * perp)
        cand.append(mid)
        return max(best, int(np.max(self.depth(np.concatenate(cand)))))

    def sup_bound(self) -> float:
        return self.max_depth() * self.height

    def integrate(self, f, n_radial: int = 16, n_angular: int = 64) -> float:
        """``int rho_tilde f`` by Gauss-Legendre (radius) x trapezoid (angle) on each disk."""
        xr, wr = np.polynomial.legendre.leggauss(n_radial)
        r = 0.5 * self.radius * (xr + 1.0)
        wr = 0.5 * self.radius * wr * r
        th = 2 * math.pi * np.arange(n_angular) / n_angular
        offs = np.stack(
            [np.outer(r, np.cos(th)).ravel(), np.outer(r, np.sin(th)).ravel()], axis=1
        )
        w = np.repeat(wr, n_angular) * (2 * math.pi / n_angular)
        total = 0.0
        for c in self.centers:
            total += float(np.sum(w * f(c + offs)))
        return total / (self.n * math.pi * self.radius**2)

    def empirical_mean(self, f) -> float:
        """``int rho_0 f`` for the empirical measure of the centers."""
        return float(np.mean(f(self.centers)))


def smeared_radius(p: PlasmaParams, epsilon_for_radius: float) -> float:
    lap = p.u.laplacian_sup_norm() if epsilon_for_radius else 0.0
    delta = 4.0 * math.sqrt(epsilon_for_radius) * math.sqrt(lap) if epsilon_for_radius else 0.0
    if not delta < 1.0:
        raise ValueError(f"delta = {delta:.4g} >= 1: no admissible smearing radius")
    return 0.5 * math.sqrt(p.ell / (p.n - 1)) * (1.0 - delta)


def smeared_density(cfg, p: PlasmaParams, epsilon_for_radius: float = 0.0) -> SmearedDensity:
    """Disk-smeared empirical measure with radius ``(1/2) sqrt(ell/(N-1)) (1 - delta)``."""
    cfg = as_configuration(cfg, p.n)
    if p.n < 2:
        raise ValueError("smearing radius needs n >= 2")
    return SmearedDensity(cfg, smeared_radius(p, epsilon_for_radius))


def displayed_density_constant(p: PlasmaParams, epsilon: float = 0.0) -> float:
    """``(4/(pi ell)) (1 + 8 sqrt(eps |Delta U|)) (1 - 1/N)``, reported next to the construction."""
    lap = p.u.laplacian_sup_norm() if epsilon else 0.0
    return 4.0 / (math.pi * p.ell) * (1.0 + 8.0 * math.sqrt(epsilon * lap)) * (1.0 - 1.0 / p.n)
