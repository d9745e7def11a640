"""Metropolis sampling of the plasma Gibbs measure and Monte Carlo estimators.

The target density on configurations is proportional to ``exp(-N H(Z))``
(temperature ``T = 1/N``). One step of a chain is a systematic sweep of N
single-particle Gaussian proposals.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from plasmalab import _kernels
from plasmalab.model import (
    CorrelationFactor,
    PlasmaParams,
    Potential,
    TrivialFactor,
    as_configuration,
    energy,
    energy_delta,
)
from plasmalab.seeds import derive_seed

log = logging.getLogger(__name__)

TARGET_ACCEPTANCE = 0.3
ACCEPTANCE_WINDOW = (0.1, 0.7)
ADAPT_BLOCK = 50
BLOCK = 1000


@dataclass(frozen=True)
class ChainOptions:
    n_steps: int
    burn_in: int | None = None  # defaults to 20% of n_steps
    thinning: int = 1
    proposal_sigma: float | None = None  # defaults to 0.6 sqrt(T ell)
    seed: int = 0
    n_chains: int = 1
    adapt: bool = True
    threads: int = 1

    def __post_init__(self):
        if self.burn_in is None:
            object.__setattr__(self, "burn_in", self.n_steps // 5)
        if not self.n_steps > self.burn_in >= 0:
            raise ValueError(f"need n_steps > burn_in >= 0, got n_steps={self.n_steps}, burn_in={self.burn_in}")
        if self.thinning < 1:
            raise ValueError("thinning must be >= 1")
        if self.proposal_sigma is not None and not self.proposal_sigma > 0:
            raise ValueError("proposal_sigma must be > 0")
        if self.n_chains < 1:
            raise ValueError("n_chains must be >= 1")

    def sigma_for(self, p: PlasmaParams) -> float:
        if self.proposal_sigma is not None:
            return float(self.proposal_sigma)
        return 0.6 * math.sqrt(p.temperature * p.ell)

    @property
    def n_samples(self) -> int:
        return (self.n_steps - self.burn_in) // self.thinning


@dataclass
class ChainOutput:
    samples: np.ndarray  # (S, N, 2)
    acceptance_rate: float
    energy_trace: np.ndarray  # energy after each post-burn-in sweep
    seed: int
    accepted: int
    proposed: int
    proposal_sigma: float
    sample_steps: np.ndarray
    final: np.ndarray
    warnings: list[str] = field(default_factory=list)

    @property
    def acceptance_warning(self) -> bool:
        return bool(self.warnings)

    def summary(self) -> dict:
        return {
            "seed": self.seed,
            "acceptance_rate": self.acceptance_rate,
            "accepted": self.accepted,
            "proposed": self.proposed,
            "proposal_sigma": self.proposal_sigma,
            "n_samples": len(self.samples),
            "warnings": self.warnings,
        }


def _python_sweeps(pos, normals, uniforms, sigma, p, f, record, out, energy_out, e_current):
    # mirrors _kernels.run_sweeps for factors without a product-form description
    n = len(pos)
    accepted = 0
    slot = 0
    beta = float(p.n)
    for t in range(len(normals)):
        for j in range(n):
            cand = pos[j] + sigma * normals[t, j]
            dh = energy_delta(pos, j, cand, p, f)
            if not math.isfinite(dh):
                continue
            if dh <= 0.0 or uniforms[t, j] < math.exp(-beta * dh):
                pos[j] = cand
                e_current += dh
                accepted += 1
        energy_out[t] = e_current
        if record[t]:
            out[slot] = pos
            slot += 1
    return accepted, e_current


def _sweeper(p: PlasmaParams, f: CorrelationFactor, force_python: bool):
    terms = None if force_python else f.kernel_terms()
    if terms is not None:
        try:
            args = _kernels.kernel_arguments(terms, p.n, p.ell, p.epsilon, p.u)
        except _kernels.UnsupportedPotential:
            args = None
        if args is not None:
            beta = float(p.n)

            def run(pos, normals, uniforms, sigma, record, out, energy_out, e):
                return _kernels.run_sweeps(
                    pos, normals, uniforms, sigma, beta, record, out, energy_out, e, *args
                )

            return run

    def run_py(pos, normals, uniforms, sigma, record, out, energy_out, e):
        return _python_sweeps(pos, normals, uniforms, sigma, p, f, record, out, energy_out, e)

    return run_py


def sample(
    p: PlasmaParams,
    f: CorrelationFactor | None,
    init,
    opts: ChainOptions,
    *,
    force_python: bool = False,
) -> ChainOutput:
    """Run one Metropolis chain from ``init`` with seed ``opts.seed``.

    During burn-in the proposal width is tuned every 50 sweeps towards an
    acceptance rate of 0.3 (when ``opts.adapt``); it is frozen afterwards.
    All randomness comes from ``numpy.random.default_rng(opts.seed)``, so a
    fixed seed reproduces the chain bit for bit.
    """
    f = f or TrivialFactor()
    pos = as_configuration(init, p.n)
    e = energy(pos, p, f).total
    if not math.isfinite(e):
        raise ValueError("initial configuration has infinite energy")
    run = _sweeper(p, f, force_python)
    rng = np.random.default_rng(opts.seed)
    sigma = opts.sigma_for(p)

    n_samples = opts.n_samples
    samples = np.empty((n_samples, p.n, 2))
    steps = opts.burn_in + opts.thinning * np.arange(1, n_samples + 1)
    trace = np.empty(opts.n_steps - opts.burn_in)
    accepted = proposed = 0
    slot = 0
    t = 0  # sweeps completed
    while t < opts.n_steps:
        burning = t < opts.burn_in
        if burning:
            length = min(ADAPT_BLOCK if opts.adapt else BLOCK, opts.burn_in - t)
        else:
            length = min(BLOCK, opts.n_steps - t)
        normals = rng.standard_normal((length, p.n, 2))
        uniforms = rng.random((length, p.n))
        idx = np.arange(t + 1, t + length + 1)
        record = (idx > opts.burn_in) & ((idx - opts.burn_in) % opts.thinning == 0)
        n_rec = int(record.sum())
        energies = np.empty(length)
        acc, _ = run(pos, normals, uniforms, sigma, record, samples[slot : slot + n_rec], energies, e)
        slot += n_rec
        # resynchronize with a full evaluation so rounding does not accumulate
        e = energy(pos, p, f).total
        if burning:
            if opts.adapt:
                rate = acc / (length * p.n)
                sigma *= math.exp(rate - TARGET_ACCEPTANCE)
        else:
            accepted += acc
            proposed += length * p.n
            trace[t - opts.burn_in : t - opts.burn_in + length] = energies
        t += length

    rate = accepted / proposed if proposed else float("nan")
    warnings = []
    lo, hi = ACCEPTANCE_WINDOW
    if not lo <= rate <= hi:
        warnings.append(f"acceptance rate {rate:.3f} outside [{lo}, {hi}]")
        log.warning("chain seed=%d: %s", opts.seed, warnings[-1])
    return ChainOutput(
        samples=samples,
        acceptance_rate=rate,
        energy_trace=trace,
        seed=opts.seed,
        accepted=accepted,
        proposed=proposed,
        proposal_sigma=sigma,
        sample_steps=steps,
        final=pos.copy(),
        warnings=warnings,
    )


def sample_chains(p: PlasmaParams, f: CorrelationFactor | None, init, opts: ChainOptions) -> list[ChainOutput]:
    """``opts.n_chains`` independent chains; chain ``k`` uses ``derive_seed(opts.seed, k)``."""
    from dataclasses import replace

    jobs = [replace(opts, seed=derive_seed(opts.seed, k), n_chains=1) for k in range(opts.n_chains)]
    if opts.threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(opts.threads) as pool:
            return list(pool.map(lambda o: sample(p, f, init, o), jobs))
    return [sample(p, f, init, o) for o in jobs]


def pooled_samples(chains: list[ChainOutput]) -> np.ndarray:
    return np.concatenate([c.samples for c in chains], axis=0)


# ---------------------------------------------------------------------------
# Estimators
# ---------------------------------------------------------------------------


def batch_means(x, n_batches: int = 20) -> tuple[float, float]:
    """Mean and batch-means standard error of a correlated series."""
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        raise ValueError("empty series")
    mean = float(np.mean(x))
    b = min(n_batches, x.size)
    if b < 2:
        return mean, float("nan")
    size = x.size // b
    means = x[: b * size].reshape(b, size).mean(axis=1)
    return mean, float(np.std(means, ddof=1) / math.sqrt(b))


@dataclass
class DensityEstimate:
    """Histogram estimate of the one-particle marginal.

    For ``kind == "radial"`` the values are rotation-averaged densities on the
    annuli between ``edges``; for ``kind == "grid"`` they live on the cells of
    ``edges`` x ``y_edges``. ``total_mass`` is the bin-sum of value times area.
    """

    kind: str
    edges: np.ndarray
    counts: np.ndarray
    values: np.ndarray
    areas: np.ndarray
    binomial_errors: np.ndarray
    batch_errors: np.ndarray | None
    total_mass: float
    excluded_fraction: float
    n_points: int
    y_edges: np.ndarray | None = None

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    def as_dict(self) -> dict:
        out = {
            "kind": self.kind,
            "edges": self.edges,
            "counts": self.counts,
            "values": self.values,
            "binomial_errors": self.binomial_errors,
            "batch_errors": self.batch_errors,
            "total_mass": self.total_mass,
            "excluded_fraction": self.excluded_fraction,
            "n_points": self.n_points,
        }
        if self.y_edges is not None:
            out["y_edges"] = self.y_edges
        return out


class ExcludedMassError(ValueError):
    def __init__(self, fraction: float):
        super().__init__(f"histogram range excludes {fraction:.4%} of points (limit 0.1%)")
        self.fraction = fraction


MAX_EXCLUDED = 1e-3


def _per_sample_histograms(samples, assign, n_bins):
    # sample-level bin frequencies, used for batch-means errors
    s = samples.shape[0]
    counts = np.zeros((s, n_bins))
    for k in range(s):
        idx = assign(samples[k])
        idx = idx[idx >= 0]
        counts[k] = np.bincount(idx, minlength=n_bins)
    return counts


def _finish(kind, edges, counts, areas, samples, assign, y_edges=None):
    n_total = samples.shape[0] * samples.shape[1]
    n_in = int(counts.sum())
    excluded = (n_total - n_in) / n_total
    if n_total - n_in > MAX_EXCLUDED * n_total:
        raise ExcludedMassError(excluded)
    values = counts / (n_in * areas)
    q = counts / n_in
    binom = np.sqrt(q * (1 - q) / n_in) / areas
    batch = None
    if samples.shape[0] >= 20:
        per = _per_sample_histograms(samples, assign, counts.size).reshape(samples.shape[0], *counts.shape)
        per = per / (samples.shape[1] * areas)
        b = 20
        size = samples.shape[0] // b
        means = per[: b * size].reshape(b, size, *counts.shape).mean(axis=1)
        batch = means.std(axis=0, ddof=1) / math.sqrt(b)
    return DensityEstimate(
        kind=kind,
        edges=edges,
        counts=counts,
        values=values,
        areas=areas,
        binomial_errors=binom,
        batch_errors=batch,
        total_mass=float(np.sum(values * areas)),
        excluded_fraction=excluded,
        n_points=n_total,
        y_edges=y_edges,
    )


def estimate_radial_density(samples, bins: int, r_max: float) -> DensityEstimate:
    """Rotation-averaged one-particle density from pooled sample points.

    Normalized so that ``sum(values * annulus_areas) == 1``. Raises
    ``ExcludedMassError`` when more than 0.1% of the points lie beyond ``r_max``.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 2:
        samples = samples[None]
    if samples.size == 0:
        raise ValueError("no samples")
    edges = np.linspace(0.0, r_max, bins + 1)
    areas = math.pi * (edges[1:] ** 2 - edges[:-1] ** 2)

    def assign(cfg):
        r = np.hypot(cfg[:, 0], cfg[:, 1])
        idx = np.searchsorted(edges, r, side="right") - 1
        # r == r_max belongs to the last bin
        idx[r == r_max] = bins - 1
        idx[(r > r_max)] = -1
        return idx

    idx = assign(samples.reshape(-1, 2))
    counts = np.bincount(idx[idx >= 0], minlength=bins).astype(float)
    return _finish("radial", edges, counts, areas, samples, assign)


def estimate_grid_density(samples, bins: int, half_width: float) -> DensityEstimate:
    """2D histogram on ``[-half_width, half_width]^2`` with ``bins x bins`` cells."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 2:
        samples = samples[None]
    edges = np.linspace(-half_width, half_width, bins + 1)
    h = edges[1] - edges[0]

    def assign(cfg):
        ix = np.floor((cfg[:, 0] + half_width) / h).astype(int)
        iy = np.floor((cfg[:, 1] + half_width) / h).astype(int)
        ix[cfg[:, 0] == half_width] = bins - 1
        iy[cfg[:, 1] == half_width] = bins - 1
        ok = (ix >= 0) & (ix < bins) & (iy >= 0) & (iy < bins)
        return np.where(ok, ix * bins + iy, -1)

    idx = assign(samples.reshape(-1, 2))
    counts = np.bincount(idx[idx >= 0], minlength=bins * bins).astype(float).reshape(bins, bins)
    areas = np.full((bins, bins), h * h)
    return _finish("grid", edges, counts, areas, samples, assign, y_edges=edges.copy())


def estimate_scaled_energy(samples, v: Potential) -> tuple[float, float]:
    """Chain average of ``(1/N) sum_j V(z_j)`` with its batch-means standard error."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 2:
        samples = samples[None]
    if samples.shape[0] == 0:
        raise ValueError("no samples")
    s, n, _ = samples.shape
    per = np.asarray(v.value(samples.reshape(-1, 2))).reshape(s, n).mean(axis=1)
    return batch_means(per)


@dataclass(frozen=True)
class FreeEnergyBound:
    eta: float
    entropy_term: float
    confinement_term: float
    interaction_term: float
    upper_bound: float

    def as_dict(self) -> dict:
        return {
            "eta": self.eta,
            "entropy_term": self.entropy_term,
            "confinement_term": self.confinement_term,
            "interaction_term": self.interaction_term,
            "upper_bound": self.upper_bound,
        }


def default_eta(n: int) -> float:
    return 1.0 / math.sqrt(2.0 * n)


def trial_free_energy_upper_bound(
    z0, p: PlasmaParams, f: CorrelationFactor | None = None, eta: float | None = None
) -> FreeEnergyBound:
    """Free energy of the product of uniform disks of radius ``eta`` around ``z0``.

    The one-body part averages ``|z|^2`` exactly over each disk; the pair and
    correlation parts use their values at the centers (superharmonicity makes
    that an upper bound); ``eps U`` is evaluated at the centers.
    """
    f = f or TrivialFactor()
    eta = default_eta(p.n) if eta is None else float(eta)
    if not eta > 0:
        raise ValueError("eta must be positive")
    e0 = energy(z0, p, f)
    if not math.isfinite(e0.total):
        raise ValueError("trial centers have infinite energy")
    confinement = e0.confinement + p.n * eta**2 / 2.0 + e0.perturbation
    interaction = e0.coulomb + e0.correlation
    entropy = -math.log(math.pi * eta**2)
    return FreeEnergyBound(eta, entropy, confinement, interaction, confinement + interaction + entropy)


def ground_state_energy_gap_check(chain: ChainOutput, e_min: float) -> bool:
    """True iff the chain's mean energy is at least ``e_min - 3 * std_error``."""
    if chain.energy_trace.size == 0:
        raise ValueError("empty chain")
    mean, se = batch_means(chain.energy_trace)
    se = 0.0 if math.isnan(se) else se
    return bool(mean >= e_min - 3.0 * se)
