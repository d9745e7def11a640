import math

import numpy as np
import pytest

from oracles import two_body_free_energy, two_body_quadrature
from plasmalab import io
from plasmalab.gibbs import (
    ChainOptions,
    ExcludedMassError,
    batch_means,
    default_eta,
    estimate_grid_density,
    estimate_radial_density,
    estimate_scaled_energy,
    ground_state_energy_gap_check,
    pooled_samples,
    sample,
    sample_chains,
    trial_free_energy_upper_bound,
)
from plasmalab.ground_state import MinimizeOptions, minimize
from plasmalab.model import (
    OneBodyPolynomial,
    PairPolynomial,
    PlasmaParams,
    Potential,
    TrivialFactor,
    energy,
)

PAIR_MIN = np.array([[1.0, 0.0], [-1.0, 0.0]])


@pytest.fixture(scope="module")
def quad():
    return two_body_quadrature(2)


@pytest.fixture(scope="module")
def pair_chain():
    p = PlasmaParams(2, 2)
    return sample(p, None, PAIR_MIN, ChainOptions(n_steps=120_000, seed=3))


def uniform_disk(rng, radius, n):
    r = radius * np.sqrt(rng.random(n))
    t = 2 * math.pi * rng.random(n)
    return np.stack([r * np.cos(t), r * np.sin(t)], axis=1)


# -- chain options and output contract --------------------------------------------


@pytest.mark.parametrize(
    "n_steps,burn_in,thinning,expected",
    [(1000, 200, 1, 800), (1000, 200, 3, 266), (10, 0, 4, 2), (101, 1, 100, 1)],
)
def test_sample_count(n_steps, burn_in, thinning, expected):
    opts = ChainOptions(n_steps=n_steps, burn_in=burn_in, thinning=thinning)
    assert opts.n_samples == expected
    out = sample(PlasmaParams(3, 2), None, [[0, 0], [1, 0], [0, 1]], opts)
    assert out.samples.shape == (expected, 3, 2)
    assert len(out.energy_trace) == n_steps - burn_in
    assert list(out.sample_steps) == [burn_in + thinning * (k + 1) for k in range(expected)]


def test_default_burn_in_is_a_fifth():
    assert ChainOptions(n_steps=1000).burn_in == 200


@pytest.mark.parametrize(
    "kw",
    [
        dict(n_steps=10, burn_in=10),
        dict(n_steps=10, burn_in=-1),
        dict(n_steps=10, thinning=0),
        dict(n_steps=10, proposal_sigma=0.0),
        dict(n_steps=10, n_chains=0),
    ],
)
def test_invalid_options(kw):
    with pytest.raises(ValueError):
        ChainOptions(**kw)


def test_acceptance_matches_counters():
    out = sample(PlasmaParams(4, 2), None, [[0, 0], [1, 0], [0, 1], [1, 1]], ChainOptions(n_steps=500, seed=1))
    assert out.proposed == 400 * 4
    assert out.acceptance_rate == out.accepted / out.proposed
    assert 0 <= out.acceptance_rate <= 1


def test_infinite_initial_energy_rejected():
    with pytest.raises(ValueError):
        sample(PlasmaParams(2, 2), None, [[0.5, 0.5], [0.5, 0.5]], ChainOptions(n_steps=10))


def test_tiny_proposal_accepts_everything():
    p = PlasmaParams(10, 2)
    init = minimize(p, opts=MinimizeOptions(restarts=1)).configuration
    out = sample(p, None, init, ChainOptions(n_steps=200, burn_in=0, proposal_sigma=1e-9, adapt=False))
    assert out.acceptance_rate > 0.99
    assert out.acceptance_warning  # 1.0 is above the healthy window


def test_huge_proposal_sets_warning_flag():
    p = PlasmaParams(10, 2)
    init = minimize(p, opts=MinimizeOptions(restarts=1)).configuration
    out = sample(p, None, init, ChainOptions(n_steps=200, burn_in=0, proposal_sigma=50.0, adapt=False))
    assert out.acceptance_rate < 0.1
    assert out.acceptance_warning


def test_bit_reproducible():
    p = PlasmaParams(8, 2)
    f = PairPolynomial()
    init = minimize(p, f, MinimizeOptions(restarts=1)).configuration
    opts = ChainOptions(n_steps=600, thinning=7, seed=99)
    a = sample(p, f, init, opts)
    b = sample(p, f, init, opts)
    np.testing.assert_array_equal(a.samples, b.samples)
    np.testing.assert_array_equal(a.energy_trace, b.energy_trace)
    assert a.proposal_sigma == b.proposal_sigma and a.accepted == b.accepted
    c = sample(p, f, init, ChainOptions(n_steps=600, thinning=7, seed=100))
    assert not np.array_equal(a.samples, c.samples)


@pytest.mark.parametrize(
    "f,u",
    [
        (TrivialFactor(), Potential.zero()),
        (PairPolynomial(), Potential.radial_power(2)),
        (OneBodyPolynomial((0.3 + 0.1j,)), Potential.quadratic(1.0, 0.2, 0.5)),
    ],
)
def test_compiled_kernel_agrees_with_reference_path(f, u):
    p = PlasmaParams(6, 2, epsilon=0.05, u=u)
    init = minimize(p, f, MinimizeOptions(restarts=1)).configuration
    opts = ChainOptions(n_steps=150, seed=4)
    fast = sample(p, f, init, opts)
    slow = sample(p, f, init, opts, force_python=True)
    assert fast.accepted == slow.accepted
    np.testing.assert_allclose(fast.samples, slow.samples, rtol=0, atol=1e-10)
    np.testing.assert_allclose(fast.energy_trace, slow.energy_trace, rtol=0, atol=1e-8)


def test_energy_trace_tracks_samples():
    p = PlasmaParams(5, 3)
    f = PairPolynomial()
    init = minimize(p, f, MinimizeOptions(restarts=1)).configuration
    out = sample(p, f, init, ChainOptions(n_steps=300, burn_in=100, thinning=1, seed=2))
    direct = [energy(cfg, p, f).total for cfg in out.samples]
    np.testing.assert_allclose(out.energy_trace, direct, rtol=1e-10, atol=1e-10)


def test_multiple_chains_use_derived_seeds():
    p = PlasmaParams(3, 2)
    init = [[0, 0], [1, 0], [0, 1]]
    chains = sample_chains(p, None, init, ChainOptions(n_steps=100, n_chains=3, seed=5))
    assert len({c.seed for c in chains}) == 3
    threaded = sample_chains(p, None, init, ChainOptions(n_steps=100, n_chains=3, seed=5, threads=3))
    for a, b in zip(chains, threaded):
        np.testing.assert_array_equal(a.samples, b.samples)
    assert pooled_samples(chains).shape == (240, 3, 2)


# -- target correctness ------------------------------------------------------------


def test_single_particle_gaussian_moment():
    out = sample(PlasmaParams(1, 2), None, [[0.0, 0.0]], ChainOptions(n_steps=100_000, seed=8))
    r2 = (out.samples[:, 0] ** 2).sum(axis=1)
    mean, se = batch_means(r2)
    assert abs(mean - 1.0) <= 3 * se


def test_two_body_moments_match_quadrature(pair_chain, quad):
    _, m1_ref, m2_ref = quad
    s = pair_chain.samples
    m1, se1 = batch_means((s[:, 0] ** 2).sum(axis=1))
    m2, se2 = batch_means(((s[:, 0] - s[:, 1]) ** 2).sum(axis=1))
    assert abs(m1 - m1_ref) <= 3 * se1
    assert abs(m2 - m2_ref) <= 3 * se2


def test_quadrature_oracle_converged(quad):
    finer = two_body_quadrature(2, half_width=6.0, points=80)
    np.testing.assert_allclose(quad, finer, rtol=1e-9)


# -- density estimators -------------------------------------------------------------


def test_uniform_disk_density(rng):
    ell = 2.0
    pts = uniform_disk(rng, math.sqrt(ell), 200_000).reshape(1000, 200, 2)
    est = estimate_radial_density(pts, 10, math.sqrt(ell))
    assert est.total_mass == pytest.approx(1.0, abs=1e-9)
    assert np.all(np.abs(est.values - 1 / (math.pi * ell)) <= 3 * est.binomial_errors)
    assert est.batch_errors is not None and est.batch_errors.shape == (10,)


def test_all_mass_in_one_bin():
    t = np.linspace(0, 2 * math.pi, 7, endpoint=False)
    cfg = np.stack([np.cos(t), np.sin(t)], axis=1)
    est = estimate_radial_density(cfg[None], 2, 2.0)
    assert list(est.counts) == [0.0, 7.0]
    assert est.values[1] * est.areas[1] == pytest.approx(1.0)


def test_excluded_mass_reported():
    cfg = np.array([[0.1, 0.0]] * 999 + [[5.0, 0.0]] * 2)
    with pytest.raises(ExcludedMassError) as err:
        estimate_radial_density(cfg[None], 4, 1.0)
    assert err.value.fraction == pytest.approx(2 / 1001)
    # exactly one in a thousand is tolerated
    ok = np.array([[0.1, 0.0]] * 999 + [[5.0, 0.0]])
    assert estimate_radial_density(ok[None], 4, 1.0).excluded_fraction == pytest.approx(1e-3)


def test_points_on_outer_edge_are_counted():
    est = estimate_radial_density(np.array([[[1.0, 0.0], [0.0, 0.2]]]), 2, 1.0)
    assert list(est.counts) == [1.0, 1.0]


def test_grid_density_normalization(rng):
    pts = rng.normal(scale=0.4, size=(50, 30, 2))
    est = estimate_grid_density(pts, 16, 2.5)
    assert est.total_mass == pytest.approx(1.0, abs=1e-9)
    assert est.values.shape == (16, 16)


def test_scaled_energy_constant_is_exact(rng):
    pts = rng.normal(size=(40, 5, 2))
    mean, se = estimate_scaled_energy(pts, Potential.quadratic(0.0, 0.0, 0.0))
    assert (mean, se) == (0.0, 0.0)
    from plasmalab.model import GridPotential

    flat = GridPotential([-10.0, 10.0], [-10.0, 10.0], np.full((2, 2), 2.5))
    mean, se = estimate_scaled_energy(pts, flat)
    assert mean == 2.5 and se == 0.0


def test_scaled_energy_uniform_disk(rng):
    ell = 2.0
    pts = uniform_disk(rng, math.sqrt(ell), 100_000).reshape(2000, 50, 2)
    mean, se = estimate_scaled_energy(pts, Potential.radial_power(2))
    assert abs(mean - ell / 2) <= 3 * se


def test_density_json(tmp_path, rng):
    est = estimate_radial_density(rng.normal(scale=0.3, size=(30, 10, 2)), 5, 3.0)
    path = io.write_json(tmp_path / "d.json", est.as_dict())
    assert '"total_mass"' in path.read_text()


# -- free-energy bound ----------------------------------------------------------------


def test_default_eta():
    assert default_eta(2) == 0.5
    assert default_eta(50) == pytest.approx(0.1)


def test_single_particle_bound():
    b = trial_free_energy_upper_bound([[0.0, 0.0]], PlasmaParams(1, 2), eta=1 / math.sqrt(2))
    assert b.eta == default_eta(1)
    assert b.upper_bound == pytest.approx(0.25 - math.log(math.pi / 2), abs=1e-14)
    assert b.upper_bound == pytest.approx(-0.2015827, abs=1e-7)
    assert b.upper_bound >= -math.log(math.pi)
    assert b.upper_bound == b.confinement_term + b.interaction_term + b.entropy_term


def test_bound_diverges_as_eta_shrinks():
    p = PlasmaParams(1, 2)
    vals = [trial_free_energy_upper_bound([[0, 0]], p, eta=e).upper_bound for e in (1e-2, 1e-5, 1e-10, 1e-100)]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    assert vals[-1] > 400


def test_two_body_bound_above_quadrature_free_energy():
    p = PlasmaParams(2, 2)
    b = trial_free_energy_upper_bound(PAIR_MIN, p)
    assert b.eta == 0.5
    assert b.upper_bound == pytest.approx(2.25 - 4 * math.log(2) - math.log(math.pi / 4), abs=1e-14)
    assert b.upper_bound == pytest.approx(-0.2810242, abs=1e-7)
    f2 = two_body_free_energy(2)
    assert f2 == pytest.approx(-0.5 * math.log(6 * math.pi**2), abs=1e-10)
    assert b.upper_bound >= f2


@pytest.mark.parametrize("n", [2, 5, 12])
def test_bound_identity(n):
    p = PlasmaParams(n, 2)
    f = PairPolynomial() if n > 2 else TrivialFactor()
    res = minimize(p, f, MinimizeOptions(restarts=1))
    b = trial_free_energy_upper_bound(res.configuration, p, f)
    eta = default_eta(n)
    expected = res.energy.total + n * eta**2 / 2 - math.log(math.pi * eta**2)
    assert b.upper_bound == pytest.approx(expected, abs=1e-12)


def test_bound_rejects_bad_input():
    p = PlasmaParams(2, 2)
    with pytest.raises(ValueError):
        trial_free_energy_upper_bound(PAIR_MIN, p, eta=0.0)
    with pytest.raises(ValueError):
        trial_free_energy_upper_bound([[0, 0], [0, 0]], p)


# -- gap and ordering checks -----------------------------------------------------


def test_gap_check_against_own_minimum(pair_chain):
    assert ground_state_energy_gap_check(pair_chain, pair_chain.energy_trace.min())


def test_gap_check_two_body(pair_chain):
    assert ground_state_energy_gap_check(pair_chain, 2 - 4 * math.log(2))
    assert not ground_state_energy_gap_check(pair_chain, 10.0)


def test_chain_never_beats_minimizer(pair_chain):
    res = minimize(PlasmaParams(2, 2), opts=MinimizeOptions(restarts=2))
    assert pair_chain.energy_trace.min() >= res.energy.total - 1e-6


def test_cold_chain_stays_near_minimum():
    p = PlasmaParams(20, 2)
    res = minimize(p, opts=MinimizeOptions(restarts=2))
    out = sample(p, None, res.configuration, ChainOptions(n_steps=2000, seed=6))
    assert out.energy_trace.min() >= res.energy.total - 1e-6
    # equipartition: 2N quadratic modes at T = 1/N carry energy ~ 1
    assert abs(out.energy_trace.mean() - res.energy.total) <= 5.0
