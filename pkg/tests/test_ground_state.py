import json
import math

import numpy as np
import pytest

from oracles import two_body_minimum
from plasmalab import io
from plasmalab.ground_state import (
    MinimizeOptions,
    SmearedDensity,
    audit_separation,
    displayed_density_constant,
    gradient_descent,
    initial_cloud,
    min_pairwise_distance,
    minimize,
    relocation_sweep,
    smeared_density,
)
from plasmalab.model import (
    OneBodyPolynomial,
    PairPolynomial,
    PlasmaParams,
    Potential,
    TrivialFactor,
    energy,
    gradient,
)


@pytest.fixture(scope="module")
def ground_50():
    p = PlasmaParams(50, 2)
    return p, minimize(p, opts=MinimizeOptions(restarts=2, seed=5))


def test_single_particle_minimum():
    cfg, e = minimize(PlasmaParams(1, 2), opts=MinimizeOptions(restarts=2))
    assert np.max(np.abs(cfg)) <= 1e-8
    assert e.total == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("ell", [1, 2, 5])
def test_two_particles_match_calculus_oracle(ell):
    sep, e_min = two_body_minimum(ell)
    res = minimize(PlasmaParams(2, ell), opts=MinimizeOptions(restarts=3, seed=ell))
    cfg = res.configuration
    assert res.converged
    assert min_pairwise_distance(cfg) == pytest.approx(sep, abs=1e-7)
    assert res.energy.total == pytest.approx(e_min, abs=1e-9)
    # opposite through the origin
    np.testing.assert_allclose(cfg[0], -cfg[1], atol=1e-8)


def test_two_particle_oracle_value_ell_two():
    assert two_body_minimum(2) == pytest.approx((2.0, 2 - 4 * math.log(2)))


def test_min_pairwise_distance_examples():
    assert min_pairwise_distance([[0, 0], [3, 4]]) == 5.0
    assert min_pairwise_distance([[0, 0], [1, 0], [0.5, 0]]) == 0.5
    assert min_pairwise_distance([[1, 2], [0, 0], [1, 2]]) == 0.0
    with pytest.raises(ValueError):
        min_pairwise_distance([[0, 0]])


def test_audit_minimized_pair_passes():
    p = PlasmaParams(2, 2)
    cfg, _ = minimize(p, opts=MinimizeOptions(restarts=1))
    audit = audit_separation(cfg, p)
    assert audit.min_distance == pytest.approx(2.0, abs=1e-7)
    assert audit.bound_l0 == pytest.approx(math.sqrt(2))
    assert audit.passed


def test_audit_duplicate_point_fails():
    p = PlasmaParams(3, 2)
    audit = audit_separation([[0, 0], [1, 0], [1, 0]], p)
    assert audit.min_distance == 0.0
    assert not audit.passed


def test_audit_delta_half():
    u = Potential.radial_power(2)  # |Delta U| = 4
    p = PlasmaParams(10, 2, epsilon=1 / (64 * 4.0), u=u)
    audit = audit_separation(initial_cloud(p, 1), p)
    assert audit.bound_l_delta == pytest.approx(audit.bound_l0 / 2, rel=1e-15)
    assert audit.bound_l_delta <= audit.bound_l0


def test_audit_rejects_vacuous_delta():
    p = PlasmaParams(10, 2, epsilon=1 / 16, u=Potential.radial_power(2))  # delta = 1
    with pytest.raises(ValueError):
        audit_separation(initial_cloud(p, 1), p)


def test_audit_flags_truncation_kink():
    from plasmalab.model import truncate_potential

    p = PlasmaParams(5, 2, epsilon=1e-4, u=truncate_potential(Potential.radial_power(2), 1.0))
    assert audit_separation(initial_cloud(p, 0), p).potential_has_kink


def test_perturbed_ground_state_separation():
    p = PlasmaParams(20, 2, epsilon=1e-3, u=Potential.radial_power(2))
    res = minimize(p, opts=MinimizeOptions(restarts=3, seed=11))
    assert res.converged
    assert audit_separation(res.configuration, p).passed


def test_monotone_descent():
    p = PlasmaParams(15, 2)
    trace = []
    res = gradient_descent(initial_cloud(p, 4), p, TrivialFactor(), 1e-7, 5000, trace=trace)
    assert res.converged
    assert len(trace) > 5 and all(d < 0 for d in trace)


def test_gradient_tolerance_met():
    p = PlasmaParams(20, 3)
    res = minimize(p, opts=MinimizeOptions(restarts=2, seed=2))
    assert res.converged
    assert np.max(np.abs(gradient(res.configuration, p))) <= 1e-8 * 20


def test_nonconvergence_is_flagged():
    p = PlasmaParams(20, 2)
    res = minimize(p, opts=MinimizeOptions(restarts=1, max_iterations=2, relocation_moves=False))
    assert not res.converged
    assert np.isfinite(res.energy.total)


def test_restarts_deterministic_and_thread_independent():
    p = PlasmaParams(12, 2)
    a = minimize(p, opts=MinimizeOptions(restarts=4, seed=9))
    b = minimize(p, opts=MinimizeOptions(restarts=4, seed=9, threads=3))
    np.testing.assert_array_equal(a.configuration, b.configuration)
    assert a.best_seed == b.best_seed
    assert a.energy.total == min(a.restart_energies)


def test_relocation_sweep_never_raises_energy(rng):
    p = PlasmaParams(12, 2)
    f = PairPolynomial()
    cfg = rng.normal(scale=0.8, size=(12, 2))
    e0 = energy(cfg, p, f).total
    moves = relocation_sweep(cfg, p, f)
    assert energy(cfg, p, f).total <= e0
    if moves:
        assert energy(cfg, p, f).total < e0


def test_relocation_separates_a_close_pair():
    p = PlasmaParams(10, 2)
    cfg, _ = minimize(p, opts=MinimizeOptions(restarts=1, seed=1))
    bad = cfg.copy()
    bad[0] = bad[1] + np.array([1e-3, 0.0])
    relocation_sweep(bad, p, TrivialFactor())
    assert min_pairwise_distance(bad) > 1e-3


@pytest.mark.parametrize("f", [TrivialFactor(), PairPolynomial(), OneBodyPolynomial((0.0,))], ids=lambda f: type(f).__name__)
@pytest.mark.parametrize("n", [10, 20])
def test_separation_theorem_small(f, n):
    p = PlasmaParams(n, 2)
    res = minimize(p, f, MinimizeOptions(restarts=3, seed=n))
    assert min_pairwise_distance(res.configuration) >= math.sqrt(2 / (n - 1)) * 0.99


# -- smeared density ------------------------------------------------------------


def test_smeared_single_disk():
    rho = SmearedDensity([[0.0, 0.0]], 1.0)
    assert rho.value(np.array([0.0, 0.0])) == pytest.approx(1 / math.pi, rel=1e-15)
    assert rho.value(np.array([2.0, 0.0])) == 0.0
    assert rho.sup_bound() == pytest.approx(1 / math.pi)


def test_smeared_radius_formula():
    p = PlasmaParams(26, 2, u=Potential.radial_power(2))
    rho = smeared_density(np.zeros((26, 2)) + np.arange(26)[:, None], p, epsilon_for_radius=1 / 1024)
    delta = 4 * math.sqrt(1 / 1024) * 2
    assert rho.radius == pytest.approx(0.5 * math.sqrt(2 / 25) * (1 - delta), rel=1e-15)


def test_smeared_mass_grid_quadrature(rng):
    cfg = rng.normal(scale=0.5, size=(20, 2))
    rho = SmearedDensity(cfg, 0.15)
    h = 0.002
    a = np.abs(cfg).max() + 0.2
    xs = np.arange(-a, a, h) + h / 2
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    vals = rho.value(np.stack([X.ravel(), Y.ravel()], axis=1))
    assert vals.sum() * h * h == pytest.approx(1.0, abs=1e-3)
    assert rho.integrate(lambda z: np.ones(len(z))) == pytest.approx(1.0, abs=1e-12)


def test_overlap_depth_counts(rng):
    centers = [[0.0, 0.0], [0.1, 0.0], [0.05, 0.08], [3.0, 3.0]]
    rho = SmearedDensity(centers, 0.5)
    assert rho.max_depth() == 3
    assert rho.sup_bound() == pytest.approx(3 / (4 * math.pi * 0.25))


def test_touching_disks_do_not_overlap():
    rho = SmearedDensity([[0.0, 0.0], [1.0, 0.0]], 0.5)
    assert rho.max_depth() == 1


def test_minimized_sup_bound(ground_50):
    p, res = ground_50
    rho = smeared_density(res.configuration, p)
    assert min_pairwise_distance(res.configuration) >= 2 * rho.radius
    # non-overlap: exactly one disk height
    assert rho.sup_bound() == 1 / (p.n * math.pi * rho.radius**2)
    assert rho.sup_bound() <= 4 / (math.pi * p.ell) / (1 - 1 / p.n) * 1.001
    assert rho.sup_bound() == pytest.approx(displayed_density_constant(p), rel=1e-12)


def test_weak_closeness(ground_50):
    p, res = ground_50
    rho = smeared_density(res.configuration, p)
    window = np.abs(res.configuration).max() + rho.radius
    for f, grad_sup in ((lambda z: z[:, 0], 1.0), (lambda z: (z * z).sum(axis=1), 2 * math.sqrt(2) * window)):
        gap = abs(rho.empirical_mean(f) - rho.integrate(f))
        assert gap <= 2 * math.sqrt(p.ell / p.n) * grad_sup


# -- emitted artifacts ---------------------------------------------------------------


def test_configuration_csv_roundtrip(tmp_path, rng):
    cfg = rng.normal(size=(7, 2))
    path = io.write_configuration_csv(tmp_path / "c.csv", cfg)
    assert path.read_text().splitlines()[0] == "index,x,y"
    np.testing.assert_array_equal(io.read_configuration_csv(path), cfg)


def test_audit_json(tmp_path):
    p = PlasmaParams(10, 2)
    res = minimize(p, opts=MinimizeOptions(restarts=1))
    payload = {"audit": audit_separation(res.configuration, p).as_dict(), "optimizer": res.metadata()}
    data = json.loads(io.write_json(tmp_path / "a.json", payload).read_text())
    assert set(data["audit"]) >= {"min_distance", "bound_l0", "bound_l_delta", "slack", "passed"}
    assert data["optimizer"]["restarts"] == 1
