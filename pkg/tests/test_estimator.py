import numpy as np
import pytest

from vqopt.ansatz import AlternatingEvolution, build_hea, build_qaoa_like_tfim, build_qubo_ansatz
from vqopt.estimator import CostFunction, NoiseModel, QuadraticCost
from vqopt.hamiltonians import FidelityTarget, build_heisenberg_pair, build_tfim
from vqopt.qubo import build_maxcut, qubo_to_ising
from vqopt.quantum import CapabilityError, init_basis_state, plus_state


def fd_gradient(f, theta, h=1e-5):
    return np.array([(f(theta + h * e) - f(theta - h * e)) / (2 * h) for e in np.eye(theta.size)])


@pytest.fixture
def tfim_cost():
    return CostFunction(build_tfim(3), build_qaoa_like_tfim(3, 3), init_basis_state(3, "000"))


def test_noise_model_validation():
    with pytest.raises(ValueError):
        NoiseModel.gaussian(-1, 0)
    with pytest.raises(ValueError):
        NoiseModel.with_shots(0)
    with pytest.raises(ValueError):
        NoiseModel("white")


def test_shift_rule_adjoint_and_fd_agree(tfim_cost, rng):
    theta = rng.uniform(-np.pi, np.pi, tfim_cost.d)
    shift = tfim_cost.exact_partials(theta, range(tfim_cost.d))
    adj = tfim_cost.exact_gradient(theta)
    assert np.allclose(shift, adj, atol=1e-12)
    assert np.allclose(shift, fd_gradient(tfim_cost.exact_cost, theta), atol=1e-7)


def test_fidelity_cost_gradient(rng):
    obs = build_tfim(3)
    cf = CostFunction(FidelityTarget.ground_of(obs), build_hea(3, 1), init_basis_state(3, "000"))
    assert not cf.is_energy
    theta = rng.uniform(-np.pi, np.pi, cf.d)
    assert np.allclose(cf.exact_gradient(theta), fd_gradient(cf.exact_cost, theta), atol=1e-7)
    assert 0.0 <= cf.exact_cost(theta) <= 1.0


def test_exact_oracle_counts_evaluations(tfim_cost):
    theta = np.zeros(tfim_cost.d)
    tfim_cost.partial_derivative(theta, 0)
    g = tfim_cost.full_gradient(theta)
    s = tfim_cost.spsa_estimate(theta, 0.1, np.random.default_rng(0))
    assert g.evals_charged == tfim_cost.d and s.evals_charged == 1
    assert tfim_cost.partial_evals == 1 + tfim_cost.d
    assert tfim_cost.cost_evals == 2


def test_index_and_shape_checks(tfim_cost):
    with pytest.raises(IndexError):
        tfim_cost.partial_derivative(np.zeros(tfim_cost.d), tfim_cost.d)
    with pytest.raises(ValueError):
        tfim_cost.cost(np.zeros(tfim_cost.d + 1))


def test_shot_partials_are_unbiased_with_inverse_m_variance(rng):
    q = build_maxcut([(0, 1), (1, 2)])
    cf = CostFunction(qubo_to_ising(q), build_qubo_ansatz(3, 2), plus_state(3), NoiseModel.with_shots(200), rng)
    theta = rng.uniform(-np.pi, np.pi, cf.d)
    exact = cf.exact_partials(theta, [1])[0]
    s1 = cf.sample_partials(theta, 1, 20000)
    assert s1.mean() == pytest.approx(exact, abs=5 * s1.std() / np.sqrt(s1.size))
    s4 = cf.with_noise(NoiseModel.with_shots(800), rng).sample_partials(theta, 1, 20000)
    assert s4.std() / s1.std() == pytest.approx(0.5, rel=0.05)


def test_shot_cost_unbiased(tfim_cost, rng):
    cf = tfim_cost.with_noise(NoiseModel.with_shots(100), rng)
    theta = rng.uniform(-1, 1, cf.d)
    draws = np.array([cf.cost(theta) for _ in range(3000)])
    assert draws.mean() == pytest.approx(cf.exact_cost(theta), abs=5 * draws.std() / np.sqrt(draws.size))


def test_gaussian_noise_levels(tfim_cost, rng):
    cf = tfim_cost.with_noise(NoiseModel.gaussian(0.3, 0.05), rng)
    theta = np.full(cf.d, 0.2)
    costs = np.array([cf.cost(theta) for _ in range(4000)])
    assert costs.std() == pytest.approx(0.3, rel=0.05)
    assert cf.sample_partials(theta, 2, 4000).std() == pytest.approx(0.05, rel=0.05)


def test_exact_model_gives_identical_samples(tfim_cost):
    s = tfim_cost.sample_partials(np.full(tfim_cost.d, 0.3), 0, 50)
    assert np.all(s == s[0])


def test_alternating_evolution_rejects_shot_partials():
    h1, h2 = build_heisenberg_pair(3)
    evo = AlternatingEvolution(h1, h2, 1, init_basis_state(3, "101"))
    cf = CostFunction(h1 + h2, evo, None, NoiseModel.with_shots(100), np.random.default_rng(0))
    with pytest.raises(CapabilityError):
        cf.partial_derivative(np.zeros(2), 0)


def test_clone_is_independent(tfim_cost):
    noisy = tfim_cost.with_noise(NoiseModel.gaussian(0.1, 0.1), np.random.default_rng(5))
    a = noisy.clone(np.random.default_rng(9))
    b = noisy.clone(np.random.default_rng(9))
    theta = np.zeros(noisy.d)
    assert a.cost(theta) == b.cost(theta)
    assert a.cost_evals == 1 and noisy.cost_evals == 0


def test_quadratic_cost():
    a = np.diag([1.0, 2.0, 3.0])
    cf = QuadraticCost(a)
    theta = np.array([1.0, -1.0, 0.5])
    assert cf.exact_cost(theta) == pytest.approx(0.5 * theta @ a @ theta)
    assert np.allclose(cf.exact_gradient(theta), a @ theta)
    with pytest.raises(CapabilityError):
        QuadraticCost(a, NoiseModel.with_shots(10))
