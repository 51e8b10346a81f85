import math

import numpy as np
import pytest

from sbsglimpse import qcore
from sbsglimpse.evolution import (
    conditional_env,
    conditional_propagator,
    initial_state,
    joint_state_direct,
    joint_state_factorized,
    system_populations,
)
from sbsglimpse.model import DephasingModel, EnvironmentSpec, InvalidModelError, random_model, reference_model

from conftest import MINUS, PLUS


def test_propagator_examples(ref_model):
    np.testing.assert_allclose(conditional_propagator(ref_model, 0, 1, 0.0), np.eye(2), atol=1e-15)
    np.testing.assert_allclose(conditional_propagator(ref_model, 0, 1, math.pi), np.diag([1, -1]), atol=1e-15)
    m = random_model(2, 3, [3, 2], asymmetric=True)
    for k in range(2):
        for t in (0.3, 5.0, 71.2):
            np.testing.assert_array_equal(conditional_propagator(m, k, 0, t), np.eye(m.env_dims[k]))


def test_propagator_is_unitary_and_matches_exponential():
    m = random_model(9, 3, [4])
    for i in range(3):
        w = conditional_propagator(m, 0, i, 1.3)
        assert qcore.is_unitary(w, 1e-12)
        np.testing.assert_allclose(w, qcore.exp_hermitian(m.environments[0].couplings[i], 1.3), atol=1e-12)


def test_index_errors(ref_model):
    with pytest.raises(IndexError):
        conditional_propagator(ref_model, 1, 0, 0.0)
    with pytest.raises(IndexError):
        conditional_env(ref_model, 0, 0, 2, 0.0)


def test_conditional_env_examples():
    m = random_model(4, 2, [3], asymmetric=True)
    rho0 = m.environments[0].rho0
    for t in np.linspace(0, 20, 7):
        np.testing.assert_array_equal(conditional_env(m, 0, 0, 0, t).operator, rho0)
    env = EnvironmentSpec.from_arrays([np.zeros((2, 2)), qcore.random_hermitian(2, np.random.default_rng(0))],
                                      np.eye(2) / 2)
    mm = DephasingModel.build([0, 0], [1, 0], [env])
    np.testing.assert_allclose(conditional_env(mm, 0, 1, 1, 2.2).operator, np.eye(2) / 2, atol=1e-15)


def test_conditional_env_structure():
    m = random_model(21, 3, [3])
    t = 0.8
    for i in range(3):
        assert qcore.is_density_operator(conditional_env(m, 0, i, i, t).operator, 1e-9)
        for j in range(3):
            a = conditional_env(m, 0, i, j, t).operator
            b = conditional_env(m, 0, j, i, t).operator
            np.testing.assert_allclose(a.conj().T, b, atol=1e-14)


def test_initial_product_form(ref_model):
    s = joint_state_factorized(ref_model, 0.0)
    expected = np.kron(qcore.projector(PLUS), np.diag([0.3, 0.7]))
    np.testing.assert_allclose(s.sigma, expected, atol=1e-15)
    np.testing.assert_allclose(joint_state_direct(ref_model, 0.0).sigma, expected, atol=1e-15)
    np.testing.assert_allclose(initial_state(ref_model).sigma, expected, atol=1e-15)


def test_reference_state_at_pi(ref_model):
    s = joint_state_factorized(ref_model, math.pi)
    expected = 0.3 * np.kron(qcore.projector(PLUS), qcore.projector([1, 0])) \
        + 0.7 * np.kron(qcore.projector(MINUS), qcore.projector([0, 1]))
    np.testing.assert_allclose(s.sigma, expected, atol=1e-15)


def test_free_evolution_closed_form():
    env = EnvironmentSpec.from_arrays([np.zeros((2, 2))] * 2, np.diag([0.4, 0.6]))
    w = 1.7
    m = DephasingModel.build([0, w], [1 / math.sqrt(2)] * 2, [env])
    for t in (0.0, 0.4, 3.3):
        s = joint_state_direct(m, t)
        rho_q = s.reduced([0])
        assert np.isclose(rho_q[0, 1], 0.5 * np.exp(1j * w * t), atol=1e-14)
        np.testing.assert_allclose(s.reduced([1]), np.diag([0.4, 0.6]), atol=1e-14)


@pytest.mark.parametrize("seed", range(25))
def test_direct_state_is_physical(seed):
    rng = np.random.default_rng(seed)
    m = random_model(seed, int(rng.integers(2, 4)), [int(rng.integers(1, 4))] * int(rng.integers(1, 3)))
    for t in rng.uniform(0, 10, 4):
        s = joint_state_direct(m, float(t))
        assert s.is_physical(1e-9)


@pytest.mark.parametrize("seed", range(20))
def test_factorized_matches_direct(seed):
    rng = np.random.default_rng(100 + seed)
    m = random_model(seed, int(rng.integers(2, 5)), list(rng.integers(1, 5, size=int(rng.integers(1, 3)))))
    for t in rng.uniform(-5, 30, 3):
        a, b = joint_state_factorized(m, float(t)), joint_state_direct(m, float(t))
        assert qcore.trace_distance(a.sigma, b.sigma) <= 1e-10


def test_populations_conserved():
    np.testing.assert_allclose(system_populations(joint_state_factorized(reference_model(), 2.1)), [0.5, 0.5],
                               atol=1e-15)
    m = reference_model(amplitudes=[math.sqrt(0.8), math.sqrt(0.2)])
    for t in np.linspace(0, 30, 11):
        np.testing.assert_allclose(system_populations(joint_state_factorized(m, t)), [0.8, 0.2], atol=1e-14)
    m = random_model(5, 4, [3, 2])
    target = np.abs(m.amplitudes) ** 2
    for t in np.linspace(0, 50, 100):
        np.testing.assert_allclose(system_populations(joint_state_factorized(m, t)), target, atol=1e-10)


def test_invalid_model_rejected():
    with pytest.raises(InvalidModelError):
        joint_state_factorized(reference_model(amplitudes=[1, 1]), 1.0)
