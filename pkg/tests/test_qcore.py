import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sbsglimpse import qcore

SX = np.array([[0, 1], [1, 0]], dtype=complex)


def series_expm(h, t, squarings=10, terms=30):
    """exp(-i h t) by scaling and squaring of a truncated Taylor series."""
    a = -1j * h * t / 2**squarings
    out = np.eye(len(h), dtype=complex)
    term = np.eye(len(h), dtype=complex)
    for k in range(1, terms):
        term = term @ a / k
        out = out + term
    for _ in range(squarings):
        out = out @ out
    return out


def test_tensor_identity_and_diagonal():
    np.testing.assert_array_equal(qcore.tensor(np.eye(2), np.eye(2)), np.eye(4))
    np.testing.assert_array_equal(qcore.tensor(np.diag([1, -1]), np.eye(2)), np.diag([1, 1, -1, -1]))


def test_tensor_trace_multiplies(rng):
    for _ in range(20):
        a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        b = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        assert np.isclose(np.trace(qcore.tensor(a, b)), np.trace(a) * np.trace(b), atol=1e-12)


def test_tensor_is_associative(rng):
    a, b, c = (qcore.random_hermitian(d, rng) for d in (2, 3, 2))
    np.testing.assert_allclose(qcore.tensor(a, b, c), np.kron(np.kron(a, b), c), atol=1e-14)


def test_partial_trace_product_and_bell(rng):
    ra, rb = qcore.random_density(2, rng), qcore.random_density(2, rng)
    np.testing.assert_allclose(qcore.partial_trace(qcore.tensor(ra, rb), [2, 2], [0]), ra, atol=1e-14)
    np.testing.assert_allclose(qcore.partial_trace(qcore.tensor(ra, rb), [2, 2], [1]), rb, atol=1e-14)
    bell = qcore.projector(np.array([1, 0, 0, 1]) / math.sqrt(2))
    for keep in ([0], [1]):
        np.testing.assert_allclose(qcore.partial_trace(bell, [2, 2], keep), np.eye(2) / 2, atol=1e-15)


def test_partial_trace_preserves_trace(rng):
    for _ in range(100):
        op = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
        for keep in ([0], [1]):
            assert np.isclose(np.trace(qcore.partial_trace(op, [2, 3], keep)), np.trace(op), atol=1e-12)


def test_partial_trace_recovers_weighted_factors(rng):
    a = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    b = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    ab = qcore.tensor(a, b)
    np.testing.assert_allclose(qcore.partial_trace(ab, [3, 2], [0]), a * np.trace(b), atol=1e-12)
    np.testing.assert_allclose(qcore.partial_trace(ab, [3, 2], [1]), b * np.trace(a), atol=1e-12)


def test_partial_trace_dimension_mismatch():
    with pytest.raises(ValueError):
        qcore.partial_trace(np.eye(4), [2, 3], [0])
    with pytest.raises(ValueError):
        qcore.partial_trace(np.eye(4), [2, 2], [])


def test_exp_hermitian_trivial_cases(rng):
    h = qcore.random_hermitian(3, rng)
    np.testing.assert_allclose(qcore.exp_hermitian(h, 0.0), np.eye(3), atol=1e-15)
    np.testing.assert_allclose(qcore.exp_hermitian(np.diag([0.0, 1.0]), math.pi), np.diag([1, -1]), atol=1e-15)


def test_exp_hermitian_sigma_x_closed_form_and_series():
    t = 0.7
    closed = math.cos(t) * np.eye(2) - 1j * math.sin(t) * SX
    np.testing.assert_allclose(qcore.exp_hermitian(SX, t), closed, atol=1e-14)
    np.testing.assert_allclose(series_expm(SX, t), closed, atol=1e-14)


def test_exp_hermitian_matches_series_oracle(rng):
    for d in (2, 3, 5):
        h = qcore.random_hermitian(d, rng, scale=2.0)
        t = float(rng.uniform(-3, 3))
        np.testing.assert_allclose(qcore.exp_hermitian(h, t), series_expm(h, t), atol=1e-11)


def test_exp_hermitian_rejects_non_hermitian():
    with pytest.raises(ValueError):
        qcore.exp_hermitian(np.array([[0, 1j], [1j, 0]]), 1.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 6), st.floats(-20, 20), st.floats(-20, 20))
def test_exp_hermitian_unitary_and_group_law(seed, d, t1, t2):
    h = qcore.random_hermitian(d, np.random.default_rng(seed))
    u1, u2 = qcore.exp_hermitian(h, t1), qcore.exp_hermitian(h, t2)
    assert np.max(np.abs(u1 @ u1.conj().T - np.eye(d))) <= 1e-12
    np.testing.assert_allclose(u1 @ u2, qcore.exp_hermitian(h, t1 + t2), atol=1e-10)


def test_trace_distance_examples():
    zero, one = qcore.projector([1, 0]), qcore.projector([0, 1])
    plus = qcore.projector(np.array([1, 1]) / math.sqrt(2))
    assert qcore.trace_distance(zero, zero) == 0
    assert math.isclose(qcore.trace_distance(zero, one), 1.0, abs_tol=1e-15)
    # pure states: D = sqrt(1 - |<a|b>|^2)
    assert math.isclose(qcore.trace_distance(zero, plus), 1 / math.sqrt(2), abs_tol=1e-15)


def test_trace_distance_dimension_mismatch():
    with pytest.raises(ValueError):
        qcore.trace_distance(np.eye(2), np.eye(3))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.integers(2, 4))
def test_trace_distance_is_a_metric(seed, d):
    rng = np.random.default_rng(seed)
    a, b, c = (qcore.random_density(d, rng) for _ in range(3))
    assert qcore.trace_distance(a, b) == qcore.trace_distance(b, a)
    assert qcore.trace_distance(a, c) <= qcore.trace_distance(a, b) + qcore.trace_distance(b, c) + 1e-12


def test_partial_transpose_of_bell_spectrum():
    bell = qcore.projector(np.array([1, 0, 0, 1]) / math.sqrt(2))
    ev = np.sort(np.linalg.eigvalsh(qcore.partial_transpose(bell, [2, 2], [1])))
    np.testing.assert_allclose(ev, [-0.5, 0.5, 0.5, 0.5], atol=1e-15)


def test_predicates(rng):
    rho = qcore.random_density(3, rng)
    assert qcore.is_density_operator(rho)
    assert not qcore.is_density_operator(2 * rho)
    assert qcore.is_unitary(qcore.random_unitary(4, rng))
    assert not qcore.is_hermitian(np.array([[0, 1j], [1j, 0]]))
    assert not qcore.is_positive_semidefinite(np.diag([1.0, -0.1]))


def test_strip_global_phase_and_closest_orthonormal(rng):
    v = np.array([0, 1j, 1]) / math.sqrt(2)
    s = qcore.strip_global_phase(v)
    assert s[0] == 0 and s[1].real > 0 and abs(s[1].imag) < 1e-15
    m = np.eye(3) + 1e-3 * rng.normal(size=(3, 3))
    q = qcore.closest_orthonormal(m)
    np.testing.assert_allclose(q.conj().T @ q, np.eye(3), atol=1e-14)
