"""Conditional propagators and the joint system-environment state.

Two independent routes to the state at time t:

* ``joint_state_factorized`` assembles the block form
  sigma(t) = sum_ij |i><j| a_i(t) a_j(t)^* (x)_k rho_ij^k(t),
  rho_ij^k(t) = w_i^k(t) rho^k(0) w_j^k(t)^dagger,  w_i^k(t) = exp(-i V_k^i t);
* ``joint_state_direct`` conjugates the initial product state with
  exp(-i H t) of the full Hamiltonian. It exists as an oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import qcore
from .model import DephasingModel, require_valid, total_hamiltonian


@dataclass(frozen=True, eq=False)
class JointState:
    sigma: np.ndarray
    dims: tuple[int, ...]
    t: float

    def reduced(self, keep) -> np.ndarray:
        return qcore.partial_trace(self.sigma, self.dims, keep)

    def is_physical(self, tol: float = 1e-9) -> bool:
        return qcore.is_density_operator(self.sigma, tol)


@dataclass(frozen=True, eq=False)
class ConditionalEnvOperator:
    k: int
    i: int
    j: int
    operator: np.ndarray
    t: float


def _check_indices(model: DephasingModel, k: int, *pointer: int) -> None:
    if not 0 <= k < model.n_env:
        raise IndexError(f"environment index {k} out of range (N = {model.n_env})")
    for i in pointer:
        if not 0 <= i < model.d_Q:
            raise IndexError(f"pointer index {i} out of range (d_Q = {model.d_Q})")


def conditional_propagator(model: DephasingModel, k: int, i: int, t: float) -> np.ndarray:
    _check_indices(model, k, i)
    return model.environments[k].propagator(i, t)


def conditional_env(model: DephasingModel, k: int, i: int, j: int, t: float) -> ConditionalEnvOperator:
    _check_indices(model, k, i, j)
    env = model.environments[k]
    wi = env.propagator(i, t)
    wj = wi if j == i else env.propagator(j, t)
    return ConditionalEnvOperator(k, i, j, wi @ env.rho0 @ wj.conj().T, t)


def initial_state(model: DephasingModel) -> JointState:
    psi = qcore.projector(model.amplitudes)
    return JointState(qcore.tensor(psi, *(e.rho0 for e in model.environments)), tuple(model.dims), 0.0)


def joint_state_factorized(model: DephasingModel, t: float) -> JointState:
    require_valid(model)
    a = model.amplitudes_at(t)
    d_q = model.d_Q
    # w_i rho0 for every (k, i); rho_ij^k = (w_i rho0) w_j^dagger
    w = [[env.propagator(i, t) for i in range(d_q)] for env in model.environments]
    d_env = int(np.prod(model.env_dims))
    sigma = np.zeros((d_q, d_env, d_q, d_env), dtype=complex)
    for i in range(d_q):
        for j in range(i, d_q):
            block = qcore.tensor(*(w[k][i] @ env.rho0 @ w[k][j].conj().T
                                   for k, env in enumerate(model.environments)))
            sigma[i, :, j, :] = a[i] * np.conj(a[j]) * block
            if j != i:
                sigma[j, :, i, :] = sigma[i, :, j, :].conj().T
    return JointState(sigma.reshape(d_q * d_env, d_q * d_env), tuple(model.dims), t)


def joint_state_direct(model: DephasingModel, t: float) -> JointState:
    u = qcore.exp_hermitian(total_hamiltonian(model), t)
    s0 = initial_state(model).sigma
    return JointState(u @ s0 @ u.conj().T, tuple(model.dims), t)


def system_populations(state: JointState) -> np.ndarray:
    return np.real(np.diag(state.reduced([0])))
