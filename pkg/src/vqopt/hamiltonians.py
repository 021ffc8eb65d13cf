"""Spin-chain Hamiltonians and fidelity targets.

All chains use open boundaries: bonds run over (j, j+1) for j = 0..N-2.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .quantum import Observable, PauliString, StateVector, fidelity_to_subspace, ground_space


def _check_n(n: int) -> None:
    if n < 2:
        raise ValueError(f"chain needs N >= 2, got {n}")


def _string(n: int, spec: dict[int, str]) -> PauliString:
    return PauliString.from_ops(n, spec)


def build_tfim(n: int, j: float = 1.0, delta: float = 1.5) -> Observable:
    """J * sum Z_j Z_{j+1} + delta * sum X_j."""
    _check_n(n)
    terms = [(j, _string(n, {q: "Z", q + 1: "Z"})) for q in range(n - 1)]
    terms += [(delta, _string(n, {q: "X"})) for q in range(n)]
    return Observable(tuple(terms), n)


def build_ising_control(n: int, h: float) -> Observable:
    """H[h] = sum Z_{j+1} Z_j + sum (Z_j + h X_j)."""
    _check_n(n)
    terms = [(1.0, _string(n, {q: "Z", q + 1: "Z"})) for q in range(n - 1)]
    terms += [(1.0, _string(n, {q: "Z"})) for q in range(n)]
    terms += [(h, _string(n, {q: "X"})) for q in range(n)]
    return Observable(tuple(terms), n)


def build_heisenberg_pair(n: int, j: float = 1.0, delta: float = 0.5) -> tuple[Observable, Observable]:
    """Hopping part J*sum(XX + YY) and Ising part delta*sum ZZ, open chain."""
    _check_n(n)
    h1 = []
    for q in range(n - 1):
        h1.append((j, _string(n, {q: "X", q + 1: "X"})))
        h1.append((j, _string(n, {q: "Y", q + 1: "Y"})))
    h2 = [(delta, _string(n, {q: "Z", q + 1: "Z"})) for q in range(n - 1)]
    return Observable(tuple(h1), n), Observable(tuple(h2), n)


def build_x_mixer(n: int) -> Observable:
    return Observable(tuple((1.0, _string(n, {q: "X"})) for q in range(n)), n)


@dataclass(frozen=True)
class FidelityTarget:
    basis: tuple[StateVector, ...]

    def __post_init__(self):
        if not self.basis:
            raise ValueError("fidelity target needs at least one state")
        b = np.stack([v.amplitudes for v in self.basis])
        if np.max(np.abs(b.conj() @ b.T - np.eye(len(self.basis)))) > 1e-8:
            raise ValueError("fidelity target basis is not orthonormal")
        object.__setattr__(self, "basis", tuple(self.basis))

    @classmethod
    def ground_of(cls, obs: Observable, degeneracy_tol: float = 1e-8) -> "FidelityTarget":
        return cls(tuple(ground_space(obs, degeneracy_tol)[1]))

    @property
    def matrix(self) -> np.ndarray:
        """Rows are basis vectors."""
        return np.stack([v.amplitudes for v in self.basis])

    def fidelities(self, states: np.ndarray) -> np.ndarray:
        """Projection weight of each row of ``states`` onto the target span."""
        ov = np.atleast_2d(states) @ self.matrix.conj().T
        return np.sum(np.abs(ov) ** 2, axis=1)

    def fidelity(self, state: StateVector) -> float:
        return fidelity_to_subspace(state, list(self.basis))


def fidelity_cost(target: FidelityTarget):
    """Cost kernel 1 - fidelity; minimizing it maximizes overlap with the target span."""

    def kernel(states: np.ndarray) -> np.ndarray:
        return 1.0 - target.fidelities(states)

    kernel.target = target
    return kernel
