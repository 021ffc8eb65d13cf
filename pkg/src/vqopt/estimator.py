"""Noisy cost and derivative oracles with evaluation accounting."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ansatz import AlternatingEvolution, Circuit
from .hamiltonians import FidelityTarget
from .quantum import CapabilityError, Observable, StateVector, sample_means

EXACT, GAUSSIAN, SHOTS = "exact", "gaussian", "shots"


@dataclass(frozen=True)
class NoiseModel:
    kind: str = EXACT
    sigma1: float = 0.0
    sigma2: float = 0.0
    shots: int = 0

    def __post_init__(self):
        if self.kind not in (EXACT, GAUSSIAN, SHOTS):
            raise ValueError(f"unknown noise model {self.kind!r}")
        if self.sigma1 < 0 or self.sigma2 < 0:
            raise ValueError("noise standard deviations must be >= 0")
        if self.kind == SHOTS and self.shots < 1:
            raise ValueError("shot count must be >= 1")

    @classmethod
    def exact(cls) -> "NoiseModel":
        return cls(EXACT)

    @classmethod
    def gaussian(cls, sigma1: float, sigma2: float) -> "NoiseModel":
        return cls(GAUSSIAN, float(sigma1), float(sigma2))

    @classmethod
    def with_shots(cls, m: int) -> "NoiseModel":
        return cls(SHOTS, shots=int(m))

    @property
    def is_exact(self) -> bool:
        return self.kind == EXACT


@dataclass(frozen=True)
class GradientEstimate:
    values: np.ndarray
    evals_charged: int


class _Oracle:
    """Shared counter bookkeeping and Gaussian noise handling.

    Subclasses provide ``d``, ``exact_cost``, ``exact_partials`` and the
    shot-sampled variants where supported.
    """

    noise: NoiseModel
    rng: np.random.Generator

    def _init_counters(self):
        self.cost_evals = 0
        self.partial_evals = 0

    def _check_theta(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.d,):
            raise ValueError(f"expected {self.d} parameters, got shape {theta.shape}")
        return theta

    def _check_index(self, i: int) -> int:
        if not 0 <= int(i) < self.d:
            raise IndexError(f"parameter index {i} outside 0..{self.d - 1}")
        return int(i)

    def exact_gradient(self, theta) -> np.ndarray:
        return self.exact_partials(theta, range(self.d))

    def cost(self, theta) -> float:
        theta = self._check_theta(theta)
        self.cost_evals += 1
        if self.noise.kind == SHOTS:
            return self._sampled_cost(theta)
        value = self.exact_cost(theta)
        if self.noise.kind == GAUSSIAN:
            value = value + self.noise.sigma1 * self.rng.standard_normal()
        return float(value)

    def partial_derivative(self, theta, i: int) -> float:
        theta = self._check_theta(theta)
        i = self._check_index(i)
        self.partial_evals += 1
        if self.noise.kind == SHOTS:
            return float(self._sampled_partials(theta, [i])[0])
        value = self.exact_partials(theta, [i])[0]
        if self.noise.kind == GAUSSIAN:
            value = value + self.noise.sigma2 * self.rng.standard_normal()
        return float(value)

    def full_gradient(self, theta) -> GradientEstimate:
        theta = self._check_theta(theta)
        self.partial_evals += self.d
        if self.noise.kind == SHOTS:
            g = self._sampled_partials(theta, range(self.d))
        else:
            g = self.exact_gradient(theta)
            if self.noise.kind == GAUSSIAN:
                g = g + self.noise.sigma2 * self.rng.standard_normal(self.d)
        return GradientEstimate(np.asarray(g, dtype=float), self.d)

    def spsa_estimate(self, theta, c: float, rng: np.random.Generator | None = None) -> GradientEstimate:
        """Two-point simultaneous perturbation estimate with a Rademacher direction."""
        if not c > 0:
            raise ValueError(f"perturbation c must be > 0, got {c}")
        theta = self._check_theta(theta)
        rng = self.rng if rng is None else rng
        delta = rng.choice(np.array([-1.0, 1.0]), size=self.d)
        plus = self.cost(theta + c * delta)
        minus = self.cost(theta - c * delta)
        return GradientEstimate((plus - minus) / (2.0 * c) * delta, 1)

    def sample_partials(self, theta, i: int, n_samples: int) -> np.ndarray:
        """``n_samples`` independent noisy estimates of one partial derivative."""
        theta = self._check_theta(theta)
        i = self._check_index(i)
        self.partial_evals += n_samples
        if self.noise.kind == SHOTS:
            return self._sampled_partial_batch(theta, i, n_samples)
        exact = self.exact_partials(theta, [i])[0]
        if self.noise.kind == GAUSSIAN:
            return exact + self.noise.sigma2 * self.rng.standard_normal(n_samples)
        return np.full(n_samples, exact)

    def _sampled_cost(self, theta):
        raise CapabilityError(f"{type(self).__name__} has no shot-noise model")

    def _sampled_partials(self, theta, idx):
        raise CapabilityError(f"{type(self).__name__} has no shot-noise partials")

    def _sampled_partial_batch(self, theta, i, n):
        raise CapabilityError(f"{type(self).__name__} has no shot-noise partials")


class CostFunction(_Oracle):
    """Energy or target-infidelity cost of a circuit under a noise model.

    ``kernel`` is an :class:`Observable` (energy) or a :class:`FidelityTarget`
    (cost = 1 - fidelity).
    """

    def __init__(
        self,
        kernel: Observable | FidelityTarget,
        ansatz: Circuit | AlternatingEvolution,
        initial: StateVector | None = None,
        noise: NoiseModel | None = None,
        rng: np.random.Generator | None = None,
    ):
        if isinstance(ansatz, AlternatingEvolution):
            initial = ansatz.initial if initial is None else initial
            if initial is not ansatz.initial and not np.array_equal(initial.amplitudes, ansatz.initial.amplitudes):
                raise ValueError("an alternating evolution carries its own initial state")
        elif initial is None:
            raise ValueError("a circuit needs an initial state")
        if initial.n_qubits != ansatz.n_qubits:
            raise ValueError("initial state dimension does not match the ansatz")
        if isinstance(kernel, Observable):
            if kernel.n_qubits != ansatz.n_qubits:
                raise ValueError("observable dimension does not match the ansatz")
        elif isinstance(kernel, FidelityTarget):
            if kernel.basis[0].n_qubits != ansatz.n_qubits:
                raise ValueError("fidelity target dimension does not match the ansatz")
        else:
            raise TypeError("kernel must be an Observable or a FidelityTarget")
        self.kernel = kernel
        self.ansatz = ansatz
        self.initial = initial
        self.noise = noise or NoiseModel.exact()
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self._init_counters()

    @property
    def d(self) -> int:
        return self.ansatz.d

    @property
    def is_energy(self) -> bool:
        return isinstance(self.kernel, Observable)

    def clone(self, rng: np.random.Generator) -> "CostFunction":
        return CostFunction(self.kernel, self.ansatz, self.initial, self.noise, rng)

    def with_noise(self, noise: NoiseModel, rng: np.random.Generator | None = None) -> "CostFunction":
        return CostFunction(self.kernel, self.ansatz, self.initial, noise, rng if rng is not None else self.rng)

    def state(self, theta) -> StateVector:
        theta = self._check_theta(theta)
        if isinstance(self.ansatz, AlternatingEvolution):
            return StateVector(self.ansatz.forward(theta)[-1][0])
        return StateVector(self.ansatz.run(theta, self.initial))

    def _values(self, states: np.ndarray) -> np.ndarray:
        if self.is_energy:
            return self.kernel.expectations(states)
        return 1.0 - self.kernel.fidelities(states)

    def _sampled_values(self, states: np.ndarray, n: int | None = None) -> np.ndarray:
        """Shot-sampled costs per row; with ``n`` returns shape ``(n, rows)``."""
        m = self.noise.shots
        if self.is_energy:
            ev = self.kernel.term_expectations(states)
            if n is not None:
                ev = np.broadcast_to(ev, (n,) + ev.shape)
            return sample_means(ev, m, self.rng) @ self.kernel.coefficients()
        # the projector onto the target span is measured as a Bernoulli outcome
        fid = np.clip(self.kernel.fidelities(states), 0.0, 1.0)
        if n is not None:
            fid = np.broadcast_to(fid, (n,) + fid.shape)
        return 1.0 - self.rng.binomial(m, fid) / m

    def exact_cost(self, theta) -> float:
        return float(self._values(self.state(theta).amplitudes[None, :])[0])

    def _shift_rows(self, theta, idx):
        rows, labels = self.ansatz.shifted_states(theta, self.initial, idx)
        params = np.array([p for p, _, _ in labels], dtype=int)
        signs = np.array([s for _, _, s in labels], dtype=float)
        return rows, params, signs

    def _combine(self, values: np.ndarray, params, signs, idx) -> np.ndarray:
        out = np.zeros(values.shape[:-1] + (self.d,))
        contrib = 0.5 * signs * values
        for p in np.unique(params):
            out[..., p] = contrib[..., params == p].sum(axis=-1)
        return out[..., list(idx)]

    def _bra(self, psi: np.ndarray) -> np.ndarray:
        if self.is_energy:
            return self.kernel.apply(psi)
        b = self.kernel.matrix
        # gradient of 1 - <psi|P|psi> uses bra = -P psi
        return -((psi @ b.conj().T) @ b)

    def exact_partials(self, theta, idx) -> np.ndarray:
        """Exact partials; parameter shift for gate circuits, reverse sweep for evolutions."""
        theta = self._check_theta(theta)
        idx = list(idx)
        if isinstance(self.ansatz, AlternatingEvolution):
            states = self.ansatz.forward(theta)
            return self.ansatz.gradient(theta, self._bra(states[-1]), states, stop=min(idx, default=0))[idx]
        rows, params, signs = self._shift_rows(theta, idx)
        return self._combine(self._values(rows), params, signs, idx)

    def exact_gradient(self, theta) -> np.ndarray:
        """Full exact gradient by the adjoint method (agrees with the shift rule to rounding)."""
        theta = self._check_theta(theta)
        if isinstance(self.ansatz, AlternatingEvolution):
            return self.exact_partials(theta, range(self.d))
        return self.ansatz.adjoint_gradient(theta, self.initial, self._bra)

    def _sampled_cost(self, theta):
        return float(self._sampled_values(self.state(theta).amplitudes[None, :])[0])

    def _require_circuit(self):
        if isinstance(self.ansatz, AlternatingEvolution):
            raise CapabilityError("shot-noise partials need a gate circuit; alternating evolutions have no shift rule")

    def _sampled_partials(self, theta, idx):
        self._require_circuit()
        idx = list(idx)
        rows, params, signs = self._shift_rows(theta, idx)
        return self._combine(self._sampled_values(rows), params, signs, idx)

    def _sampled_partial_batch(self, theta, i, n):
        self._require_circuit()
        rows, params, signs = self._shift_rows(theta, [i])
        return self._combine(self._sampled_values(rows, n), params, signs, [i])[:, 0]


class QuadraticCost(_Oracle):
    """f(theta) = 0.5 theta^T A theta, with the same oracle interface as :class:`CostFunction`."""

    def __init__(self, a, noise: NoiseModel | None = None, rng: np.random.Generator | None = None):
        a = np.asarray(a, dtype=float)
        if a.ndim == 1:
            a = np.diag(a)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("curvature must be a vector or a square matrix")
        if not np.allclose(a, a.T):
            raise ValueError("curvature matrix must be symmetric")
        self.a = a
        self.noise = noise or NoiseModel.exact()
        if self.noise.kind == SHOTS:
            raise CapabilityError("quadratic costs support exact and Gaussian noise only")
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self._init_counters()

    @property
    def d(self) -> int:
        return self.a.shape[0]

    def clone(self, rng: np.random.Generator) -> "QuadraticCost":
        return QuadraticCost(self.a, self.noise, rng)

    def exact_cost(self, theta) -> float:
        theta = self._check_theta(theta)
        return float(0.5 * theta @ self.a @ theta)

    def exact_partials(self, theta, idx) -> np.ndarray:
        theta = self._check_theta(theta)
        return (self.a @ theta)[list(idx)]
