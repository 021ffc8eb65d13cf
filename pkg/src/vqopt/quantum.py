"""Dense state-vector simulation.

Bit order: qubit 0 is the leftmost character of a bitstring and the most
significant bit of the amplitude index, so ``"10"`` on two qubits is index 2.
Rotation gates use the half-angle convention ``exp(-i * theta * P / 2)``.

Most routines operate on batches of states shaped ``(B, 2**n)``; the public
single-state helpers wrap them.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg

MAX_DENSE_QUBITS = 14
MAX_SPECTRAL_QUBITS = 12

ROTATIONS = ("RX", "RY", "RZ", "RZZ")
FIXED = ("CZ", "CNOT", "H", "X")
GATE_KINDS = ROTATIONS + FIXED
_ARITY = {"RX": 1, "RY": 1, "RZ": 1, "RZZ": 2, "CZ": 2, "CNOT": 2, "H": 1, "X": 1}


class CapabilityError(RuntimeError):
    """Requested size exceeds what the dense simulator materializes."""


# ---------------------------------------------------------------------------
# states


@dataclass
class StateVector:
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.ndim != 1:
            raise ValueError("amplitudes must be one-dimensional")
        n = int(amps.size).bit_length() - 1
        if amps.size != 1 << n or n < 1:
            raise ValueError(f"length {amps.size} is not 2**n with n >= 1")
        self.amplitudes = amps

    @property
    def n_qubits(self) -> int:
        return int(self.amplitudes.size).bit_length() - 1

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def overlap(self, other: "StateVector") -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes))


def init_basis_state(n_qubits: int, bits: str) -> StateVector:
    if len(bits) != n_qubits or set(bits) - {"0", "1"}:
        raise ValueError(f"bitstring {bits!r} does not describe {n_qubits} qubits")
    amps = np.zeros(1 << n_qubits, dtype=complex)
    amps[int(bits, 2)] = 1.0
    return StateVector(amps)


def plus_state(n_qubits: int) -> StateVector:
    return StateVector(np.full(1 << n_qubits, (1 << n_qubits) ** -0.5, dtype=complex))


def index_to_bits(index: int, n_qubits: int) -> str:
    return format(index, f"0{n_qubits}b")


# ---------------------------------------------------------------------------
# cached index helpers


@lru_cache(maxsize=None)
def z_signs(n: int, qubit: int) -> np.ndarray:
    """+1/-1 eigenvalue of Z on ``qubit`` for every basis index."""
    idx = np.arange(1 << n)
    bit = (idx >> (n - 1 - qubit)) & 1
    out = 1.0 - 2.0 * bit
    out.flags.writeable = False
    return out


@lru_cache(maxsize=None)
def zz_signs(n: int, a: int, b: int) -> np.ndarray:
    out = z_signs(n, a) * z_signs(n, b)
    out.flags.writeable = False
    return out


@lru_cache(maxsize=None)
def flip_perm(n: int, mask: int) -> np.ndarray:
    out = np.arange(1 << n) ^ mask
    out.flags.writeable = False
    return out


def _bit(n: int, q: int) -> int:
    return 1 << (n - 1 - q)


# ---------------------------------------------------------------------------
# gates


@dataclass(frozen=True)
class Gate:
    """One gate occurrence.

    Rotations either carry a ``slot`` (trainable, bound at run time) or a
    fixed ``angle``.  Fixed gates carry neither.
    """

    kind: str
    qubits: tuple[int, ...]
    slot: int | None = None
    angle: float | None = None

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        if len(self.qubits) != _ARITY[self.kind]:
            raise ValueError(f"{self.kind} acts on {_ARITY[self.kind]} qubit(s), got {self.qubits}")
        if len(set(self.qubits)) != len(self.qubits):
            raise ValueError(f"{self.kind} needs distinct qubits, got {self.qubits}")
        if self.kind in FIXED and (self.slot is not None or self.angle is not None):
            raise ValueError(f"{self.kind} takes no angle")
        if self.slot is not None and self.angle is not None:
            raise ValueError("a rotation is either slotted or fixed, not both")

    @property
    def is_rotation(self) -> bool:
        return self.kind in ROTATIONS

    @property
    def trainable(self) -> bool:
        return self.slot is not None


def _check_qubits(gate: Gate, n: int) -> None:
    for q in gate.qubits:
        if not 0 <= q < n:
            raise ValueError(f"qubit {q} out of range for {n} qubits")


def _apply_1q(states: np.ndarray, n: int, q: int, m: np.ndarray) -> np.ndarray:
    b = states.shape[0]
    if q == n - 1:
        return (states.reshape(-1, 2) @ m.T).reshape(b, -1)
    view = states.reshape(b << q, 2, 1 << (n - 1 - q))
    return np.matmul(m, view).reshape(b, -1)


_H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)


def rotation_matrix(kind: str, theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    if kind == "RX":
        return np.array([[c, -1j * s], [-1j * s, c]])
    if kind == "RY":
        return np.array([[c, -s], [s, c]], dtype=complex)
    if kind == "RZ":
        return np.array([[np.exp(-0.5j * theta), 0], [0, np.exp(0.5j * theta)]])
    raise ValueError(kind)


def _phase(signs: np.ndarray, theta: float) -> np.ndarray:
    """exp(-i theta s / 2) for a +/-1 sign vector."""
    e = np.exp(-0.5j * theta)
    return np.where(signs > 0, e, e.conjugate())


def apply_gate_batch(states: np.ndarray, n: int, gate: Gate, angle: float | None = None) -> np.ndarray:
    """Apply ``gate`` to each row of ``states``; returns a new array."""
    k = gate.kind
    if k in ROTATIONS:
        theta = gate.angle if angle is None else angle
        if theta is None:
            raise ValueError(f"{k} needs an angle")
        if k == "RZZ":
            return states * _phase(zz_signs(n, *gate.qubits), theta)
        if k == "RZ":
            return states * _phase(z_signs(n, gate.qubits[0]), theta)
        return _apply_1q(states, n, gate.qubits[0], rotation_matrix(k, theta))
    if angle is not None:
        raise ValueError(f"{k} takes no angle")
    if k == "H":
        return _apply_1q(states, n, gate.qubits[0], _H)
    if k == "X":
        return states[:, flip_perm(n, _bit(n, gate.qubits[0]))]
    if k == "CZ":
        a, b = gate.qubits
        # -1 only on |11>
        sign = 1.0 - 0.5 * (1 - z_signs(n, a)) * (1 - z_signs(n, b))
        return states * sign
    # CNOT: flip target where control is 1
    c, t = gate.qubits
    idx = np.arange(1 << n)
    ctrl = (idx >> (n - 1 - c)) & 1
    return states[:, idx ^ (ctrl * _bit(n, t))]


DIAGONAL_KINDS = ("RZ", "RZZ", "CZ")


def gate_diagonal(gate: Gate, n: int, angle: float | None = None) -> np.ndarray:
    """Diagonal of a diagonal gate (RZ, RZZ, CZ) as a length-2**n vector."""
    k = gate.kind
    if k == "CZ":
        a, b = gate.qubits
        return 1.0 - 0.5 * (1 - z_signs(n, a)) * (1 - z_signs(n, b))
    theta = gate.angle if angle is None else angle
    if k == "RZZ":
        return _phase(zz_signs(n, *gate.qubits), theta)
    if k == "RZ":
        return _phase(z_signs(n, gate.qubits[0]), theta)
    raise ValueError(f"{k} is not diagonal")


def apply_generator_batch(states: np.ndarray, n: int, gate: Gate) -> np.ndarray:
    """Multiply by the Pauli generator P of a rotation gate (P**2 = I)."""
    k = gate.kind
    if k == "RZZ":
        return states * zz_signs(n, *gate.qubits)
    q = gate.qubits[0]
    if k == "RZ":
        return states * z_signs(n, q)
    flipped = states[:, flip_perm(n, _bit(n, q))]
    if k == "RX":
        return flipped
    if k == "RY":
        # Y|0> = i|1>, Y|1> = -i|0>; source bit b gives phase i*(-1)**b
        return flipped * (1j * z_signs(n, q)[flip_perm(n, _bit(n, q))])
    raise ValueError(f"{k} has no Pauli generator")


def apply_gate(state: StateVector, gate: Gate, angle: float | None = None) -> StateVector:
    n = state.n_qubits
    _check_qubits(gate, n)
    if gate.is_rotation and angle is None and gate.angle is None:
        raise ValueError(f"{gate.kind} needs an angle")
    if gate.is_rotation and angle is not None and gate.angle is not None:
        raise ValueError(f"{gate.kind} already has a fixed angle")
    if not gate.is_rotation and angle is not None:
        raise ValueError(f"{gate.kind} takes no angle")
    out = apply_gate_batch(state.amplitudes[None, :], n, gate, angle)
    return StateVector(out[0])


def gate_matrix(gate: Gate, n: int, angle: float | None = None) -> np.ndarray:
    """Dense 2**n unitary of a gate; used by tests and small checks."""
    eye = np.eye(1 << n, dtype=complex)
    # columns are images of basis vectors
    return apply_gate_batch(eye, n, gate, angle).T


# ---------------------------------------------------------------------------
# Pauli strings and observables


_PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


@dataclass(frozen=True)
class PauliString:
    letters: str

    def __post_init__(self):
        if not self.letters or set(self.letters) - set("IXYZ"):
            raise ValueError(f"bad Pauli string {self.letters!r}")

    @property
    def n_qubits(self) -> int:
        return len(self.letters)

    @classmethod
    def from_ops(cls, n: int, ops: dict[int, str]) -> "PauliString":
        letters = ["I"] * n
        for q, p in ops.items():
            letters[q] = p
        return cls("".join(letters))

    @property
    def flip_mask(self) -> int:
        n = self.n_qubits
        return sum(_bit(n, q) for q, p in enumerate(self.letters) if p in "XY")

    def phases(self) -> np.ndarray:
        """Phase picked up by each *source* basis index: P|x> = phase[x] |x ^ mask>."""
        n = self.n_qubits
        out = np.ones(1 << n, dtype=complex)
        for q, p in enumerate(self.letters):
            if p == "Z":
                out = out * z_signs(n, q)
            elif p == "Y":
                out = out * (1j * z_signs(n, q))
        return out

    def matrix(self) -> np.ndarray:
        m = np.ones((1, 1), dtype=complex)
        for p in self.letters:
            m = np.kron(m, _PAULI[p])
        return m

    def is_diagonal(self) -> bool:
        return set(self.letters) <= {"I", "Z"}

    def label(self) -> str:
        """Sparse label such as ``Z0 Z3``; ``I`` for the identity."""
        parts = [f"{p}{q}" for q, p in enumerate(self.letters) if p != "I"]
        return " ".join(parts) if parts else "I"


@dataclass(frozen=True)
class Observable:
    """Real-weighted sum of Pauli strings."""

    terms: tuple[tuple[float, PauliString], ...]
    n_qubits: int
    _compiled: dict = field(default_factory=dict, compare=False, hash=False, repr=False)

    def __post_init__(self):
        clean = []
        for c, p in self.terms:
            if not isinstance(p, PauliString):
                p = PauliString(p)
            c = float(c)
            if not np.isfinite(c):
                raise ValueError("coefficients must be finite")
            if p.n_qubits != self.n_qubits:
                raise ValueError(f"term {p.letters} does not act on {self.n_qubits} qubits")
            clean.append((c, p))
        object.__setattr__(self, "terms", tuple(clean))

    @classmethod
    def from_terms(cls, n: int, terms) -> "Observable":
        return cls(tuple((c, p if isinstance(p, PauliString) else PauliString(p)) for c, p in terms), n)

    def __add__(self, other: "Observable") -> "Observable":
        if other.n_qubits != self.n_qubits:
            raise ValueError("qubit count mismatch")
        return Observable(self.terms + other.terms, self.n_qubits)

    def scaled(self, a: float) -> "Observable":
        return Observable(tuple((a * c, p) for c, p in self.terms), self.n_qubits)

    def simplified(self, tol: float = 0.0) -> "Observable":
        """Merge duplicate strings and drop coefficients with magnitude <= tol."""
        acc: dict[str, float] = {}
        for c, p in self.terms:
            acc[p.letters] = acc.get(p.letters, 0.0) + c
        return Observable(
            tuple((c, PauliString(s)) for s, c in sorted(acc.items()) if abs(c) > tol), self.n_qubits
        )

    def coefficients(self) -> np.ndarray:
        return np.array([c for c, _ in self.terms])

    def matrix(self) -> np.ndarray:
        n = self.n_qubits
        if n > MAX_DENSE_QUBITS:
            raise CapabilityError(f"{n} qubits exceeds the dense bound {MAX_DENSE_QUBITS}")
        dim = 1 << n
        idx = np.arange(dim)
        out = np.zeros((dim, dim), dtype=complex)
        for c, p in self.terms:
            # P|x> = phase[x] |x ^ mask>
            out[idx ^ p.flip_mask, idx] += c * p.phases()
        return out

    def is_diagonal(self) -> bool:
        return all(p.is_diagonal() for _, p in self.terms)

    def diagonal(self) -> np.ndarray:
        """Diagonal of the dense matrix (exact for any observable)."""
        n = self.n_qubits
        out = np.zeros(1 << n)
        for c, p in self.terms:
            if p.is_diagonal():
                out += c * p.phases().real
        return out

    # grouped term evaluation; cached per instance
    def _groups(self):
        g = self._compiled.get("groups")
        if g is None:
            by_mask: dict[int, list[int]] = {}
            for k, (_, p) in enumerate(self.terms):
                by_mask.setdefault(p.flip_mask, []).append(k)
            g = []
            for mask, ks in sorted(by_mask.items()):
                ph = np.stack([self.terms[k][1].phases() for k in ks], axis=1)
                g.append((mask, np.array(ks), ph))
            self._compiled["groups"] = g
        return g

    def term_expectations(self, states: np.ndarray) -> np.ndarray:
        """Per-term expectation values, shape ``(B, n_terms)``, for a batch of states."""
        states = np.atleast_2d(states)
        n = self.n_qubits
        out = np.empty((states.shape[0], len(self.terms)))
        conj = states.conj()
        for mask, ks, ph in self._groups():
            if mask == 0:
                w = (conj * states).real
                out[:, ks] = w @ ph.real
            else:
                perm = flip_perm(n, mask)
                # <psi|P|psi> = sum_y conj(psi_y) phase[y^m] psi[y^m]
                w = conj * states[:, perm]
                out[:, ks] = (w @ ph[perm]).real
        return out

    def expectations(self, states: np.ndarray) -> np.ndarray:
        return self.term_expectations(states) @ self.coefficients()

    def apply(self, states: np.ndarray) -> np.ndarray:
        """H applied to each row of ``states`` without forming the dense matrix."""
        states = np.atleast_2d(states)
        out = np.zeros_like(states, dtype=complex)
        n = self.n_qubits
        for c, p in self.terms:
            out += c * (states * p.phases())[:, flip_perm(n, p.flip_mask)]
        return out

    def __hash__(self):
        return hash((self.n_qubits, self.terms))


def expectation(state: StateVector, obs: Observable) -> float:
    if state.n_qubits != obs.n_qubits:
        raise ValueError("dimension mismatch between state and observable")
    psi = state.amplitudes
    total = 0.0 + 0.0j
    n = obs.n_qubits
    for c, p in obs.terms:
        perm = flip_perm(n, p.flip_mask)
        total += c * np.vdot(psi, (p.phases() * psi)[perm])
    if abs(total.imag) > 1e-10:
        raise ArithmeticError(f"non-real expectation {total}")
    return float(total.real)


def fidelity_to_subspace(state: StateVector, basis: list[StateVector], tol: float = 1e-8) -> float:
    if not basis:
        raise ValueError("empty basis")
    b = np.stack([v.amplitudes for v in basis])
    if b.shape[1] != state.amplitudes.size:
        raise ValueError("dimension mismatch")
    gram = b.conj() @ b.T
    if np.max(np.abs(gram - np.eye(len(basis)))) > tol:
        raise ValueError("basis is not orthonormal")
    return float(np.sum(np.abs(b.conj() @ state.amplitudes) ** 2))


# ---------------------------------------------------------------------------
# spectra


@dataclass(frozen=True)
class SpectralDecomposition:
    """H = V diag(w) V^dagger; ``diagonal`` marks H already diagonal in the computational basis."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    diagonal: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "_vc", None if self.diagonal is not None else self.eigenvectors.conj())

    def evolve(self, states: np.ndarray, t: float) -> np.ndarray:
        """Apply exp(-i * H * t) to a batch of states (rows)."""
        if self.diagonal is not None:
            return states * np.exp(-1j * self.diagonal * t)
        coeff = states @ self._vc
        return (coeff * np.exp(-1j * self.eigenvalues * t)) @ self.eigenvectors.T

    def apply_h(self, states: np.ndarray) -> np.ndarray:
        if self.diagonal is not None:
            return states * self.diagonal
        return ((states @ self._vc) * self.eigenvalues) @ self.eigenvectors.T


_spectral_lock = threading.Lock()
_spectral_cache: dict[Observable, SpectralDecomposition] = {}


def spectral(obs: Observable) -> SpectralDecomposition:
    if obs.n_qubits > MAX_SPECTRAL_QUBITS:
        raise CapabilityError(f"{obs.n_qubits} qubits exceeds the spectral bound {MAX_SPECTRAL_QUBITS}")
    with _spectral_lock:
        hit = _spectral_cache.get(obs)
    if hit is not None:
        return hit
    if obs.is_diagonal():
        diag = obs.diagonal()
        order = np.argsort(diag, kind="stable")
        vecs = np.eye(diag.size, dtype=complex)[:, order]
        dec = SpectralDecomposition(diag[order], vecs, diag)
    else:
        w, v = _eigh(obs.matrix())
        dec = SpectralDecomposition(w, v.astype(complex))
    with _spectral_lock:
        _spectral_cache.setdefault(obs, dec)
    return dec


def ground_space(obs: Observable, degeneracy_tol: float = 1e-8) -> tuple[float, list[StateVector]]:
    if obs.n_qubits > MAX_DENSE_QUBITS:
        raise CapabilityError(f"{obs.n_qubits} qubits exceeds the dense bound {MAX_DENSE_QUBITS}")
    if obs.is_diagonal():
        diag = obs.diagonal()
        e0 = float(diag.min())
        idx = np.flatnonzero(diag <= e0 + degeneracy_tol)
        basis = []
        for i in idx:
            amps = np.zeros(diag.size, dtype=complex)
            amps[i] = 1.0
            basis.append(StateVector(amps))
        return e0, basis
    with _spectral_lock:
        hit = _spectral_cache.get(obs)
    if hit is not None:
        w, v = hit.eigenvalues, hit.eigenvectors
    else:
        w, v = _lowest_eigenpairs(obs.matrix())
    e0 = float(w[0])
    k = int(np.sum(w <= e0 + degeneracy_tol))
    if k == w.size and w.size < v.shape[0]:
        w, v = _eigh(obs.matrix())
        k = int(np.sum(w <= e0 + degeneracy_tol))
    return e0, [StateVector(v[:, j].astype(complex)) for j in range(k)]


def _eigh(m: np.ndarray):
    # real symmetric input (no odd count of Y letters) halves the work
    if not np.any(m.imag):
        return np.linalg.eigh(m.real)
    return np.linalg.eigh(m)


def _lowest_eigenpairs(m: np.ndarray, count: int = 8):
    if m.shape[0] <= 4 * count:
        return _eigh(m)
    a = m.real if not np.any(m.imag) else m
    return scipy.linalg.eigh(a, subset_by_index=[0, count - 1], driver="evr")


# ---------------------------------------------------------------------------
# measurement sampling


def pauli_probability(state: StateVector, p: PauliString) -> float:
    obs = Observable(((1.0, p),), p.n_qubits)
    ev = float(obs.term_expectations(state.amplitudes)[0, 0])
    prob = 0.5 * (1.0 + ev)
    if prob < -1e-9 or prob > 1 + 1e-9:
        raise ArithmeticError(f"outcome probability {prob} outside [0, 1]")
    return min(max(prob, 0.0), 1.0)


def sample_means(expectations: np.ndarray, shots: int, rng: np.random.Generator) -> np.ndarray:
    """Sample means of ``shots`` +/-1 outcomes for each given exact expectation."""
    if shots < 1:
        raise ValueError("shots must be >= 1")
    ev = np.asarray(expectations, dtype=float)
    prob = 0.5 * (1.0 + ev)
    if np.any(prob < -1e-9) or np.any(prob > 1 + 1e-9):
        raise ArithmeticError("outcome probability outside [0, 1]")
    k = rng.binomial(shots, np.clip(prob, 0.0, 1.0))
    return (2.0 * k - shots) / shots


def sample_pauli_mean(state: StateVector, p: PauliString, shots: int, rng: np.random.Generator) -> float:
    if shots < 1:
        raise ValueError("shots must be >= 1")
    prob = pauli_probability(state, p)
    return float(sample_means(np.array([2 * prob - 1]), shots, rng)[0])
