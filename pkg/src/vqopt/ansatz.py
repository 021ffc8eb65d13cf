"""Parameterized circuits for the four ansatz families and their execution."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .quantum import (
    Gate,
    Observable,
    StateVector,
    apply_gate_batch,
    DIAGONAL_KINDS,
    apply_generator_batch,
    gate_diagonal,
    spectral,
)

_SQRT_HALF = np.sqrt(0.5)


@dataclass(frozen=True)
class Circuit:
    """Ordered gates plus a slot -> parameter-index map.

    Every trainable gate occurrence owns one slot; several slots may share a
    parameter index, which is how layer-wide shared angles are expressed.
    """

    n_qubits: int
    gates: tuple[Gate, ...]
    slot_map: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        slots = [g.slot for g in self.gates if g.slot is not None]
        if len(set(slots)) != len(slots):
            raise ValueError("each trainable gate needs its own slot")
        missing = set(slots) - set(self.slot_map)
        if missing:
            raise ValueError(f"slots without a parameter: {sorted(missing)}")
        params = sorted(set(self.slot_map[s] for s in slots))
        if params != list(range(len(params))):
            raise ValueError("parameter indices must be 0..d-1 without gaps")
        for g in self.gates:
            for q in g.qubits:
                if not 0 <= q < self.n_qubits:
                    raise ValueError(f"gate {g} outside {self.n_qubits} qubits")
            if g.is_rotation and g.slot is None and g.angle is None:
                raise ValueError(f"rotation {g} has neither slot nor angle")
        occ: dict[int, list[int]] = {}
        for pos, g in enumerate(self.gates):
            if g.slot is not None:
                occ.setdefault(self.slot_map[g.slot], []).append(pos)
        object.__setattr__(self, "_occurrences", occ)
        # maximal runs of commuting diagonal gates, fused when branching
        plan: list[list[int]] = []
        for pos, g in enumerate(self.gates):
            if g.kind in DIAGONAL_KINDS and plan and self.gates[plan[-1][-1]].kind in DIAGONAL_KINDS:
                plan[-1].append(pos)
            else:
                plan.append([pos])
        object.__setattr__(self, "_plan", plan)

    @property
    def d(self) -> int:
        return len(self._occurrences)

    def occurrences(self, i: int) -> list[int]:
        """Gate positions driven by parameter ``i``."""
        return self._occurrences[i]

    def _angle(self, g: Gate, theta: np.ndarray) -> float | None:
        if g.slot is not None:
            return float(theta[self.slot_map[g.slot]])
        return g.angle

    def _check(self, theta, initial: StateVector) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.d,):
            raise ValueError(f"expected {self.d} parameters, got shape {theta.shape}")
        if initial.n_qubits != self.n_qubits:
            raise ValueError("initial state dimension does not match the circuit")
        return theta

    def run(self, theta, initial: StateVector) -> np.ndarray:
        theta = self._check(theta, initial)
        psi = initial.amplitudes[None, :]
        n = self.n_qubits
        for g in self.gates:
            psi = apply_gate_batch(psi, n, g, self._angle(g, theta))
        return psi[0]

    def shifted_states(self, theta, initial: StateVector, params) -> tuple[np.ndarray, list[tuple[int, int, int]]]:
        """States with single gate occurrences shifted by +/- pi/2.

        For every occurrence of every parameter in ``params`` two rows are
        produced.  Returns the row array and one ``(param, position, sign)``
        label per row.  Uses R(t +/- pi/2) = R(t) (I -/+ iP)/sqrt(2) so all
        branches share one forward sweep.
        """
        theta = self._check(theta, initial)
        params = list(params)
        wanted: dict[int, int] = {}
        for i in params:
            for pos in self._occurrences[i]:
                wanted[pos] = i
        labels: list[tuple[int, int, int]] = []
        rows = 1 + 2 * len(wanted)
        n = self.n_qubits
        buf = np.empty((rows, 1 << n), dtype=complex)
        buf[0] = initial.amplitudes
        active = 1
        for block in self._plan:
            if len(block) == 1:
                g = self.gates[block[0]]
                buf[:active] = apply_gate_batch(buf[:active], n, g, self._angle(g, theta))
            else:
                phase = np.ones(1 << n, dtype=complex)
                for pos in block:
                    g = self.gates[pos]
                    phase *= gate_diagonal(g, n, self._angle(g, theta))
                buf[:active] *= phase
            # a diagonal generator commutes with the rest of its block,
            # so branching after the whole block is exact
            for pos in block:
                if pos not in wanted:
                    continue
                main = buf[:1]
                gen = apply_generator_batch(main, n, self.gates[pos])
                buf[active] = (main[0] - 1j * gen[0]) * _SQRT_HALF
                buf[active + 1] = (main[0] + 1j * gen[0]) * _SQRT_HALF
                labels.append((wanted[pos], pos, +1))
                labels.append((wanted[pos], pos, -1))
                active += 2
        return buf[1:active], labels

    def adjoint_gradient(self, theta, initial: StateVector, bra_fn) -> np.ndarray:
        """2 Re <bra| d psi / d theta_i> for every parameter by one reverse sweep.

        ``bra_fn`` maps the final state (1, 2**n) to the bra row, e.g. O psi.
        """
        theta = self._check(theta, initial)
        n = self.n_qubits
        phi = self.run(theta, initial)[None, :]
        lam = bra_fn(phi)
        grad = np.zeros(self.d)
        for g in reversed(self.gates):
            angle = self._angle(g, theta)
            if g.slot is not None:
                # dU/dt = -i/2 P U, so the contribution is Im <lam| P phi>
                gp = apply_generator_batch(phi, n, g)
                grad[self.slot_map[g.slot]] += float(np.imag(np.vdot(lam, gp)))
            inv = -angle if angle is not None else None
            phi = apply_gate_batch(phi, n, g, inv)
            lam = apply_gate_batch(lam, n, g, inv)
        return grad

    def to_text(self) -> str:
        """One gate per line: kind, comma-joined qubits, slot:param or '-', fixed angle."""
        lines = [f"# circuit n_qubits={self.n_qubits} d={self.d}"]
        for g in self.gates:
            q = ",".join(str(x) for x in g.qubits)
            slot = f"{g.slot}:{self.slot_map[g.slot]}" if g.slot is not None else "-"
            angle = "" if g.angle is None else f" {g.angle!r}"
            lines.append(f"{g.kind} {q} {slot}{angle}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Circuit":
        n = None
        gates, slot_map = [], {}
        for raw in text.splitlines():
            line = raw.strip()
            if line.startswith("# circuit"):
                n = int(line.split("n_qubits=")[1].split()[0])
                continue
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            kind, qubits, slot = parts[0], tuple(int(x) for x in parts[1].split(",")), parts[2]
            angle = float(parts[3]) if len(parts) > 3 else None
            s = None
            if slot != "-":
                s, p = (int(x) for x in slot.split(":"))
                slot_map[s] = p
            gates.append(Gate(kind, qubits, s, angle))
        if n is None:
            raise ValueError("missing '# circuit n_qubits=' header")
        return cls(n, tuple(gates), slot_map)


class _Builder:
    def __init__(self, n: int):
        self.n = n
        self.gates: list[Gate] = []
        self.slot_map: dict[int, int] = {}

    def fixed(self, kind: str, *qubits: int, angle: float | None = None) -> None:
        self.gates.append(Gate(kind, qubits, None, angle))

    def rot(self, kind: str, param: int, *qubits: int) -> None:
        slot = len(self.slot_map)
        self.slot_map[slot] = param
        self.gates.append(Gate(kind, qubits, slot))

    def build(self) -> Circuit:
        return Circuit(self.n, tuple(self.gates), dict(self.slot_map))


def _check_sizes(n: int, layers: int) -> None:
    if n < 2:
        raise ValueError(f"need at least 2 qubits, got {n}")
    if layers < 1:
        raise ValueError(f"need at least 1 layer, got {layers}")


def brickwork_pairs(n: int) -> list[tuple[int, int]]:
    even = [(q, q + 1) for q in range(0, n - 1, 2)]
    odd = [(q, q + 1) for q in range(1, n - 1, 2)]
    return even + odd


def build_qaoa_like_tfim(n: int, layers: int) -> Circuit:
    """Fixed RY(3pi/2) on every qubit, then per layer a shared-angle RZZ brickwork and a shared-angle RX layer."""
    _check_sizes(n, layers)
    b = _Builder(n)
    for q in range(n):
        b.fixed("RY", q, angle=3 * np.pi / 2)
    for layer in range(layers):
        for a, c in brickwork_pairs(n):
            b.rot("RZZ", 2 * layer, a, c)
        for q in range(n):
            b.rot("RX", 2 * layer + 1, q)
    return b.build()


def hea_entangler(n: int) -> list[tuple[int, int]]:
    """CX pairs of one entangling block: every (i, j) with i < j, in lexicographic order."""
    return [(i, j) for i in range(n) for j in range(i + 1, n)]


def build_hea(n: int, layers: int) -> Circuit:
    """RY/RZ rotation layers with distinct angles separated by ``layers`` CX blocks.

    d = 2 * n * (layers + 1); three qubits with two blocks gives 18.
    """
    _check_sizes(n, layers)
    b = _Builder(n)
    p = 0
    for block in range(layers + 1):
        for kind in ("RY", "RZ"):
            for q in range(n):
                b.rot(kind, p, q)
                p += 1
        if block < layers:
            for c, t in hea_entangler(n):
                b.fixed("CNOT", c, t)
    return b.build()


def build_qubo_ansatz(n: int, layers: int) -> Circuit:
    """Per layer: RY with a distinct angle on every qubit, then a CZ chain."""
    _check_sizes(n, layers)
    b = _Builder(n)
    p = 0
    for _ in range(layers):
        for q in range(n):
            b.rot("RY", p, q)
            p += 1
        for q in range(n - 1):
            b.fixed("CZ", q, q + 1)
    return b.build()


@dataclass(frozen=True)
class AlternatingEvolution:
    """exp(-i H2 b_p) exp(-i H1 a_p) ... exp(-i H2 b_1) exp(-i H1 a_1) applied to ``initial``.

    Parameters are ordered (a_1, b_1, ..., a_p, b_p).
    """

    h1: Observable
    h2: Observable
    p: int
    initial: StateVector

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("need at least one layer")
        if not (self.h1.n_qubits == self.h2.n_qubits == self.initial.n_qubits):
            raise ValueError("qubit counts of H1, H2 and the initial state differ")

    @property
    def n_qubits(self) -> int:
        return self.h1.n_qubits

    @property
    def d(self) -> int:
        return 2 * self.p

    def generators(self):
        s1, s2 = spectral(self.h1), spectral(self.h2)
        return [s1 if k % 2 == 0 else s2 for k in range(self.d)]

    def forward(self, theta) -> list[np.ndarray]:
        """States after each factor; element 0 is the initial state."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.d,):
            raise ValueError(f"expected {self.d} parameters, got shape {theta.shape}")
        states = [self.initial.amplitudes[None, :]]
        for gen, t in zip(self.generators(), theta):
            states.append(gen.evolve(states[-1], t))
        return states

    def gradient(self, theta, bra: np.ndarray, states: list[np.ndarray] | None = None, stop: int = 0) -> np.ndarray:
        """2 Re <bra| d psi / d theta_k> for every k >= ``stop``, by a reverse sweep.

        With bra = O psi this is the gradient of <psi|O|psi>.  Entries below
        ``stop`` are left as NaN.
        """
        if states is None:
            states = self.forward(theta)
        gens = self.generators()
        lam = np.atleast_2d(bra)
        out = np.full(self.d, np.nan)
        for k in range(self.d - 1, stop - 1, -1):
            dpsi = -1j * gens[k].apply_h(states[k + 1])
            out[k] = 2.0 * np.real(np.vdot(lam, dpsi))
            lam = gens[k].evolve(lam, -theta[k])
        return out


def run_alternating(evo: AlternatingEvolution, theta) -> StateVector:
    return StateVector(evo.forward(theta)[-1][0])


def bind_and_run(c: Circuit, theta, initial: StateVector) -> StateVector:
    return StateVector(c.run(theta, initial))
