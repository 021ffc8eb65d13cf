"""QUBO problems, the benchmark instances built on them, and Ising compilation.

Binary variable ``x_i`` maps to qubit ``i`` through ``x_i = (1 - Z_i) / 2``, so a
bitstring read left to right is both the assignment ``x_0 x_1 ...`` and the
computational basis label.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .quantum import CapabilityError, Observable, PauliString

MAX_ENUMERATION = 24


@dataclass(frozen=True)
class QuboProblem:
    """cost(x) = x^T Q x + constant over x in {0, 1}^n."""

    Q: np.ndarray
    constant: float = 0.0

    def __post_init__(self):
        q = np.array(self.Q, dtype=float)
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise ValueError(f"Q must be square, got shape {q.shape}")
        if np.max(np.abs(q - q.T), initial=0.0) > 1e-12:
            raise ValueError("Q must be symmetric")
        q.flags.writeable = False
        object.__setattr__(self, "Q", q)
        object.__setattr__(self, "constant", float(self.constant))

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    def cost(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(x @ self.Q @ x + self.constant)

    def costs(self, xs: np.ndarray) -> np.ndarray:
        """Vectorized cost over rows of a 0/1 matrix."""
        xs = np.asarray(xs, dtype=float)
        return np.einsum("bi,ij,bj->b", xs, self.Q, xs) + self.constant


class _QuboBuilder:
    def __init__(self, n: int):
        self.Q = np.zeros((n, n))
        self.constant = 0.0

    def add(self, coeff: float, i: int, j: int | None = None) -> None:
        """Add coeff * x_i * x_j (or coeff * x_i when j is None or j == i)."""
        if j is None or i == j:
            self.Q[i, i] += coeff
        else:
            self.Q[i, j] += coeff / 2
            self.Q[j, i] += coeff / 2

    def add_one_hot_penalty(self, weight: float, idx: list[int]) -> None:
        # weight * (1 - sum x)^2 with x^2 = x
        self.constant += weight
        for k in idx:
            self.add(-weight, k)
        for a, b in itertools.combinations(idx, 2):
            self.add(2 * weight, a, b)

    def build(self) -> QuboProblem:
        return QuboProblem(self.Q, self.constant)


def build_maxcut(edges, n: int | None = None) -> QuboProblem:
    """QUBO for -(cut size); its minimum is minus the max-cut value."""
    seen = set()
    for i, j in edges:
        if i == j:
            raise ValueError(f"self-loop at vertex {i}")
        key = (min(i, j), max(i, j))
        if key in seen:
            raise ValueError(f"duplicate edge {key}")
        seen.add(key)
    if n is None:
        n = 1 + max(max(e) for e in seen)
    b = _QuboBuilder(n)
    for i, j in seen:
        # cut indicator x_i + x_j - 2 x_i x_j, negated
        b.add(-1.0, i)
        b.add(-1.0, j)
        b.add(2.0, i, j)
    return b.build()


def tsp_variable(city: int, position: int, n_cities: int = 3) -> int:
    """Flattened index of x_{city, position} (both 1-based): n*city + position - n - 1."""
    return n_cities * city + position - n_cities - 1


def build_tsp(weights, penalty: float) -> QuboProblem:
    """Cyclic-tour TSP with one-hot penalties on positions and on cities."""
    w = np.asarray(weights, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] < 2:
        raise ValueError(f"weights must be a square matrix, got shape {w.shape}")
    if np.max(np.abs(w - w.T)) > 0 or np.any(np.diag(w) != 0):
        raise ValueError("weights must be symmetric with zero diagonal")
    if penalty < 0:
        raise ValueError("penalty must be non-negative")
    m = w.shape[0]
    var = lambda i, p: tsp_variable(i, p, m)  # noqa: E731
    b = _QuboBuilder(m * m)
    for i in range(1, m + 1):
        for j in range(1, m + 1):
            if i == j:
                continue
            for p in range(1, m + 1):
                nxt = p % m + 1
                b.add(w[i - 1, j - 1], var(i, p), var(j, nxt))
    if penalty:
        for p in range(1, m + 1):
            b.add_one_hot_penalty(penalty, [var(i, p) for i in range(1, m + 1)])
        for i in range(1, m + 1):
            b.add_one_hot_penalty(penalty, [var(i, p) for p in range(1, m + 1)])
    return b.build()


def qubo_to_ising(q: QuboProblem) -> Observable:
    n = q.n
    Q = q.Q
    const = q.constant
    z = np.zeros(n)
    zz: dict[tuple[int, int], float] = {}
    for i in range(n):
        const += Q[i, i] / 2
        z[i] -= Q[i, i] / 2
        for j in range(i + 1, n):
            c = 2 * Q[i, j]
            if c == 0:
                continue
            const += c / 4
            z[i] -= c / 4
            z[j] -= c / 4
            zz[(i, j)] = c / 4
    terms = [(const, PauliString("I" * n))]
    terms += [(z[i], PauliString.from_ops(n, {i: "Z"})) for i in range(n) if z[i] != 0]
    terms += [(c, PauliString.from_ops(n, {i: "Z", j: "Z"})) for (i, j), c in sorted(zz.items())]
    return Observable(tuple(terms), n)


# ---------------------------------------------------------------------------
# Boolean polynomials and the factoring instance


@dataclass(frozen=True)
class BooleanPolynomial:
    """Multilinear polynomial over Boolean variables, keyed by variable subsets."""

    terms: dict = field(default_factory=dict)

    def __post_init__(self):
        clean: dict[frozenset, float] = {}
        for k, c in self.terms.items():
            k = frozenset(k)
            clean[k] = clean.get(k, 0.0) + float(c)
        object.__setattr__(self, "terms", {k: c for k, c in clean.items() if c != 0})

    @classmethod
    def const(cls, c: float) -> "BooleanPolynomial":
        return cls({frozenset(): c})

    @classmethod
    def var(cls, i: int) -> "BooleanPolynomial":
        return cls({frozenset([i]): 1.0})

    @staticmethod
    def _lift(other) -> "BooleanPolynomial":
        return other if isinstance(other, BooleanPolynomial) else BooleanPolynomial.const(other)

    def __add__(self, other):
        other = self._lift(other)
        out = dict(self.terms)
        for k, c in other.terms.items():
            out[k] = out.get(k, 0.0) + c
        return BooleanPolynomial(out)

    __radd__ = __add__

    def __neg__(self):
        return BooleanPolynomial({k: -c for k, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        other = self._lift(other)
        out: dict[frozenset, float] = {}
        for k1, c1 in self.terms.items():
            for k2, c2 in other.terms.items():
                k = k1 | k2  # x^2 = x
                out[k] = out.get(k, 0.0) + c1 * c2
        return BooleanPolynomial(out)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        out = BooleanPolynomial.const(1.0)
        for _ in range(k):
            out = out * self
        return out

    @property
    def degree(self) -> int:
        return max((len(k) for k in self.terms), default=0)

    @property
    def variables(self) -> set[int]:
        return set().union(*self.terms) if self.terms else set()

    @property
    def constant(self) -> float:
        return self.terms.get(frozenset(), 0.0)

    def evaluate(self, x) -> float:
        return float(sum(c for k, c in self.terms.items() if all(x[i] for i in k)))

    def evaluate_all(self, n: int) -> np.ndarray:
        """Values on all 2**n assignments in basis order (x_0 is the leftmost bit)."""
        idx = np.arange(1 << n)
        bits = (idx[:, None] >> (n - 1 - np.arange(n))) & 1
        out = np.zeros(1 << n)
        for k, c in self.terms.items():
            out += c * np.prod(bits[:, sorted(k)], axis=1) if k else c
        return out

    def to_ising(self, n: int) -> Observable:
        acc: dict[str, float] = {}
        for k, c in self.terms.items():
            k = sorted(k)
            scale = c / (1 << len(k))
            for r in range(len(k) + 1):
                for sub in itertools.combinations(k, r):
                    s = PauliString.from_ops(n, {i: "Z" for i in sub}).letters
                    acc[s] = acc.get(s, 0.0) + scale * (-1) ** r
        terms = [(c, PauliString(s)) for s, c in sorted(acc.items(), key=lambda t: _ising_order(t[0])) if c != 0]
        return Observable(tuple(terms), n)


def _ising_order(letters: str):
    weight = sum(ch != "I" for ch in letters)
    return (weight, [i for i, ch in enumerate(letters) if ch != "I"])


def _is_integer_valued(p: BooleanPolynomial) -> bool:
    return all(float(c).is_integer() for c in p.terms.values())


def reduce_quartic(a: int, b: int, s: BooleanPolynomial) -> BooleanPolynomial:
    """Quadratized stand-in for the clause (x_a x_b + S)^2.

    Returns 2 * [ (x_a + x_b - 1/2) / 2 + S ]^2 - 1/8, which has the same
    minimizers whenever S is integer valued and independent of x_a, x_b.
    """
    s = BooleanPolynomial._lift(s)
    if a == b:
        raise ValueError("clause factors must be distinct variables")
    if {a, b} & s.variables:
        raise ValueError("S must not depend on the product's factors")
    if not _is_integer_valued(s):
        raise ValueError("S must take integer values")
    xa, xb = BooleanPolynomial.var(a), BooleanPolynomial.var(b)
    inner = 0.5 * (xa + xb - 0.5) + s
    return 2.0 * inner * inner - 0.125


# factoring variables in qubit order (p1, p2, q1, q2)
P1, P2, Q1, Q2 = 0, 1, 2, 3


def factoring_143_polynomial() -> BooleanPolynomial:
    """Reduced cost for 143 = p*q with p = 9 + 2 p1 + 4 p2 and q = 9 + 2 q1 + 4 q2."""
    v = BooleanPolynomial.var
    first = (v(P1) + v(Q1) - 1) ** 2
    second = (v(P2) + v(Q2) - 1) ** 2
    # (p2 q1 + p1 q2 - 1)^2 with A = p1, B = q2, S = p2 q1 - 1
    third = reduce_quartic(P1, Q2, v(P2) * v(Q1) - 1)
    return first + second + third


def factoring_143_clauses() -> BooleanPolynomial:
    """Unreduced clause sum, kept for cross-checking minimizers."""
    v = BooleanPolynomial.var
    return (v(P1) + v(Q1) - 1) ** 2 + (v(P2) + v(Q2) - 1) ** 2 + (v(P2) * v(Q1) + v(P1) * v(Q2) - 1) ** 2


def build_factoring_143() -> Observable:
    """Four-qubit factoring Hamiltonian with the polynomial's constant offset dropped.

    The offset is 5, so the diagonal equals ``factoring_143_polynomial()(x) - 5``
    and the ground energy is -5.
    """
    poly = factoring_143_polynomial()
    return (poly - poly.constant).to_ising(4)


def decode_factors(bits: str) -> tuple[int, int]:
    p1, p2, q1, q2 = (int(ch) for ch in bits)
    return 8 + 4 * p2 + 2 * p1 + 1, 8 + 4 * q2 + 2 * q1 + 1


# ---------------------------------------------------------------------------
# enumeration oracle


def _assignments(n: int, start: int, stop: int) -> np.ndarray:
    idx = np.arange(start, stop)
    return ((idx[:, None] >> (n - 1 - np.arange(n))) & 1).astype(float)


def brute_force_min(problem, atol: float = 1e-9, chunk: int = 1 << 16) -> tuple[float, list[str]]:
    """Exact minimum and every minimizing bitstring of a QUBO or diagonal observable."""
    if isinstance(problem, Observable):
        if not problem.is_diagonal():
            raise ValueError("observable is not diagonal")
        n = problem.n_qubits
        if n > MAX_ENUMERATION:
            raise CapabilityError(f"{n} variables exceeds the enumeration bound")
        values = problem.diagonal()
        best = float(values.min())
        tol = atol * max(1.0, abs(best))
        return best, [format(i, f"0{n}b") for i in np.flatnonzero(values <= best + tol)]
    n = problem.n
    if n > MAX_ENUMERATION:
        raise CapabilityError(f"{n} variables exceeds the enumeration bound")
    best = np.inf
    cand_idx, cand_val = [], []
    for start in range(0, 1 << n, chunk):
        vals = problem.costs(_assignments(n, start, min(start + chunk, 1 << n)))
        best = min(best, float(vals.min()))
        keep = np.flatnonzero(vals <= best + atol * max(1.0, abs(best)))
        cand_idx.extend(int(start + i) for i in keep)
        cand_val.extend(vals[keep])
    tol = atol * max(1.0, abs(best))
    hits = [i for i, v in zip(cand_idx, cand_val) if v <= best + tol]
    return best, [format(i, f"0{n}b") for i in hits]


# ---------------------------------------------------------------------------
# text formats


class QuboFormatError(ValueError):
    pass


def parse_qubo(text: str) -> QuboProblem:
    """Parse ``n``, then ``i j coeff`` lines (each adds coeff*x_i*x_j), then ``const c``."""
    n = None
    b = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if n is None:
                if len(parts) != 1:
                    raise QuboFormatError(f"line {lineno}: expected variable count")
                n = int(parts[0])
                if n < 1:
                    raise QuboFormatError(f"line {lineno}: variable count must be positive")
                b = _QuboBuilder(n)
            elif parts[0] == "const":
                if len(parts) != 2:
                    raise QuboFormatError(f"line {lineno}: expected 'const <value>'")
                b.constant += float(parts[1])
            else:
                if len(parts) != 3:
                    raise QuboFormatError(f"line {lineno}: expected 'i j coeff'")
                i, j, c = int(parts[0]), int(parts[1]), float(parts[2])
                if not (0 <= i < n and 0 <= j < n):
                    raise QuboFormatError(f"line {lineno}: index out of range 0..{n - 1}")
                b.add(c, i, j)
        except QuboFormatError:
            raise
        except ValueError as exc:
            raise QuboFormatError(f"line {lineno}: {exc}") from None
    if n is None:
        raise QuboFormatError("empty problem file")
    return b.build()


def format_qubo(q: QuboProblem) -> str:
    lines = [str(q.n)]
    for i in range(q.n):
        for j in range(i, q.n):
            c = float(q.Q[i, i] if i == j else 2 * q.Q[i, j])
            if c != 0:
                lines.append(f"{i} {j} {c!r}")
    if q.constant != 0:
        lines.append(f"const {q.constant!r}")
    return "\n".join(lines) + "\n"


def format_ising(obs: Observable) -> str:
    """``coeff  label`` per line, non-identity terms sorted by label, constant last."""
    simp = obs.simplified()
    const = 0.0
    rows = []
    for c, p in simp.terms:
        if set(p.letters) == {"I"}:
            const += c
        else:
            rows.append((p.label(), c))
    rows.sort()
    lines = [f"{float(c)!r}  {label}" for label, c in rows]
    lines.append(f"{float(const)!r}  I")
    return "\n".join(lines) + "\n"


def parse_ising(text: str, n: int) -> Observable:
    terms = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        coeff, _, label = line.partition("  ")
        ops = {}
        if label.strip() != "I":
            for tok in label.split():
                ops[int(tok[1:])] = tok[0]
        try:
            terms.append((float(coeff), PauliString.from_ops(n, ops)))
        except (ValueError, IndexError) as exc:
            raise QuboFormatError(f"line {lineno}: {exc}") from None
    return Observable(tuple(terms), n)
