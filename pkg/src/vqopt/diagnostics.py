"""Pointwise Lipschitz and PL estimates, and empirical stability checks on quadratics."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import stats

from .estimator import QuadraticCost


class ContractError(ValueError):
    """A diagnostic received a noisy cost where an exact one is required."""


class DiagnosticError(RuntimeError):
    pass


def _exact_callable(f) -> Callable[[np.ndarray], float]:
    noise = getattr(f, "noise", None)
    if noise is not None:
        if not noise.is_exact:
            raise ContractError("Hessian estimates need an exact cost; got a noisy oracle")
        return f.exact_cost
    if hasattr(f, "exact_cost"):
        return f.exact_cost
    return f


def hessian_fd(f, theta, h: float = 1e-3) -> np.ndarray:
    """Central-difference Hessian, symmetrized.

    Diagonal entries use the three-point second difference, off-diagonal
    entries the four-point mixed stencil.
    """
    if not h > 0:
        raise ValueError("step h must be > 0")
    fn = _exact_callable(f)
    theta = np.asarray(theta, dtype=float)
    d = theta.size
    f0 = fn(theta)
    eye = np.eye(d) * h
    fp = np.array([fn(theta + eye[i]) for i in range(d)])
    fm = np.array([fn(theta - eye[i]) for i in range(d)])
    hess = np.empty((d, d))
    hess[np.diag_indices(d)] = (fp - 2 * f0 + fm) / h**2
    for i in range(d):
        for j in range(i + 1, d):
            ei, ej = eye[i], eye[j]
            v = fn(theta + ei + ej) - fn(theta + ei - ej) - fn(theta - ei + ej) + fn(theta - ei - ej)
            hess[i, j] = hess[j, i] = v / (4 * h**2)
    return 0.5 * (hess + hess.T)


def spectral_norm(m: np.ndarray, tol: float = 1e-8, max_iter: int = 1000) -> float:
    """Largest |eigenvalue| of a symmetric matrix by power iteration on M^2."""
    m = np.asarray(m, dtype=float)
    if not np.any(m):
        return 0.0
    m2 = m @ m
    v = np.random.default_rng(0).standard_normal(m.shape[0])
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iter):
        w = m2 @ v
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return 0.0
        new = float(v @ w)
        v = w / nrm
        if abs(new - est) <= tol * max(abs(new), 1e-300):
            return float(np.sqrt(max(new, 0.0)))
        est = new
    raise DiagnosticError(f"power iteration did not converge in {max_iter} steps")


@dataclass(frozen=True)
class LipschitzReport:
    L: float
    L_i: np.ndarray
    L_max: float
    L_avg: float

    @classmethod
    def from_hessian(cls, hess: np.ndarray) -> "LipschitzReport":
        li = np.abs(np.diag(hess))
        return cls(spectral_norm(hess), li, float(li.max()), float(li.mean()))

    @property
    def d(self) -> int:
        return self.L_i.size

    @property
    def ratio_avg(self) -> float:
        return self.L / self.L_avg if self.L_avg > 0 else float("inf")

    @property
    def ratio_max(self) -> float:
        return self.L / self.L_max if self.L_max > 0 else float("inf")

    def chain_violations(self, tol: float = 1e-6) -> list[str]:
        """Which links of L_avg <= L_max <= L <= d * L_max fail at this point.

        The last link needs a positive semidefinite Hessian; at saddle-like
        points it can fail, which is reported rather than hidden.
        """
        bad = []
        if self.L_avg > self.L_max * (1 + tol):
            bad.append("L_avg <= L_max")
        if self.L_max > self.L * (1 + tol):
            bad.append("L_max <= L")
        if self.L > self.d * self.L_max * (1 + tol):
            bad.append("L <= d*L_max")
        return bad


def hessian_from_gradient(grad, theta, h: float = 1e-3) -> np.ndarray:
    """Hessian by central differences of an exact gradient: 2d gradient calls instead of ~2d^2 costs."""
    if not h > 0:
        raise ValueError("step h must be > 0")
    theta = np.asarray(theta, dtype=float)
    eye = np.eye(theta.size) * h
    cols = [(grad(theta + e) - grad(theta - e)) / (2 * h) for e in eye]
    hess = np.array(cols)
    return 0.5 * (hess + hess.T)


def lipschitz_at(f, theta, h: float = 1e-3, grad=None) -> LipschitzReport:
    """Pointwise L, L_i from the finite-difference Hessian at ``theta``.

    With ``grad`` (an exact gradient callable) the Hessian is built from
    gradient differences, which is much cheaper for large d.
    """
    if grad is not None:
        _exact_callable(f)
        return LipschitzReport.from_hessian(hessian_from_gradient(grad, theta, h))
    return LipschitzReport.from_hessian(hessian_fd(f, theta, h))


@dataclass(frozen=True)
class PLEstimate:
    mu_hat: float
    sample_count: int
    excluded: int
    f_min_reference: float


def estimate_pl(f, grad, samples, f_min: float, gap_tol: float = 1e-8) -> PLEstimate:
    """min over samples of |grad f|^2 / (2 (f - f_min)), skipping near-minimal samples."""
    fn = _exact_callable(f)
    samples = list(samples)
    if not samples:
        raise ValueError("no samples")
    ratios = []
    for theta in samples:
        gap = fn(theta) - f_min
        if gap <= gap_tol:
            continue
        g = np.asarray(grad(theta), dtype=float)
        ratios.append(float(g @ g) / (2 * gap))
    if not ratios:
        raise DiagnosticError("every sample lies within the tolerance of f_min; the PL estimate is undefined")
    return PLEstimate(max(min(ratios), 0.0), len(ratios), len(samples) - len(ratios), f_min)


def lemma_bound(L: float, mu: float, sigma2: float, d: int, delta_f: float) -> float:
    """Largest stable constant learning rate min(1/L, 2 mu delta_f / (L sigma^2 d))."""
    if sigma2 == 0:
        return 1.0 / L
    return min(1.0 / L, 2 * mu * delta_f / (L * sigma2**2 * d))


def noise_floor(L: float, mu: float, sigma2: float, d: int, a: float) -> float:
    return L * a * sigma2**2 * d / mu


@dataclass(frozen=True)
class StabilityRow:
    a: float
    escapes: int
    trials: int
    floor: float

    @property
    def frequency(self) -> float:
        return self.escapes / self.trials

    @property
    def std_error(self) -> float:
        p = self.frequency
        return float(np.sqrt(max(p * (1 - p), 1.0 / self.trials) / self.trials))


def stability_experiment(
    cf: QuadraticCost,
    theta0,
    a_grid,
    n_trials: int,
    delta_f: float,
    max_iters: int = 2000,
    rng: np.random.Generator | None = None,
) -> list[StabilityRow]:
    """Escape frequencies of noisy GD from the basin f < delta_f.

    A trial escapes when the exact cost reaches ``delta_f`` before it first
    drops to the noise floor L a sigma^2 d / mu; trials that reach the floor or
    exhaust ``max_iters`` count as stable.  Trials run vectorized.
    """
    if cf.noise.kind != "gaussian":
        raise ValueError("stability experiments need a Gaussian noise model")
    rng = np.random.default_rng(0) if rng is None else rng
    eig = np.linalg.eigvalsh(cf.a)
    mu, L = float(eig.min()), float(eig.max())
    if mu <= 0:
        raise ValueError("stability experiments need a positive definite quadratic")
    sigma2, d = cf.noise.sigma2, cf.d
    theta0 = np.asarray(theta0, dtype=float)
    if 0.5 * theta0 @ cf.a @ theta0 >= delta_f:
        raise ValueError("theta0 must start inside the basin f < delta_f")
    rows = []
    for a in a_grid:
        floor = noise_floor(L, mu, sigma2, d, a)
        th = np.tile(theta0, (n_trials, 1))
        active = np.ones(n_trials, dtype=bool)
        escaped = np.zeros(n_trials, dtype=bool)
        for _ in range(max_iters):
            if not active.any():
                break
            idx = np.flatnonzero(active)
            g = th[idx] @ cf.a + sigma2 * rng.standard_normal((idx.size, d))
            th[idx] -= a * g
            fvals = 0.5 * np.einsum("ij,jk,ik->i", th[idx], cf.a, th[idx])
            esc = fvals >= delta_f
            escaped[idx[esc]] = True
            active[idx[esc | (fvals <= floor)]] = False
        rows.append(StabilityRow(float(a), int(escaped.sum()), n_trials, floor))
    return rows


def monotone_in_a(rows: list[StabilityRow]) -> float:
    """Spearman rank correlation between learning rate and escape frequency."""
    a = [r.a for r in rows]
    p = [r.frequency for r in rows]
    if len(set(p)) == 1:
        return 0.0
    return float(stats.spearmanr(a, p).statistic)


def conditional_decay(cf: QuadraticCost, theta, a: float, n_samples: int, rng) -> tuple[float, float]:
    """Monte-Carlo mean and standard error of f(theta_next) for one noisy GD step."""
    theta = np.asarray(theta, dtype=float)
    g = theta @ cf.a + cf.noise.sigma2 * rng.standard_normal((n_samples, cf.d))
    nxt = theta - a * g
    vals = 0.5 * np.einsum("ij,jk,ik->i", nxt, cf.a, nxt)
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(n_samples))
