"""Noisy GD, random coordinate descent and SPSA with trace recording."""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

GD, RCD, SPSA = "GD", "RCD", "SPSA"
METHODS = (GD, RCD, SPSA)
TRACE_COLUMNS = ("n", "partial_evals", "cost_noisy", "cost_exact", "metric", "i_n", "L", "L_avg", "L_max")
SUMMARY_COLUMNS = (
    "partial_evals",
    "metric_mean",
    "metric_min",
    "metric_max",
    "cost_mean",
    "cost_min",
    "cost_max",
    "n_trials",
)
RATIO_COLUMNS = tuple(f"{r}_{s}" for r in ("ratio_avg", "ratio_max") for s in ("mean", "min", "max"))


@dataclass(frozen=True)
class OptimizerConfig:
    method: str
    a: float
    max_partial_evals: int
    seed: int = 0
    record_every: int = 1  # partial evaluations between recorded rows
    target_cost: float | None = None
    target_metric: float | None = None
    divergence_threshold: float = 1e6
    diagnostics_every: int = 1
    # SPSA schedule a_k = a / (k + 1 + A)**alpha, c_k = c / (k + 1)**gamma
    c: float = 0.2
    A: float = 0.0
    alpha: float = 0.602
    gamma: float = 0.101
    calibrate: bool = False
    calibration_steps: int = 25
    target_magnitude: float = 2 * math.pi / 10

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if not self.a >= 0 or not math.isfinite(self.a):
            raise ValueError(f"learning rate must be finite and >= 0, got {self.a}")
        if self.max_partial_evals <= 0:
            raise ValueError("max_partial_evals must be > 0")
        if self.record_every < 1 or self.diagnostics_every < 1:
            raise ValueError("record_every and diagnostics_every must be >= 1")
        if self.method == SPSA and not self.c > 0:
            raise ValueError("SPSA perturbation c must be > 0")

    def learning_rate(self, k: int) -> float:
        if self.method != SPSA:
            return self.a
        return self.a / (k + 1 + self.A) ** self.alpha

    def perturbation(self, k: int) -> float:
        return self.c / (k + 1) ** self.gamma


@dataclass(frozen=True)
class Metric:
    """Maps exact cost to the reported progress metric.

    ``energy_ratio`` is (E - shift) / (E_ground - shift).  ``fidelity`` is
    1 - cost, unless ``target`` is given, in which case the state's overlap
    with the target span is reported (an energy-trained run tracked by fidelity).
    """

    name: str
    ground: float = 0.0
    shift: float = 0.0
    target: object = None

    def __post_init__(self):
        if self.name not in ("energy_ratio", "fidelity", "cost"):
            raise ValueError(f"unknown metric {self.name!r}")
        if self.name == "energy_ratio" and self.ground == self.shift:
            raise ValueError("energy ratio needs a ground energy different from the shift")

    def evaluate(self, cf, theta, cost: float) -> float:
        if self.target is not None:
            return float(self.target.fidelities(cf.state(theta).amplitudes)[0])
        return self(cost)

    def __call__(self, cost: float) -> float:
        if self.name == "energy_ratio":
            return (cost - self.shift) / (self.ground - self.shift)
        if self.name == "fidelity":
            return 1.0 - cost
        return cost


@dataclass
class Trace:
    method: str
    metric_name: str = "cost"
    rows: list[tuple] = field(default_factory=list)
    checkpoints: list[tuple[int, np.ndarray]] = field(default_factory=list)
    diverged: bool = False

    def column(self, name: str) -> np.ndarray:
        k = TRACE_COLUMNS.index(name)
        return np.array([np.nan if r[k] is None else r[k] for r in self.rows], dtype=float)

    def evals_to_reach(self, level: float, column: str = "metric") -> float:
        """First partial-evaluation count at which ``column`` reaches ``level``; inf if never."""
        values = self.column(column)
        hit = np.flatnonzero(values >= level)
        return float(self.column("partial_evals")[hit[0]]) if hit.size else math.inf

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_COLUMNS)
            for r in self.rows:
                w.writerow(["" if v is None else repr(v) for v in r])

    @classmethod
    def read_csv(cls, path, method: str = "", metric: str = "cost") -> "Trace":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = tuple(next(reader))
            if header != TRACE_COLUMNS:
                raise ValueError(f"{path}: unexpected trace header {header}")
            rows = []
            for rec in reader:
                vals = [None if v == "" else (int(v) if k in (0, 1, 5) else float(v)) for k, v in enumerate(rec)]
                rows.append(tuple(vals))
        return cls(method, metric, rows)

    def write_checkpoints(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            for n, theta in self.checkpoints:
                w.writerow([n] + [repr(float(t)) for t in theta])


def read_checkpoints(path) -> list[tuple[int, np.ndarray]]:
    out = []
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if rec:
                out.append((int(rec[0]), np.array([float(v) for v in rec[1:]])))
    return out


class DivergenceError(RuntimeError):
    def __init__(self, message: str, trace: Trace):
        super().__init__(message)
        self.trace = trace


class _Recorder:
    def __init__(self, cf, cfg: OptimizerConfig, metric: Metric | None, diagnostics, report_rng):
        self.cfg = cfg
        self.metric = metric or Metric("cost")
        self.diagnostics = diagnostics
        # reporting draws come from their own stream so recording never perturbs training
        self.report = cf.clone(report_rng)
        self.exact = cf.exact_cost
        self.trace = Trace(cfg.method, self.metric.name)

    def record(self, n: int, partial_evals: int, theta: np.ndarray, i_n: int) -> bool:
        """Append a row; returns True when a stopping target is met."""
        noisy = self.report.cost(theta)
        exact = self.exact(theta)
        if not (math.isfinite(noisy) and math.isfinite(exact)) or max(abs(noisy), abs(exact)) > self.cfg.divergence_threshold:
            self.trace.rows.append((n, partial_evals, noisy, exact, None, i_n, None, None, None))
            self.trace.diverged = True
            raise DivergenceError(f"cost {exact!r} diverged at iteration {n}", self.trace)
        lip = (None, None, None)
        if self.diagnostics is not None and len(self.trace.rows) % self.cfg.diagnostics_every == 0:
            rep = self.diagnostics(theta)
            lip = (rep.L, rep.L_avg, rep.L_max)
        m = self.metric.evaluate(self.report, theta, exact)
        self.trace.rows.append((n, partial_evals, noisy, exact, m, i_n) + lip)
        self.trace.checkpoints.append((n, theta.copy()))
        if self.cfg.target_cost is not None and exact <= self.cfg.target_cost:
            return True
        return self.cfg.target_metric is not None and m >= self.cfg.target_metric


def _rngs(seed: int):
    opt, report = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(opt), np.random.default_rng(report)


def _check_theta(theta, trace: Trace, n: int) -> None:
    if not np.all(np.isfinite(theta)):
        trace.diverged = True
        raise DivergenceError(f"non-finite parameters at iteration {n}", trace)


def _run(cf, theta0, cfg: OptimizerConfig, step, per_iter: int, metric, diagnostics, setup=None) -> Trace:
    opt_rng, report_rng = _rngs(cfg.seed)
    rec = _Recorder(cf, cfg, metric, diagnostics, report_rng)
    theta = np.array(theta0, dtype=float)
    evals = 0
    if setup is not None:
        evals = setup(theta, opt_rng)
    if rec.record(0, evals, theta, -1):
        return rec.trace
    n = 0
    mark = (evals // cfg.record_every + 1) * cfg.record_every
    while evals + per_iter <= cfg.max_partial_evals:
        theta, i_n = step(theta, n, opt_rng)
        n += 1
        evals += per_iter
        _check_theta(theta, rec.trace, n)
        last = evals + per_iter > cfg.max_partial_evals
        if evals >= mark or last:
            mark = (evals // cfg.record_every + 1) * cfg.record_every
            if rec.record(n, evals, theta, i_n):
                break
    return rec.trace


def run_gd(cf, theta0, cfg: OptimizerConfig, metric: Metric | None = None, diagnostics=None) -> Trace:
    """theta <- theta - a * g(theta) with a noisy full gradient (d partials per step)."""
    if cfg.method != GD:
        raise ValueError("run_gd needs method GD")

    def step(theta, n, rng):
        return theta - cfg.a * cf.full_gradient(theta).values, -1

    return _run(cf, theta0, cfg, step, cf.d, metric, diagnostics)


def rcd_update(cf, theta, a: float, i: int) -> np.ndarray:
    """The RCD branch for coordinate ``i``: theta - a * g_i(theta) e_i."""
    out = np.array(theta, dtype=float)
    out[i] -= a * cf.partial_derivative(out, i)
    return out


def expected_rcd_update(cf, theta, a: float) -> np.ndarray:
    """Average of the d equally likely RCD branches."""
    return np.mean([rcd_update(cf, theta, a, i) for i in range(cf.d)], axis=0)


def run_rcd(cf, theta0, cfg: OptimizerConfig, metric: Metric | None = None, diagnostics=None) -> Trace:
    """Update one uniformly drawn coordinate per step with one noisy partial."""
    if cfg.method != RCD:
        raise ValueError("run_rcd needs method RCD")

    def step(theta, n, rng):
        i = int(rng.integers(cf.d))
        return rcd_update(cf, theta, cfg.a, i), i

    return _run(cf, theta0, cfg, step, 1, metric, diagnostics)


def calibrate_spsa(cf, theta, cfg: OptimizerConfig, rng) -> float:
    """Pick ``a`` so the first step has magnitude about ``cfg.target_magnitude``."""
    mags = []
    for _ in range(cfg.calibration_steps):
        delta = rng.choice(np.array([-1.0, 1.0]), size=cf.d)
        diff = cf.cost(theta + cfg.c * delta) - cf.cost(theta - cfg.c * delta)
        mags.append(abs(diff) / (2 * cfg.c))
    avg = float(np.mean(mags))
    if avg < 1e-12:
        return cfg.target_magnitude
    return cfg.target_magnitude * (cfg.A + 1) ** cfg.alpha / avg


def run_spsa(cf, theta0, cfg: OptimizerConfig, metric: Metric | None = None, diagnostics=None) -> Trace:
    """SPSA with decaying gain and perturbation; each step counts as one equivalent evaluation.

    With ``calibrate`` the gain is fitted first and every calibration sample is
    charged as one equivalent evaluation as well.
    """
    if cfg.method != SPSA:
        raise ValueError("run_spsa needs method SPSA")
    state = {"cfg": cfg}

    def setup(theta, rng):
        if not cfg.calibrate:
            return 0
        state["cfg"] = replace(cfg, a=calibrate_spsa(cf, theta, cfg, rng))
        return cfg.calibration_steps

    def step(theta, n, rng):
        c = state["cfg"]
        g = cf.spsa_estimate(theta, c.perturbation(n), rng)
        return theta - c.learning_rate(n) * g.values, -1

    return _run(cf, theta0, cfg, step, 1, metric, diagnostics, setup)


RUNNERS: dict[str, Callable] = {GD: run_gd, RCD: run_rcd, SPSA: run_spsa}


def run(cf, theta0, cfg: OptimizerConfig, metric: Metric | None = None, diagnostics=None) -> Trace:
    return RUNNERS[cfg.method](cf, theta0, cfg, metric, diagnostics)


@dataclass
class TrialBatch:
    traces: list[Trace]
    summary: dict[str, np.ndarray]
    diverged: list[int]

    def write_summary(self, path) -> None:
        write_summary(self.summary, path)


def summarize(traces: list[Trace]) -> dict[str, np.ndarray]:
    """Mean and min/max band of metric and exact cost on the union partial-evals grid.

    Each trace is linearly interpolated and held at its last value beyond its end.
    """
    usable = [t for t in traces if t.rows and not t.diverged]
    if not usable:
        usable = [t for t in traces if t.rows]
    grid = np.unique(np.concatenate([t.column("partial_evals") for t in usable]))
    out: dict[str, np.ndarray] = {"partial_evals": grid}
    for col, key in (("metric", "metric"), ("cost_exact", "cost")):
        stack = np.stack([np.interp(grid, t.column("partial_evals"), t.column(col)) for t in usable])
        out[f"{key}_mean"] = stack.mean(axis=0)
        out[f"{key}_min"] = stack.min(axis=0)
        out[f"{key}_max"] = stack.max(axis=0)
    out["n_trials"] = np.full(grid.shape, len(usable))
    if all(np.isfinite(t.column("L")).any() for t in usable):
        for key, den in (("ratio_avg", "L_avg"), ("ratio_max", "L_max")):
            stack = []
            for t in usable:
                ok = np.isfinite(t.column("L"))
                ratio = t.column("L")[ok] / t.column(den)[ok]
                stack.append(np.interp(grid, t.column("partial_evals")[ok], ratio))
            stack = np.stack(stack)
            out[f"{key}_mean"] = stack.mean(axis=0)
            out[f"{key}_min"] = stack.min(axis=0)
            out[f"{key}_max"] = stack.max(axis=0)
    return out


def write_summary(summary: dict[str, np.ndarray], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        cols = SUMMARY_COLUMNS + tuple(c for c in RATIO_COLUMNS if c in summary)
        w.writerow(cols)
        for k in range(summary["partial_evals"].size):
            row = []
            for c in cols:
                v = summary[c][k]
                row.append(str(int(v)) if c in ("partial_evals", "n_trials") else repr(float(v)))
            w.writerow(row)


def read_summary(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        cols: dict[str, list[float]] = {c: [] for c in reader.fieldnames or ()}
        for rec in reader:
            for c, v in rec.items():
                cols[c].append(float(v))
    return {c: np.array(v) for c, v in cols.items()}


def trial_seeds(seed: int, n_trials: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(n_trials)


def run_trials(
    make_cf: Callable[[np.random.Generator], object],
    theta0: Callable[[int, np.random.Generator], np.ndarray],
    cfg: OptimizerConfig,
    n_trials: int,
    metric: Metric | None = None,
    diagnostics=None,
    workers: int = 1,
) -> TrialBatch:
    """Run independent seeded trials; divergent trials are kept and flagged.

    Trial ``k`` derives its noise, initialization and optimizer streams from
    child ``k`` of the base seed, so results do not depend on ``workers``.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    seeds = trial_seeds(cfg.seed, n_trials)

    def one(k: int) -> Trace:
        noise_ss, init_ss, opt_ss = seeds[k].spawn(3)
        cf = make_cf(np.random.default_rng(noise_ss))
        th0 = theta0(k, np.random.default_rng(init_ss))
        trial_cfg = replace(cfg, seed=int(opt_ss.generate_state(1)[0]))
        try:
            return run(cf, th0, trial_cfg, metric, diagnostics)
        except DivergenceError as err:
            return err.trace

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            traces = list(pool.map(one, range(n_trials)))
    else:
        traces = [one(k) for k in range(n_trials)]
    diverged = [k for k, t in enumerate(traces) if t.diverged]
    return TrialBatch(traces, summarize(traces), diverged)
