"""Experiment configs: strict TOML schema, problem builders and batch execution."""
from __future__ import annotations

import csv
import math
import os
import shutil
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import diagnostics as diag
from .ansatz import AlternatingEvolution, build_hea, build_qaoa_like_tfim, build_qubo_ansatz
from .estimator import CostFunction, NoiseModel, QuadraticCost
from .hamiltonians import FidelityTarget, build_heisenberg_pair, build_ising_control, build_tfim, build_x_mixer
from .optim import GD, METHODS, RCD, SPSA, Metric, OptimizerConfig, run_trials
from .quantum import StateVector, ground_space, init_basis_state, plus_state
from .qubo import brute_force_min, build_factoring_143, build_maxcut, build_tsp, qubo_to_ising

EXPERIMENTS = (
    "tfim-vqe",
    "hea-vqe",
    "ising-qaoa",
    "heisenberg-qaoa",
    "maxcut",
    "tsp",
    "factoring",
    "noise-hist",
    "stability",
    "spsa-compare",
)
OUTPUT_ENV = "VQOPT_OUTPUT_ROOT"
REQUIRED = object()

_TFIM = {"N": (int, REQUIRED), "layers": (int, REQUIRED), "J": (float, 1.0), "delta": (float, 1.5)}
SYSTEM_SCHEMA: dict[str, dict] = {
    "tfim-vqe": _TFIM,
    "noise-hist": _TFIM,
    "spsa-compare": _TFIM,
    "hea-vqe": _TFIM,
    "ising-qaoa": {
        "N": (int, REQUIRED),
        "p": (int, REQUIRED),
        "h1": (float, -4.0),
        "h2": (float, 4.0),
        "h_initial": (float, -2.0),
        "h_target": (float, 2.0),
    },
    "heisenberg-qaoa": {
        "N": (int, REQUIRED),
        "p": (int, REQUIRED),
        "J": (float, 1.0),
        "delta": (float, 0.5),
        "initial_bits": (str, ""),
    },
    "maxcut": {"edges": (list, [[0, 1], [0, 2], [0, 3], [1, 2], [2, 3]]), "layers": (int, REQUIRED)},
    "tsp": {
        "weights": (list, [[0, 48, 91], [48, 0, 63], [91, 63, 0]]),
        "penalty": (float, REQUIRED),
        "layers": (int, REQUIRED),
    },
    "factoring": {"p": (int, REQUIRED)},
    "stability": {},
}
NOISE_SCHEMA = {"model": (str, "exact"), "shots": (int, 0), "sigma1": (float, 0.0), "sigma2": (float, 0.0)}
RUN_SCHEMA = {
    "trials": (int, 1),
    "seed": (int, 0),
    "budget": (int, REQUIRED),
    "record_every": (int, 1),
    "init": (str, "fixed"),
    "init_seed": (int, 0),
    "init_low": (float, -math.pi),
    "init_high": (float, math.pi),
    "init_file": (str, ""),
    "diagnostics": (bool, False),
    "diagnostics_every": (int, 1),
    "workers": (int, 1),
    "divergence_threshold": (float, 1e6),
    "target_metric": (float, None),
    "shift_factor": (float, 0.0),
}
OPTIMIZER_SCHEMA = {
    "method": (str, REQUIRED),
    "a": (float, REQUIRED),
    "label": (str, ""),
    "c": (float, 0.2),
    "A": (float, 0.0),
    "alpha": (float, 0.602),
    "gamma": (float, 0.101),
    "calibrate": (bool, False),
    "calibration_steps": (int, 25),
    "budget": (int, None),
}
HIST_SCHEMA = {
    "checkpoint": (str, REQUIRED),
    "samples": (int, 10000),
    "shots": (list, [1000]),
    "directions": (list, []),
}
STABILITY_SCHEMA = {
    "curvatures": (list, REQUIRED),
    "sigma2": (float, REQUIRED),
    "delta_f": (float, REQUIRED),
    "theta0": (list, REQUIRED),
    "multipliers": (list, REQUIRED),
    "trials": (int, 200),
    "max_iters": (int, 2000),
}
TOP_KEYS = {"experiment", "output", "system", "noise", "run", "optimizer", "hist", "stability"}


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the offending field."""


def _coerce(path: str, value, kind):
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if not isinstance(value, kind):
        raise ConfigError(f"{path}: expected {kind.__name__}, got {value!r}")
    return value


def _section(name: str, raw, schema: dict) -> dict:
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{name}: expected a table")
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"{name}.{unknown[0]}: unknown key")
    out = {}
    for key, (kind, default) in schema.items():
        path = f"{name}.{key}"
        if key in raw:
            out[key] = _coerce(path, raw[key], kind)
        elif default is REQUIRED:
            raise ConfigError(f"{path}: required")
        else:
            out[key] = list(default) if isinstance(default, list) else default
    return out


@dataclass(frozen=True)
class OptimizerSpec:
    method: str
    a: float
    label: str
    c: float = 0.2
    A: float = 0.0
    alpha: float = 0.602
    gamma: float = 0.101
    calibrate: bool = False
    calibration_steps: int = 25
    budget: int | None = None


@dataclass
class ExperimentConfig:
    experiment: str
    output: str
    system: dict
    noise: dict
    run: dict
    optimizers: list[OptimizerSpec] = field(default_factory=list)
    hist: dict | None = None
    stability: dict | None = None
    source: Path | None = None

    def noise_model(self) -> NoiseModel:
        n = self.noise
        if n["model"] == "shots":
            return NoiseModel.with_shots(n["shots"])
        if n["model"] == "gaussian":
            return NoiseModel.gaussian(n["sigma1"], n["sigma2"])
        return NoiseModel.exact()

    def resolve(self, rel: str) -> Path:
        p = Path(rel)
        if not p.is_absolute() and self.source is not None:
            p = self.source.parent / p
        return p

    def optimizer_config(self, spec: OptimizerSpec) -> OptimizerConfig:
        r = self.run
        return OptimizerConfig(
            method=spec.method,
            a=spec.a,
            max_partial_evals=spec.budget or r["budget"],
            seed=r["seed"],
            record_every=r["record_every"],
            target_metric=r["target_metric"],
            divergence_threshold=r["divergence_threshold"],
            diagnostics_every=r["diagnostics_every"],
            c=spec.c,
            A=spec.A,
            alpha=spec.alpha,
            gamma=spec.gamma,
            calibrate=spec.calibrate,
            calibration_steps=spec.calibration_steps,
        )


def parse_config(data: dict, source: Path | None = None) -> ExperimentConfig:
    unknown = sorted(set(data) - TOP_KEYS)
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown key")
    exp = data.get("experiment")
    if exp not in EXPERIMENTS:
        raise ConfigError(f"experiment: must be one of {', '.join(EXPERIMENTS)}, got {exp!r}")
    output = data.get("output", exp)
    if not isinstance(output, str) or not output:
        raise ConfigError("output: expected a non-empty string")
    system = _section("system", data.get("system"), SYSTEM_SCHEMA[exp])
    noise = _section("noise", data.get("noise"), NOISE_SCHEMA)
    if noise["model"] not in ("exact", "gaussian", "shots"):
        raise ConfigError(f"noise.model: must be exact, gaussian or shots, got {noise['model']!r}")
    if noise["model"] == "shots" and noise["shots"] < 1:
        raise ConfigError("noise.shots: must be >= 1 for the shots model")
    if noise["sigma1"] < 0 or noise["sigma2"] < 0:
        raise ConfigError("noise.sigma1/sigma2: must be >= 0")

    needs_run = exp not in ("stability", "noise-hist")
    run_schema = dict(RUN_SCHEMA)
    if not needs_run:
        run_schema["budget"] = (int, 0)
    run = _section("run", data.get("run"), run_schema)
    if run["init"] not in ("fixed", "random", "file"):
        raise ConfigError(f"run.init: must be fixed, random or file, got {run['init']!r}")
    if run["init"] == "file" and not run["init_file"]:
        raise ConfigError("run.init_file: required when run.init = 'file'")
    for key in ("trials", "record_every", "workers", "diagnostics_every"):
        if run[key] < 1:
            raise ConfigError(f"run.{key}: must be >= 1")
    if needs_run and run["budget"] < 1:
        raise ConfigError("run.budget: must be >= 1")
    if not run["init_low"] < run["init_high"]:
        raise ConfigError("run.init_low: must be below run.init_high")

    raw_opts = data.get("optimizer", [])
    if not isinstance(raw_opts, list):
        raise ConfigError("optimizer: expected an array of tables ([[optimizer]])")
    optimizers = []
    for k, raw in enumerate(raw_opts):
        o = _section(f"optimizer[{k}]", raw, OPTIMIZER_SCHEMA)
        if o["method"] not in METHODS:
            raise ConfigError(f"optimizer[{k}].method: must be one of {', '.join(METHODS)}, got {o['method']!r}")
        if not o["a"] >= 0:
            raise ConfigError(f"optimizer[{k}].a: must be >= 0")
        if o["method"] == SPSA and not o["c"] > 0:
            raise ConfigError(f"optimizer[{k}].c: must be > 0")
        if o["budget"] is not None and o["budget"] < 1:
            raise ConfigError(f"optimizer[{k}].budget: must be >= 1")
        o["label"] = o["label"] or o["method"]
        optimizers.append(OptimizerSpec(**o))
    labels = [o.label for o in optimizers]
    if len(set(labels)) != len(labels):
        raise ConfigError("optimizer.label: labels must be unique")
    if needs_run and not optimizers:
        raise ConfigError("optimizer: at least one [[optimizer]] block is required")

    hist = _section("hist", data["hist"], HIST_SCHEMA) if exp == "noise-hist" else None
    if exp != "noise-hist" and "hist" in data:
        raise ConfigError("hist: only valid for experiment 'noise-hist'")
    if hist is not None:
        if hist["samples"] < 2:
            raise ConfigError("hist.samples: must be >= 2")
        if not hist["shots"] or not all(isinstance(m, int) and m >= 1 for m in hist["shots"]):
            raise ConfigError("hist.shots: expected a list of positive integers")
    stab = _section("stability", data.get("stability"), STABILITY_SCHEMA) if exp == "stability" else None
    if exp != "stability" and "stability" in data:
        raise ConfigError("stability: only valid for experiment 'stability'")
    if stab is not None:
        if len(stab["theta0"]) != len(stab["curvatures"]):
            raise ConfigError("stability.theta0: length must match stability.curvatures")
        if min(stab["curvatures"]) <= 0:
            raise ConfigError("stability.curvatures: must be positive")
        if len(stab["multipliers"]) < 2:
            raise ConfigError("stability.multipliers: need at least two grid points")

    cfg = ExperimentConfig(exp, output, system, noise, run, optimizers, hist, stab, source)
    _validate_system(cfg)
    return cfg


def _validate_system(cfg: ExperimentConfig) -> None:
    s = cfg.system
    if "N" in s and not 2 <= s["N"] <= 14:
        raise ConfigError(f"system.N: must be between 2 and 14, got {s['N']}")
    for key in ("layers", "p"):
        if key in s and s[key] < 1:
            raise ConfigError(f"system.{key}: must be >= 1")
    if cfg.experiment in ("ising-qaoa", "heisenberg-qaoa", "factoring") and cfg.noise["model"] == "shots":
        raise ConfigError("noise.model: shot noise is not available for alternating-evolution ansatzes")
    if cfg.experiment == "heisenberg-qaoa" and s["initial_bits"]:
        bits = s["initial_bits"]
        if len(bits) != s["N"] or set(bits) - {"0", "1"}:
            raise ConfigError("system.initial_bits: expected a bitstring of length N")
    if cfg.experiment == "tsp":
        w = np.asarray(cfg.system["weights"], dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1] or np.any(w != w.T) or np.any(np.diag(w)):
            raise ConfigError("system.weights: expected a symmetric matrix with zero diagonal")
    if cfg.experiment == "maxcut":
        try:
            build_maxcut([tuple(e) for e in cfg.system["edges"]])
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"system.edges: {exc}") from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror})") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config(data, path)


def bundled_config_dir() -> Path:
    return Path(__file__).parent / "configs"


def bundled_data_dir() -> Path:
    return Path(__file__).parent / "data"


@dataclass
class Problem:
    """A cost oracle factory plus the reference quantities for its metric."""

    kernel: object
    ansatz: object
    initial: StateVector
    metric: Metric
    ground_energy: float | None = None

    @property
    def d(self) -> int:
        return self.ansatz.d

    def cost_function(self, noise: NoiseModel, rng: np.random.Generator | None = None) -> CostFunction:
        return CostFunction(self.kernel, self.ansatz, self.initial, noise, rng)


def _energy_problem(obs, ansatz, initial, shift_factor: float = 0.0, track_fidelity: bool = False) -> Problem:
    e0, basis = ground_space(obs)
    target = FidelityTarget(tuple(basis)) if track_fidelity else None
    if track_fidelity:
        metric = Metric("fidelity", target=target)
    else:
        metric = Metric("energy_ratio", ground=e0, shift=shift_factor * e0)
    return Problem(obs, ansatz, initial, metric, e0)


def build_problem(cfg: ExperimentConfig) -> Problem:
    s, exp = cfg.system, cfg.experiment
    if exp in ("tfim-vqe", "noise-hist", "spsa-compare"):
        obs = build_tfim(s["N"], s["J"], s["delta"])
        circ = build_qaoa_like_tfim(s["N"], s["layers"])
        return _energy_problem(obs, circ, init_basis_state(s["N"], "0" * s["N"]), track_fidelity=exp == "spsa-compare")
    if exp == "hea-vqe":
        obs = build_tfim(s["N"], s["J"], s["delta"])
        return _energy_problem(obs, build_hea(s["N"], s["layers"]), init_basis_state(s["N"], "0" * s["N"]))
    if exp == "ising-qaoa":
        n = s["N"]
        start = ground_space(build_ising_control(n, s["h_initial"]))[1]
        if len(start) != 1:
            raise ConfigError("system.h_initial: initial Hamiltonian has a degenerate ground space")
        evo = AlternatingEvolution(build_ising_control(n, s["h1"]), build_ising_control(n, s["h2"]), s["p"], start[0])
        target = FidelityTarget.ground_of(build_ising_control(n, s["h_target"]))
        return Problem(target, evo, evo.initial, Metric("fidelity"))
    if exp == "heisenberg-qaoa":
        n = s["N"]
        h1, h2 = build_heisenberg_pair(n, s["J"], s["delta"])
        bits = s["initial_bits"] or ("10" * n)[:n]
        evo = AlternatingEvolution(h1, h2, s["p"], init_basis_state(n, bits))
        return Problem(FidelityTarget.ground_of(h1 + h2), evo, evo.initial, Metric("fidelity"))
    if exp == "maxcut":
        q = build_maxcut([tuple(e) for e in s["edges"]])
        obs = qubo_to_ising(q)
        e0 = brute_force_min(q)[0]
        circ = build_qubo_ansatz(q.n, s["layers"])
        return Problem(obs, circ, plus_state(q.n), Metric("energy_ratio", ground=e0), e0)
    if exp == "tsp":
        q = build_tsp(s["weights"], s["penalty"])
        obs = qubo_to_ising(q)
        e0 = brute_force_min(q)[0]
        shift = cfg.run["shift_factor"] * e0
        circ = build_qubo_ansatz(q.n, s["layers"])
        return Problem(obs, circ, plus_state(q.n), Metric("energy_ratio", ground=e0, shift=shift), e0)
    if exp == "factoring":
        obs = build_factoring_143()
        evo = AlternatingEvolution(obs, build_x_mixer(obs.n_qubits), s["p"], plus_state(obs.n_qubits))
        e0 = ground_space(obs)[0]
        return Problem(obs, evo, evo.initial, Metric("energy_ratio", ground=e0), e0)
    raise ConfigError(f"experiment: {exp!r} has no optimization problem")


def read_theta_file(path, d: int) -> np.ndarray:
    """One parameter vector: whitespace or comma separated numbers, '#' comments allowed."""
    text = Path(path).read_text()
    vals = [float(tok) for line in text.splitlines() for tok in line.split("#", 1)[0].replace(",", " ").split()]
    if len(vals) != d:
        raise ConfigError(f"run.init_file: expected {d} values, found {len(vals)}")
    return np.array(vals)


def initializer(cfg: ExperimentConfig, d: int):
    r = cfg.run
    lo, hi = r["init_low"], r["init_high"]
    if r["init"] == "file":
        theta = read_theta_file(cfg.resolve(r["init_file"]), d)
        return lambda k, rng: theta.copy()
    if r["init"] == "fixed":
        theta = np.random.default_rng(r["init_seed"]).uniform(lo, hi, d)
        return lambda k, rng: theta.copy()
    return lambda k, rng: rng.uniform(lo, hi, d)


def diagnostics_callable(problem: Problem, h: float = 1e-3):
    exact = problem.cost_function(NoiseModel.exact())
    return lambda theta: diag.lipschitz_at(exact, theta, h, grad=exact.exact_gradient)


@dataclass
class RunResult:
    out_dir: Path
    batches: dict
    diverged: dict[str, list[int]]

    @property
    def any_diverged(self) -> bool:
        return any(self.diverged.values())


def output_dir(cfg: ExperimentConfig, root=None) -> Path:
    base = Path(root) if root is not None else Path(os.environ.get(OUTPUT_ENV, "runs"))
    return base / cfg.output


def _prepare(out: Path, cfg: ExperimentConfig) -> None:
    out.mkdir(parents=True, exist_ok=True)
    if cfg.source is not None and cfg.source.resolve() != (out / "config.toml").resolve():
        shutil.copyfile(cfg.source, out / "config.toml")


def run_experiment(cfg: ExperimentConfig, out: Path, workers: int | None = None) -> RunResult:
    """Run every optimizer block and write traces, checkpoints and summaries under ``out``."""
    problem = build_problem(cfg)
    noise = cfg.noise_model()
    _prepare(out, cfg)
    if hasattr(problem.ansatz, "to_text"):
        (out / "circuit.txt").write_text(problem.ansatz.to_text())
    theta0 = initializer(cfg, problem.d)
    diagnostics = diagnostics_callable(problem) if cfg.run["diagnostics"] else None

    batches, diverged = {}, {}
    for spec in cfg.optimizers:
        ocfg = cfg.optimizer_config(spec)
        batch = run_trials(
            lambda rng: problem.cost_function(noise, rng),
            theta0,
            ocfg,
            cfg.run["trials"],
            problem.metric,
            diagnostics,
            workers or cfg.run["workers"],
        )
        sub = out / spec.label
        sub.mkdir(exist_ok=True)
        for k, tr in enumerate(batch.traces):
            tr.to_csv(sub / f"trial_{k:02d}.csv")
            tr.write_checkpoints(sub / f"trial_{k:02d}_checkpoints.csv")
        batch.write_summary(sub / "summary.csv")
        batches[spec.label] = batch
        diverged[spec.label] = batch.diverged
    return RunResult(out, batches, diverged)


def run_stability(cfg: ExperimentConfig, out: Path) -> list[diag.StabilityRow]:
    """Escape-frequency table on a planted diagonal quadratic; writes stability.csv."""
    st = cfg.stability
    lam = np.asarray(st["curvatures"], dtype=float)
    sigma2 = st["sigma2"]
    cf = QuadraticCost(lam, NoiseModel.gaussian(0.0, sigma2))
    mu, L, d = float(lam.min()), float(lam.max()), lam.size
    bound = diag.lemma_bound(L, mu, sigma2, d, st["delta_f"])
    grid = [m * bound for m in st["multipliers"]]
    theta0 = np.asarray(st["theta0"], dtype=float)
    rows = diag.stability_experiment(
        cf, theta0, grid, st["trials"], st["delta_f"], st["max_iters"], np.random.default_rng(cfg.run["seed"])
    )
    _prepare(out, cfg)
    write_stability(rows, bound, cf.exact_cost(theta0) / st["delta_f"], out / "stability.csv")
    return rows


STABILITY_COLUMNS = ("a", "a_over_bound", "escapes", "trials", "frequency", "std_error", "floor", "f1_over_delta")


def write_stability(rows, bound: float, f1_ratio: float, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STABILITY_COLUMNS)
        for r in rows:
            w.writerow(
                [repr(r.a), repr(r.a / bound), r.escapes, r.trials, repr(r.frequency), repr(r.std_error), repr(r.floor), repr(f1_ratio)]
            )



BUNDLED_PREFIX = "bundled:"


def resolve_data(cfg: ExperimentConfig, ref: str) -> Path:
    if ref.startswith(BUNDLED_PREFIX):
        return bundled_data_dir() / ref[len(BUNDLED_PREFIX):]
    return cfg.resolve(ref)


NOISE_STATS_COLUMNS = ("shots", "direction", "exact", "mean", "std", "skewness", "excess_kurtosis")


@dataclass
class NoiseHistogram:
    theta: np.ndarray
    samples: dict[int, dict[int, np.ndarray]]  # shots -> direction -> draws
    stats: list[dict]


def noise_histogram(cfg: ExperimentConfig, rng: np.random.Generator | None = None) -> NoiseHistogram:
    """Repeated partial-derivative estimates at a stored checkpoint, per direction and shot count.

    ``noise.model = "exact"`` yields identical draws; otherwise every entry of
    ``hist.shots`` is sampled with the shot model.
    """
    from scipy import stats as st

    problem = build_problem(cfg)
    path = resolve_data(cfg, cfg.hist["checkpoint"])
    if not path.is_file():
        raise ConfigError(f"hist.checkpoint: no such file {path}")
    theta = read_theta_file(path, problem.d)
    dirs = cfg.hist["directions"] or list(range(problem.d))
    if not all(isinstance(i, int) and 0 <= i < problem.d for i in dirs):
        raise ConfigError(f"hist.directions: indices must lie in 0..{problem.d - 1}")
    exact_cf = problem.cost_function(NoiseModel.exact())
    exact = exact_cf.exact_partials(theta, dirs)
    rng = rng if rng is not None else np.random.default_rng(cfg.run["seed"])
    models = [(0, NoiseModel.exact())] if cfg.noise["model"] == "exact" else [(m, NoiseModel.with_shots(m)) for m in cfg.hist["shots"]]
    samples: dict[int, dict[int, np.ndarray]] = {}
    rows = []
    for m, model in models:
        cf = problem.cost_function(model, rng)
        samples[m] = {}
        for k, i in enumerate(dirs):
            draws = cf.sample_partials(theta, i, cfg.hist["samples"])
            samples[m][i] = draws
            constant = np.ptp(draws) == 0
            sd = 0.0 if constant else float(draws.std(ddof=1))
            rows.append(
                {
                    "shots": m,
                    "direction": i,
                    "exact": float(exact[k]),
                    "mean": float(draws[0]) if constant else float(draws.mean()),
                    "std": sd,
                    "skewness": float(st.skew(draws)) if sd > 0 else 0.0,
                    "excess_kurtosis": float(st.kurtosis(draws)) if sd > 0 else 0.0,
                }
            )
    return NoiseHistogram(theta, samples, rows)


def write_noise_histogram(h: NoiseHistogram, out: Path) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    written = []
    with open(out / "noise_stats.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(NOISE_STATS_COLUMNS)
        for r in h.stats:
            w.writerow([r["shots"], r["direction"]] + [repr(r[c]) for c in NOISE_STATS_COLUMNS[2:]])
    written.append(out / "noise_stats.csv")
    for m, per_dir in h.samples.items():
        path = out / f"samples_shots{m}.csv"
        dirs = sorted(per_dir)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"d{i}" for i in dirs])
            for row in np.column_stack([per_dir[i] for i in dirs]):
                w.writerow([repr(float(v)) for v in row])
        written.append(path)
    return written


DIAGNOSE_COLUMNS = ("label", "trial", "checkpoint", "L", "L_avg", "L_max", "ratio_avg", "ratio_max")


def _diagnose_oracle(trace_dir: Path):
    """Exact cost and gradient for the run stored in ``trace_dir``."""
    curv = trace_dir / "curvature.csv"
    if curv.is_file():
        a = np.loadtxt(curv, delimiter=",", ndmin=2)
        cf = QuadraticCost(a)
        return cf, cf.exact_gradient
    cfg_path = trace_dir / "config.toml"
    if not cfg_path.is_file():
        raise ConfigError(f"{trace_dir}: needs config.toml or curvature.csv to rebuild the cost")
    cfg = load_config(cfg_path)
    cf = build_problem(cfg).cost_function(NoiseModel.exact())
    return cf, cf.exact_gradient


def diagnose_directory(trace_dir, h: float = 1e-3, every: int = 1, stencil: bool = False) -> list[tuple]:
    """Lipschitz report for every stored checkpoint under ``trace_dir``; writes diagnostics.csv.

    Checkpoint files are ``<label>/trial_XX_checkpoints.csv`` or, for a flat
    layout, ``*_checkpoints.csv`` directly in ``trace_dir``.  By default the
    Hessian comes from exact-gradient differences; ``stencil`` switches to
    the cost-only four-point stencil.
    """
    from .optim import read_checkpoints

    trace_dir = Path(trace_dir)
    files = sorted(trace_dir.glob("*/*_checkpoints.csv")) + sorted(trace_dir.glob("*_checkpoints.csv"))
    if not files:
        raise ConfigError(f"{trace_dir}: no checkpoint files found")
    cf, grad = _diagnose_oracle(trace_dir)
    rows = []
    for path in files:
        label = path.parent.name if path.parent != trace_dir else ""
        trial = path.name[: -len("_checkpoints.csv")]
        for k, (n, theta) in enumerate(read_checkpoints(path)):
            if k % every:
                continue
            rep = diag.lipschitz_at(cf, theta, h, grad=None if stencil else grad)
            rows.append((label, trial, n, rep.L, rep.L_avg, rep.L_max, rep.ratio_avg, rep.ratio_max))
    with open(trace_dir / "diagnostics.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DIAGNOSE_COLUMNS)
        for r in rows:
            w.writerow(list(r[:3]) + [repr(float(v)) for v in r[3:]])
    return rows


__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "OptimizerSpec",
    "Problem",
    "RunResult",
    "build_problem",
    "load_config",
    "parse_config",
    "run_experiment",
    "run_stability",
    "output_dir",
    "noise_histogram",
    "write_noise_histogram",
    "diagnose_directory",
]
