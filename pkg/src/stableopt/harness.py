"""Configuration-driven benchmark runner.

Experiments are described by a flat ``key = value`` text format; the full
key table lives in the README and every key maps onto an
:class:`ExperimentConfig` field.  A master seed pins the whole pipeline:
per-repetition initialization, per-algorithm observation noise, and
algorithm-internal randomness all derive from it through stable,
name-keyed streams, so adding an algorithm to a config never perturbs the
draws of the others and identical configs reproduce output files byte for
byte.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import optimizers, testbed
from .gp import ObservationSet, fit_hyperparameters
from .kernels import KernelSpec
from .optimizers import (
    ALGORITHMS,
    BetaSchedule,
    REPORTING_RULES,
    RunRecord,
    run,
)
from .robust import (
    DistanceSpec,
    FiniteDomain,
    L2,
    PerturbationSet,
    build_neighborhoods,
    group_reduction,
    parameter_reduction,
)
from .testbed import (
    ObjectiveTable,
    robust_table,
    sample_rkhs_function,
    valley_instance,
)

OBJECTIVES = (
    "poly",
    "rkhs-sample",
    "valley",
    "running-1d",
    "group-synthetic",
    "parameter-synthetic",
)

THREADS_ENV_VAR = "STABLEOPT_THREADS"

# Sub-stream tags for the master-seed fan-out.
_INIT_TAG = 1
_NOISE_TAG = 2
_OBJECTIVE_TAG = 3
_PRESAMPLE_TAG = 4
_ALGO_TAG = 5

# Stable per-algorithm identifiers; never renumber.
_ALGO_IDS = {name: i for i, name in enumerate(ALGORITHMS)}


def _stream(*entropy: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy))


def _stream_seed(*entropy: int) -> int:
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved experiment description; see module docstring."""

    objective: str = "poly"
    grid_bounds: tuple[tuple[float, float], ...] = testbed.POLY_BOUNDS
    grid_shape: tuple[int, ...] = (50, 50)
    distance: DistanceSpec = DistanceSpec(L2)
    epsilon: float = 0.5
    kernel: KernelSpec = KernelSpec.se((1.0, 1.0))
    kernel_fit: bool = False
    fit_budget: int = 400
    presample_count: int = 500
    presample_floor: float | None = None
    beta: BetaSchedule = BetaSchedule()
    noise_sigma: float = 0.1
    rounds: int = 100
    repetitions: int = 20
    init_count: int = 10
    seed: int = 0
    algorithms: tuple[str, ...] = ALGORITHMS
    reporting: str = optimizers.PER_ROUND_LCB
    rkhs_norm_bound: float = 2.0
    rkhs_centers: int = 30
    valley_eta: float = 0.4
    valley_width: float = 0.1
    valley_center: tuple[float, ...] = (0.5, 0.5)
    group_count: int = 4
    theta_bounds: tuple[tuple[float, float], ...] = ((0.0, 1.0),)
    theta_shape: tuple[int, ...] = (5,)

    def __post_init__(self) -> None:
        if self.objective not in OBJECTIVES:
            raise ValueError(f"unknown objective {self.objective!r}")
        if self.beta.noise_std != self.noise_sigma:
            # the schedule's noise scale always tracks the experiment noise
            object.__setattr__(
                self, "beta", replace(self.beta, noise_std=self.noise_sigma)
            )
        if self.rounds < 1 or self.repetitions < 1:
            raise ValueError("rounds and repetitions must be at least 1")
        if self.init_count < 0:
            raise ValueError("init_count must be non-negative")
        if self.seed < 0:
            raise ValueError("master seed must be non-negative")
        if not (self.noise_sigma > 0.0):
            raise ValueError("noise_sigma must be positive")
        if self.reporting not in REPORTING_RULES:
            raise ValueError(f"unknown reporting rule {self.reporting!r}")
        for name in self.algorithms:
            if name not in ALGORITHMS:
                raise ValueError(f"unknown algorithm {name!r}")
        if len(self.algorithms) != len(set(self.algorithms)):
            raise ValueError("duplicate algorithm in config")

    def to_text(self) -> str:
        """Canonical flat-file rendering; parse -> render is a fixed point."""
        pairs: list[tuple[str, str]] = [
            ("objective", self.objective),
            ("grid.bounds", _render_bounds(self.grid_bounds)),
            ("grid.shape", ",".join(str(n) for n in self.grid_shape)),
        ]
        pairs.extend(sorted(self.distance.to_config().items()))
        pairs.append(("epsilon", repr(self.epsilon)))
        pairs.extend(sorted(self.kernel.to_config().items()))
        pairs.append(("kernel.fit", "true" if self.kernel_fit else "false"))
        pairs.append(("kernel.fit_budget", str(self.fit_budget)))
        pairs.append(("presample.count", str(self.presample_count)))
        if self.presample_floor is not None:
            pairs.append(("presample.floor", repr(self.presample_floor)))
        pairs.append(("beta.kind", self.beta.kind))
        if self.beta.kind == "constant":
            pairs.append(("beta.root", repr(self.beta.const_root)))
        else:
            pairs.append(("beta.rkhs_bound", repr(self.beta.rkhs_bound)))
            pairs.append(("beta.failure_prob", repr(self.beta.failure_prob)))
            if self.beta.gamma_override is not None:
                pairs.append(("beta.gamma_override", repr(self.beta.gamma_override)))
        pairs.extend(
            [
                ("noise_sigma", repr(self.noise_sigma)),
                ("rounds", str(self.rounds)),
                ("repetitions", str(self.repetitions)),
                ("init_count", str(self.init_count)),
                ("seed", str(self.seed)),
                ("algorithms", ",".join(self.algorithms)),
                ("reporting", self.reporting),
            ]
        )
        if self.objective in ("rkhs-sample", "group-synthetic", "parameter-synthetic"):
            pairs.append(("rkhs.norm_bound", repr(self.rkhs_norm_bound)))
            pairs.append(("rkhs.centers", str(self.rkhs_centers)))
        if self.objective == "valley":
            pairs.append(("valley.eta", repr(self.valley_eta)))
            pairs.append(("valley.width", repr(self.valley_width)))
            pairs.append(
                ("valley.center", ",".join(repr(c) for c in self.valley_center))
            )
        if self.objective == "group-synthetic":
            pairs.append(("group.count", str(self.group_count)))
        if self.objective == "parameter-synthetic":
            pairs.append(("theta.bounds", _render_bounds(self.theta_bounds)))
            pairs.append(("theta.shape", ",".join(str(n) for n in self.theta_shape)))
        return "".join(f"{k} = {v}\n" for k, v in pairs)


def _render_bounds(bounds) -> str:
    return ",".join(f"{repr(lo)}:{repr(hi)}" for lo, hi in bounds)


def _parse_bounds(text: str) -> tuple[tuple[float, float], ...]:
    out = []
    for tok in text.split(","):
        lo, _, hi = tok.partition(":")
        out.append((float(lo), float(hi)))
    return tuple(out)


_SCALAR_KEYS = {
    "objective",
    "grid.bounds",
    "grid.shape",
    "epsilon",
    "kernel.fit",
    "kernel.fit_budget",
    "presample.count",
    "presample.floor",
    "beta.kind",
    "beta.root",
    "beta.rkhs_bound",
    "beta.failure_prob",
    "beta.gamma_override",
    "noise_sigma",
    "rounds",
    "repetitions",
    "init_count",
    "seed",
    "algorithms",
    "reporting",
    "rkhs.norm_bound",
    "rkhs.centers",
    "valley.eta",
    "valley.width",
    "valley.center",
    "group.count",
    "theta.bounds",
    "theta.shape",
}
_PREFIX_KEYS = ("kernel.", "distance.")


def parse_config_text(text: str) -> ExperimentConfig:
    """Parse the flat ``key = value`` format (``#`` starts a comment)."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = key.strip(), value.strip()
        if key in raw:
            raise ValueError(f"line {lineno}: duplicate key {key!r}")
        if key not in _SCALAR_KEYS and not key.startswith(_PREFIX_KEYS):
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        raw[key] = value

    kwargs: dict = {}
    if "objective" in raw:
        kwargs["objective"] = raw["objective"]
    if "grid.bounds" in raw:
        kwargs["grid_bounds"] = _parse_bounds(raw["grid.bounds"])
    if "grid.shape" in raw:
        kwargs["grid_shape"] = tuple(int(t) for t in raw["grid.shape"].split(","))
    if "distance.kind" in raw:
        kwargs["distance"] = DistanceSpec.from_config(raw)
    if "epsilon" in raw:
        kwargs["epsilon"] = float(raw["epsilon"])
    if "kernel.family" in raw:
        kwargs["kernel"] = KernelSpec.from_config(raw)
    if "kernel.fit" in raw:
        kwargs["kernel_fit"] = _parse_bool(raw["kernel.fit"])
    if "kernel.fit_budget" in raw:
        kwargs["fit_budget"] = int(raw["kernel.fit_budget"])
    if "presample.count" in raw:
        kwargs["presample_count"] = int(raw["presample.count"])
    if "presample.floor" in raw:
        kwargs["presample_floor"] = float(raw["presample.floor"])
    if "beta.kind" in raw:
        kind = raw["beta.kind"].strip()
        kwargs["beta"] = BetaSchedule(
            kind=kind,
            const_root=float(raw.get("beta.root", "2.0")),
            rkhs_bound=float(raw.get("beta.rkhs_bound", "1.0")),
            noise_std=float(raw.get("noise_sigma", "0.1")),
            failure_prob=float(raw.get("beta.failure_prob", "0.1")),
            gamma_override=(
                float(raw["beta.gamma_override"])
                if "beta.gamma_override" in raw
                else None
            ),
        )
    if "noise_sigma" in raw:
        kwargs["noise_sigma"] = float(raw["noise_sigma"])
    if "rounds" in raw:
        kwargs["rounds"] = int(raw["rounds"])
    if "repetitions" in raw:
        kwargs["repetitions"] = int(raw["repetitions"])
    if "init_count" in raw:
        kwargs["init_count"] = int(raw["init_count"])
    if "seed" in raw:
        kwargs["seed"] = int(raw["seed"])
    if "algorithms" in raw:
        kwargs["algorithms"] = tuple(
            tok.strip() for tok in raw["algorithms"].split(",") if tok.strip()
        )
    if "reporting" in raw:
        kwargs["reporting"] = raw["reporting"].strip()
    if "rkhs.norm_bound" in raw:
        kwargs["rkhs_norm_bound"] = float(raw["rkhs.norm_bound"])
    if "rkhs.centers" in raw:
        kwargs["rkhs_centers"] = int(raw["rkhs.centers"])
    if "valley.eta" in raw:
        kwargs["valley_eta"] = float(raw["valley.eta"])
    if "valley.width" in raw:
        kwargs["valley_width"] = float(raw["valley.width"])
    if "valley.center" in raw:
        kwargs["valley_center"] = tuple(
            float(t) for t in raw["valley.center"].split(",")
        )
    if "group.count" in raw:
        kwargs["group_count"] = int(raw["group.count"])
    if "theta.bounds" in raw:
        kwargs["theta_bounds"] = _parse_bounds(raw["theta.bounds"])
    if "theta.shape" in raw:
        kwargs["theta_shape"] = tuple(int(t) for t in raw["theta.shape"].split(","))

    return ExperimentConfig(**kwargs)


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def load_config(path) -> ExperimentConfig:
    return parse_config_text(Path(path).read_text())


@dataclass(frozen=True)
class Problem:
    """Everything an experiment needs: domain, neighborhoods, truth, kernel."""

    domain: FiniteDomain
    pset: PerturbationSet
    table: ObjectiveTable
    kernel: KernelSpec


def build_problem(config: ExperimentConfig) -> Problem:
    """Assemble the objective, perturbation set, and (possibly fit) kernel."""
    objective = config.objective
    if objective == "parameter-synthetic":
        domain_x = FiniteDomain.grid(config.grid_bounds, config.grid_shape)
        domain_theta = FiniteDomain.grid(config.theta_bounds, config.theta_shape)
        pset = parameter_reduction(domain_x, domain_theta)
        domain = pset.domain
        f = _rkhs_values(config, domain)
        table = robust_table(domain, f, pset)
    elif objective == "group-synthetic":
        base = FiniteDomain.grid(config.grid_bounds, config.grid_shape)
        labels = _contiguous_labels(len(base), config.group_count)
        domain = FiniteDomain(base.points, labels)
        pset = group_reduction(domain)
        f = _rkhs_values(config, domain)
        table = robust_table(domain, f, pset)
    else:
        domain = FiniteDomain.grid(config.grid_bounds, config.grid_shape)
        pset = build_neighborhoods(domain, config.distance, config.epsilon)
        if objective == "poly":
            table = robust_table(domain, testbed.poly_values, pset)
        elif objective == "running-1d":
            table = robust_table(domain, testbed.two_peaks_values, pset)
        elif objective == "valley":
            table = valley_instance(
                domain,
                config.valley_eta,
                config.valley_width,
                config.valley_center,
                pset,
            )
        else:  # rkhs-sample
            f = _rkhs_values(config, domain)
            table = robust_table(domain, f, pset)
    kernel = _resolve_kernel(config, table)
    return Problem(domain, pset, table, kernel)


def _contiguous_labels(n: int, groups: int) -> np.ndarray:
    if not 1 <= groups <= n:
        raise ValueError("group count must lie in [1, n]")
    return np.minimum(np.arange(n) * groups // n, groups - 1)


def _rkhs_values(config: ExperimentConfig, domain: FiniteDomain):
    sample = sample_rkhs_function(
        config.kernel,
        domain,
        config.rkhs_norm_bound,
        config.rkhs_centers,
        seed=_stream_seed(config.seed, _OBJECTIVE_TAG),
    )
    return sample.evaluate(domain.points)


def _resolve_kernel(config: ExperimentConfig, table: ObjectiveTable) -> KernelSpec:
    if not config.kernel_fit:
        return config.kernel
    rng = _stream(config.seed, _PRESAMPLE_TAG)
    eligible = np.arange(len(table.domain))
    if config.presample_floor is not None:
        eligible = np.nonzero(table.values > config.presample_floor)[0]
        if eligible.size == 0:
            raise ValueError("presample floor excludes every domain point")
    count = min(config.presample_count, eligible.size)
    idx = rng.choice(eligible, size=count, replace=False)
    noisy = table.values[idx] + config.noise_sigma * rng.standard_normal(count)
    obs = ObservationSet(
        table.domain.points[idx], noisy, config.noise_sigma**2
    )
    return fit_hyperparameters(
        config.kernel,
        obs,
        config.fit_budget,
        seed=_stream_seed(config.seed, _PRESAMPLE_TAG, 1),
    )


@dataclass
class ResultSet:
    """Per-round regret of the reported point for every (algorithm, rep)."""

    config: ExperimentConfig
    algorithms: tuple[str, ...]
    regrets: np.ndarray  # (n_algorithms, repetitions, rounds)

    def __post_init__(self) -> None:
        expected = (
            len(self.algorithms),
            self.config.repetitions,
            self.config.rounds,
        )
        if self.regrets.shape != expected:
            raise ValueError(f"regrets shape {self.regrets.shape} != {expected}")
        if np.any(self.regrets < 0.0):
            raise ValueError("negative regret: ground-truth table is inconsistent")

    def mean_curve(self, algorithm: str) -> np.ndarray:
        return self.regrets[self.algorithms.index(algorithm)].mean(axis=0)

    def median_curve(self, algorithm: str) -> np.ndarray:
        return np.median(self.regrets[self.algorithms.index(algorithm)], axis=0)

    def summary_rows(self) -> list[tuple[int, str, float, float, float, float]]:
        rows = []
        for t in range(self.config.rounds):
            for a, name in enumerate(self.algorithms):
                col = self.regrets[a, :, t]
                rows.append(
                    (
                        t + 1,
                        name,
                        float(np.mean(col)),
                        float(np.median(col)),
                        float(np.quantile(col, 0.25)),
                        float(np.quantile(col, 0.75)),
                    )
                )
        return rows


def _shared_init(
    config: ExperimentConfig, table: ObjectiveTable, rep: int
) -> list[tuple[int, float]]:
    rng = _stream(config.seed, _INIT_TAG, rep)
    if config.init_count == 0:
        return []
    idx = rng.choice(len(table.domain), size=config.init_count, replace=False)
    noise = config.noise_sigma * rng.standard_normal(config.init_count)
    return [(int(i), float(table.values[i] + z)) for i, z in zip(idx, noise)]


def _noisy_oracle(config: ExperimentConfig, table: ObjectiveTable, rep: int, algo: str):
    rng = _stream(config.seed, _NOISE_TAG, rep, _ALGO_IDS[algo])

    def oracle(i: int) -> float:
        return float(table.values[i] + config.noise_sigma * rng.standard_normal())

    return oracle


def run_single(
    problem: Problem,
    config: ExperimentConfig,
    algorithm: str,
    rep: int,
    keep_fields: bool = False,
) -> RunRecord:
    """One (algorithm, repetition) run with the harness seed fan-out."""
    init = _shared_init(config, problem.table, rep)
    return run(
        algorithm,
        _noisy_oracle(config, problem.table, rep, algorithm),
        problem.pset,
        problem.kernel,
        config.beta,
        config.rounds,
        config.noise_sigma**2,
        init=init,
        seed=_stream_seed(config.seed, _ALGO_TAG, rep, _ALGO_IDS[algorithm]),
        true_values=problem.table.values,
        reporting_rule=config.reporting,
        keep_fields=keep_fields,
    )


def _worker_count(repetitions: int) -> int:
    env = os.environ.get(THREADS_ENV_VAR)
    if env:
        return max(1, int(env))
    return max(1, min(repetitions, os.cpu_count() or 1))


def run_experiment(config: ExperimentConfig) -> ResultSet:
    """Execute every (algorithm, repetition) run and collect regret curves.

    Repetitions run concurrently (``STABLEOPT_THREADS`` overrides the pool
    size) but each lands in its own slot, so results are independent of
    scheduling.  Within a repetition all algorithms share the same initial
    observations.
    """
    problem = build_problem(config)
    n_algos = len(config.algorithms)
    regrets = np.zeros((n_algos, config.repetitions, config.rounds))

    def one_rep(rep: int) -> np.ndarray:
        block = np.zeros((n_algos, config.rounds))
        for a, name in enumerate(config.algorithms):
            try:
                record = run_single(problem, config, name, rep)
            except Exception as exc:
                # fail fast, but keep the failing coordinates visible
                raise RuntimeError(
                    f"repetition {rep}, algorithm {name!r} failed: {exc}"
                ) from exc
            block[a] = record.regrets
        return block

    workers = _worker_count(config.repetitions)
    if workers == 1:
        for rep in range(config.repetitions):
            regrets[:, rep, :] = one_rep(rep)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for rep, block in enumerate(pool.map(one_rep, range(config.repetitions))):
                regrets[:, rep, :] = block
    return ResultSet(config, config.algorithms, regrets)


RESULTS_HEADER = "algorithm,repetition,round,regret"
SUMMARY_HEADER = "round,algorithm,mean,median,q25,q75"


def emit_outputs(results: ResultSet, out_dir) -> dict[str, Path]:
    """Write results.csv, summary.csv, a config echo, and the regret plot.

    The CSV column layout is part of the interface: ``results.csv`` is long
    format with the header above, rows ordered by (algorithm list order,
    repetition, round); floats use shortest round-trip formatting.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}

    results_path = out / "results.csv"
    lines = [RESULTS_HEADER]
    for a, name in enumerate(results.algorithms):
        for rep in range(results.config.repetitions):
            for t in range(results.config.rounds):
                lines.append(
                    f"{name},{rep},{t + 1},{float(results.regrets[a, rep, t])!r}"
                )
    results_path.write_text("\n".join(lines) + "\n")
    paths["results"] = results_path

    summary_path = out / "summary.csv"
    lines = [SUMMARY_HEADER]
    for rnd, name, mean, median, q25, q75 in results.summary_rows():
        lines.append(f"{rnd},{name},{mean!r},{median!r},{q25!r},{q75!r}")
    summary_path.write_text("\n".join(lines) + "\n")
    paths["summary"] = summary_path

    config_path = out / "config.cfg"
    config_path.write_text(results.config.to_text())
    paths["config"] = config_path

    paths["plot"] = _write_plot(results, out / "regret_curves.svg")
    return paths


def _write_plot(results: ResultSet, path: Path) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with plt.rc_context({"svg.hashsalt": "stableopt"}):
        fig, ax = plt.subplots(figsize=(7.0, 4.5))
        rounds = np.arange(1, results.config.rounds + 1)
        for name in results.algorithms:
            (line,) = ax.plot(rounds, results.mean_curve(name), label=name)
            ax.plot(
                rounds,
                results.median_curve(name),
                linestyle="--",
                alpha=0.6,
                color=line.get_color(),
            )
        ax.set_xlabel("round")
        ax.set_ylabel("regret of reported point")
        ax.set_title(f"{results.config.objective}: mean (solid) / median (dashed)")
        ax.legend()
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path


class TraceCheckError(RuntimeError):
    """The trace's final selection missed the known worst-case optimum."""


def trace_run(config: ExperimentConfig, out_dir) -> dict[str, Path]:
    """Single-run trace: per-round grids of mean/sigma/lcb/ucb plus choices.

    Requires a single algorithm and one repetition.  On the running-1d
    objective the final round's candidate must coincide with the known
    worst-case optimum, otherwise :class:`TraceCheckError` is raised.
    """
    if len(config.algorithms) != 1 or config.repetitions != 1:
        raise ValueError("trace mode needs exactly one algorithm and one repetition")
    problem = build_problem(config)
    record = run_single(problem, config, config.algorithms[0], rep=0, keep_fields=True)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}
    dim = problem.domain.dimension
    coord_cols = ",".join(f"x{d}" for d in range(dim))
    for t, fld in enumerate(record.fields, start=1):
        lines = [f"index,{coord_cols},mean,sigma,lcb,ucb"]
        for i, point in enumerate(problem.domain.points):
            coords = ",".join(repr(float(c)) for c in point)
            lines.append(
                f"{i},{coords},{float(fld.mean[i])!r},{float(fld.sigma[i])!r},"
                f"{float(fld.lower[i])!r},{float(fld.upper[i])!r}"
            )
        round_path = out / f"trace_round_{t:03d}.csv"
        round_path.write_text("\n".join(lines) + "\n")
        paths[f"round_{t}"] = round_path

    lines = ["round,candidate,delta_target,sampled,observation,score,reported"]
    for t in range(len(record)):
        lines.append(
            f"{t + 1},{record.candidates[t]},{record.delta_targets[t]},"
            f"{record.sampled[t]},{record.observations[t]!r},"
            f"{record.scores[t]!r},{record.reported[t]}"
        )
    selections_path = out / "selections.csv"
    selections_path.write_text("\n".join(lines) + "\n")
    paths["selections"] = selections_path

    if config.objective == "running-1d" and config.algorithms[0] == optimizers.STABLEOPT:
        expected = problem.table.robust_optimum_index
        final_candidate = record.candidates[-1]
        if final_candidate != expected:
            raise TraceCheckError(
                f"final candidate {final_candidate} != worst-case optimum {expected}"
            )
    return paths
