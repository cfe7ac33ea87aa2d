"""Command-line interface: run experiments, trace runs, dump oracles, selfcheck."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import harness
from .harness import emit_outputs, load_config, run_experiment, trace_run


def _apply_profile(config, profile: str | None):
    if profile is None:
        return config
    if profile == "ci":
        return replace(
            config,
            grid_shape=tuple(min(n, 50) for n in config.grid_shape),
            repetitions=min(config.repetitions, 20),
        )
    if profile == "full":
        return replace(config, grid_shape=(100, 100), repetitions=100)
    raise ValueError(f"unknown profile {profile!r}")


def _cmd_run(args) -> int:
    config = _apply_profile(load_config(args.config), args.profile)
    results = run_experiment(config)
    paths = emit_outputs(results, args.out)
    for name in results.algorithms:
        final = results.mean_curve(name)[-1]
        print(f"{name}: final-round mean regret {final:.4f}")
    print(f"wrote {paths['results']}")
    return 0


def _cmd_trace(args) -> int:
    config = load_config(args.config)
    paths = trace_run(config, args.out)
    print(f"wrote {len(paths) - 1} round files and {paths['selections']}")
    return 0


def _cmd_oracle(args) -> int:
    config = load_config(args.config)
    problem = harness.build_problem(config)
    path = problem.table.to_csv(args.out)
    print(
        f"wrote {path} (worst-case optimum {problem.table.robust_optimum_value:.4f} "
        f"at index {problem.table.robust_optimum_index})"
    )
    return 0


def _selfcheck_steps():
    from . import gp, kernels, optimizers, robust

    rng = np.random.default_rng(12345)

    def kernel_matrices():
        spec = kernels.KernelSpec.se((0.4, 0.8))
        pts = rng.uniform(-1, 1, size=(40, 2))
        K = kernels.gram(spec, pts)
        assert np.array_equal(K, K.T), "gram not exactly symmetric"
        assert np.min(np.linalg.eigvalsh(K + 1e-10 * np.eye(40))) >= 0, "gram not PSD"

    def incremental_posterior():
        spec = kernels.KernelSpec.se(0.3)
        obs = gp.ObservationSet.empty(1, 0.01)
        post = gp.posterior(spec, obs)
        xs = rng.uniform(0, 1, size=(12, 1))
        for x in xs:
            post = gp.extend(post, x, float(np.sin(6 * x[0])))
        direct = gp.posterior(spec, post.observations)
        q = rng.uniform(0, 1, size=(25, 1))
        m1, v1 = gp.mean_var_batch(post, q)
        m2, v2 = gp.mean_var_batch(direct, q)
        assert np.max(np.abs(m1 - m2)) < 1e-8, "extend drifted from recompute"
        assert np.max(np.abs(v1 - v2)) < 1e-8, "extend variance drifted"

    def neighborhoods_brute_force():
        pts = rng.uniform(0, 1, size=(60, 2))
        domain = robust.FiniteDomain(pts)
        pset = robust.build_neighborhoods(domain, robust.DistanceSpec(robust.L2), 0.25)
        for i in range(60):
            dists = np.sqrt(np.sum((pts - pts[i]) ** 2, axis=1))
            expected = np.nonzero(dists <= 0.25)[0]
            assert np.array_equal(pset.neighborhood(i), expected), "neighborhood mismatch"

    def acquisition_enumeration():
        pts = rng.uniform(0, 1, size=(50, 1))
        domain = robust.FiniteDomain(pts)
        pset = robust.build_neighborhoods(domain, robust.DistanceSpec(robust.L2), 0.1)
        for _ in range(20):
            upper = rng.standard_normal(50)
            lower = upper - rng.uniform(0.1, 1.0, size=50)
            fld = optimizers.ConfidenceField(
                (upper + lower) / 2, (upper - lower) / 4, lower, upper, 4.0
            )
            x_idx, delta_idx = optimizers.stableopt_step(fld, pset)
            best, best_val = 0, -np.inf
            for i in range(50):
                val = min(upper[j] for j in pset.neighborhood(i))
                if val > best_val:
                    best, best_val = i, val
            assert x_idx == best, "stableopt argmax-min mismatch"
            nb = pset.neighborhood(best)
            assert delta_idx == min(nb, key=lambda j: (lower[j], j)), "delta mismatch"

    def deterministic_micro_run():
        from .harness import ExperimentConfig, run_experiment

        config = ExperimentConfig(
            objective="running-1d",
            grid_bounds=((0.0, 1.0),),
            grid_shape=(40,),
            epsilon=0.06,
            kernel=kernels.KernelSpec.se(0.08),
            noise_sigma=0.05,
            rounds=3,
            repetitions=2,
            init_count=2,
            algorithms=("stableopt", "gp-ucb"),
        )
        a = run_experiment(config).regrets
        b = run_experiment(config).regrets
        assert np.array_equal(a, b), "rerun differed under a fixed seed"

    return [
        ("kernel matrices", kernel_matrices),
        ("incremental posterior", incremental_posterior),
        ("neighborhoods vs brute force", neighborhoods_brute_force),
        ("acquisition vs enumeration", acquisition_enumeration),
        ("deterministic micro run", deterministic_micro_run),
    ]


def _cmd_selfcheck(args) -> int:
    failed = 0
    for name, step in _selfcheck_steps():
        try:
            step()
        except AssertionError as exc:
            print(f"FAIL {name}: {exc}")
            failed += 1
        else:
            print(f"ok   {name}")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stableopt",
        description="Adversarially robust GP optimization benchmarks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a config and write CSV/plot outputs")
    p_run.add_argument("--config", "-c", required=True, type=Path)
    p_run.add_argument("--out", "-o", default="results", type=Path)
    p_run.add_argument("--profile", choices=("ci", "full"), default=None)
    p_run.set_defaults(func=_cmd_run)

    p_trace = sub.add_parser("trace", help="per-round confidence-bound trace")
    p_trace.add_argument("--config", "-c", required=True, type=Path)
    p_trace.add_argument("--out", "-o", default="trace", type=Path)
    p_trace.set_defaults(func=_cmd_trace)

    p_oracle = sub.add_parser("oracle", help="dump the exhaustive worst-case table")
    p_oracle.add_argument("--config", "-c", required=True, type=Path)
    p_oracle.add_argument("--out", "-o", default="oracle.csv", type=Path)
    p_oracle.set_defaults(func=_cmd_oracle)

    p_check = sub.add_parser("selfcheck", help="run the built-in invariant suite")
    p_check.set_defaults(func=_cmd_selfcheck)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # surface everything as a nonzero exit
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
