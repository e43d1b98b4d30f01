"""Command-line entry point.

Subcommands wire the library into end-to-end experiments: ``solve`` couples
two point-cloud files, ``bench-spiral`` and ``bench-clusters`` run the
synthetic partial-matching and multi-cluster benchmarks, ``converge`` sweeps
empirical sample sizes, ``align`` extracts rigid transforms from a coupling
and ``plot`` renders one as SVG.

Exit codes: 0 success, 1 usage or input error, 2 solver hit the iteration
cap without converging.  Machine-readable JSON goes to stdout, summaries to
stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import statistics
import sys
import time

import numpy as np

from . import align as _align
from . import io as _io
from . import metrics as _metrics
from . import synth as _synth
from .solver import SolverConfig, solve
from .spaces import ClusteredSpace

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NO_CONVERGENCE = 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; 2 is reserved for non-convergence
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


def _build_parser():
    parser = _Parser(prog="jointgw", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--threads", type=int, default=None,
                        help="cap worker threads (fallback: JGW_THREADS)")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_flags(p):
        p.add_argument("--config", help="solver config JSON")
        p.add_argument("--epsilon", type=float, default=None)
        p.add_argument("--eta", type=float, default=None)
        p.add_argument("--iters", type=int, default=None, help="max outer iterations")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--init-perturbation", type=float, default=None)
        p.add_argument("--anneal-from", type=float, default=None,
                       help="start the regularization schedule at this epsilon")
        p.add_argument("--sinkhorn-tol", type=float, default=None)
        p.add_argument("--log-domain", action="store_true", default=None)
        p.add_argument("--no-normalize", action="store_true",
                       help="skip shared distance normalization")
        p.add_argument("--paper-literal-signs", action="store_true",
                       help="run the positive-exponent kernel variant")

    p = sub.add_parser("solve", help="couple two point-cloud CSV files")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    add_config_flags(p)
    p.add_argument("--out-coupling", required=True)
    p.add_argument("--out-report", required=True)

    p = sub.add_parser("bench-spiral", help="noisy-spiral partial matching benchmark")
    p.add_argument("--n-spiral", type=int, default=100)
    p.add_argument("--n-noise", type=int, default=50)
    add_config_flags(p)
    p.add_argument("--svg", help="optional coupling figure output")
    p.add_argument("--out-coupling", help="optional coupling CSV output")

    p = sub.add_parser("bench-clusters", help="3-cluster split-versus-whole benchmark")
    p.add_argument("--points-per-cluster", type=int, default=40)
    add_config_flags(p)

    p = sub.add_parser("converge", help="empirical sampling sweep against a reference cloud")
    p.add_argument("--n-list", required=True, help="comma-separated sample sizes")
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--source", required=True)
    add_config_flags(p)
    p.add_argument("--out", help="CSV output path (default: stdout)")

    p = sub.add_parser("align", help="per-cluster rigid transforms from a coupling")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--coupling", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--ground-truth", help="transforms JSON to score against")
    p.add_argument("--harden", action="store_true",
                   help="collapse each plan row to its argmax before fitting")

    p = sub.add_parser("plot", help="render a coupling as an SVG scatter")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--coupling", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--top-k", type=int, default=1)
    p.add_argument("--project-axis", type=int, default=2, choices=(0, 1, 2))
    return parser


def _config_from_args(args, base: SolverConfig | None = None) -> SolverConfig:
    config = _io.read_config(args.config) if args.config else (base or SolverConfig())
    overrides = {
        "epsilon": args.epsilon,
        "eta": args.eta,
        "max_outer_iters": args.iters,
        "seed": args.seed,
        "init_perturbation": args.init_perturbation,
        "anneal_from": args.anneal_from,
        "sinkhorn_tol": args.sinkhorn_tol,
    }
    for name, value in overrides.items():
        if value is not None:
            setattr(config, name, value)
    if args.log_domain:
        config.log_domain = True
    if args.no_normalize:
        config.normalize_distances = False
    if args.paper_literal_signs:
        config.paper_literal_signs = True
    return config.validate()


def _emit(payload: dict, summary: str):
    print(json.dumps(payload))
    print(summary, file=sys.stderr)


def _cmd_solve(args) -> int:
    config = _config_from_args(args)
    source = _io.read_point_cloud(args.source)
    target = _io.read_point_cloud(args.target)
    coupling, report = solve(source, target, config)
    _io.write_coupling(args.out_coupling, coupling)
    _io.write_report(args.out_report, report)
    _emit(
        {"objective": report.objective, "converged": report.converged,
         "outer_iters_used": report.outer_iters_used},
        f"objective {report.objective:.6g} after {report.outer_iters_used} iterations"
        f" ({'converged' if report.converged else 'NOT converged'})",
    )
    return EXIT_OK if report.converged else EXIT_NO_CONVERGENCE


def _cmd_bench_spiral(args) -> int:
    # sharp annealed regime; a flat default-epsilon run leaves the plan too
    # blurred for a meaningful noise-mass reading
    base = SolverConfig(epsilon=1e-4, anneal_from=0.1, max_outer_iters=600)
    config = _config_from_args(args, base=base)
    spec = _synth.SpiralSpec(n_spiral=args.n_spiral, n_noise=args.n_noise,
                             seed=config.seed)
    t0 = time.perf_counter()
    source, target, noise_mask = _synth.gen_spiral_pair(spec)
    retained = spec.n_spiral / (spec.n_spiral + spec.n_noise) if spec.n_noise else None
    if retained is not None:
        wrapped = _synth.gen_dummy_cluster_wrap(source, retained)
    else:
        wrapped = source
    coupling, report = solve(wrapped, target, config)
    row_mask = np.zeros(wrapped.n_points, dtype=bool)
    row_mask[: source.n_points] = True
    fraction = _metrics.noise_mass_fraction(coupling, noise_mask, row_mask=row_mask)
    runtime_ms = int(round((time.perf_counter() - t0) * 1000))
    if args.svg:
        _io.write_svg_scatter(args.svg, wrapped.all_points(), target.all_points(),
                              coupling, top_edges_per_point=1)
    if args.out_coupling:
        _io.write_coupling(args.out_coupling, coupling)
    _emit(
        {"noise_mass_fraction": fraction, "objective": report.objective,
         "runtime_ms": runtime_ms},
        f"noise mass fraction {fraction:.4f}, objective {report.objective:.6g}",
    )
    return EXIT_OK if report.converged else EXIT_NO_CONVERGENCE


def _cmd_bench_clusters(args) -> int:
    config = _config_from_args(args)
    t0 = time.perf_counter()
    points, labels = _synth.gen_shape_trio(args.points_per_cluster, seed=config.seed)
    split, whole = _synth.gen_split_shape(points, labels)
    coupling, report = solve(whole, split, config)
    fraction = _metrics.correct_mass_fraction(coupling, split, labels)
    runtime_ms = int(round((time.perf_counter() - t0) * 1000))
    _emit(
        {"correct_mass_fraction": fraction, "objective": report.objective,
         "runtime_ms": runtime_ms},
        f"correct mass fraction {fraction:.4f}, objective {report.objective:.6g}",
    )
    return EXIT_OK if report.converged else EXIT_NO_CONVERGENCE


def _cmd_converge(args) -> int:
    config = _config_from_args(args)
    space = _io.read_point_cloud(args.source)
    try:
        n_list = [int(tok) for tok in args.n_list.split(",") if tok.strip()]
    except ValueError:
        raise ValueError(f"--n-list must be comma-separated integers, got {args.n_list!r}")
    if not n_list or args.seeds < 1:
        raise ValueError("need at least one sample size and one seed")
    lines = ["n,median_objective"]
    for n in n_list:
        objectives = []
        for seed in range(args.seeds):
            empirical = _synth.sample_empirical(space, n, seed=config.seed + seed)
            _, report = solve(empirical, space, config)
            objectives.append(report.objective)
        lines.append(f"{n},{statistics.median(objectives):.17g}")
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    print(f"swept {len(n_list)} sample sizes x {args.seeds} seeds", file=sys.stderr)
    return EXIT_OK


def _read_pair_and_coupling(args):
    source = _io.read_point_cloud(args.source)
    target = _io.read_point_cloud(args.target)
    plan = _io.read_coupling(args.coupling, source.n_points, target.n_points)
    return source, target, plan


def _cmd_align(args) -> int:
    source, target, plan = _read_pair_and_coupling(args)
    transforms = _align.align_clusters(plan, source, target, harden=args.harden)
    labels = [c.label for c in source.clusters]
    with open(args.out, "w") as fh:
        json.dump(_align.transforms_to_jsonable(transforms, labels), fh, indent=2)
        fh.write("\n")
    payload = {"clusters": labels, "flags": [t.flag for t in transforms]}
    if args.ground_truth:
        with open(args.ground_truth) as fh:
            truth = [_align.transform_from_jsonable(e) for e in json.load(fh)]
        errors = [_align.rotational_error(t, g) for t, g in zip(transforms, truth)]
        payload["rotational_errors_deg"] = errors
        payload["max_rotational_error_deg"] = max(errors)
    _emit(payload, f"wrote {len(transforms)} transforms to {args.out}")
    return EXIT_OK


def _cmd_plot(args) -> int:
    source, target, plan = _read_pair_and_coupling(args)
    _io.write_svg_scatter(args.out, source.all_points(), target.all_points(), plan,
                          top_edges_per_point=args.top_k, project_axis=args.project_axis)
    _emit({"out": args.out}, f"wrote figure to {args.out}")
    return EXIT_OK


_COMMANDS = {
    "solve": _cmd_solve,
    "bench-spiral": _cmd_bench_spiral,
    "bench-clusters": _cmd_bench_clusters,
    "converge": _cmd_converge,
    "align": _cmd_align,
    "plot": _cmd_plot,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR

    threads = args.threads
    if threads is None and os.environ.get("JGW_THREADS"):
        try:
            threads = int(os.environ["JGW_THREADS"])
        except ValueError:
            print("error: JGW_THREADS must be an integer", file=sys.stderr)
            return EXIT_ERROR

    try:
        if threads is not None:
            from threadpoolctl import threadpool_limits

            with threadpool_limits(limits=threads):
                return _COMMANDS[args.command](args)
        return _COMMANDS[args.command](args)
    except (ValueError, OSError, KeyError, ArithmeticError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
