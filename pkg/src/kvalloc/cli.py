"""Command-line surface for the trace -> scores -> allocation -> eviction pipeline.

Every command is deterministic given its flags and seed; machine-readable
output (JSON or CSV) goes to stdout, diagnostics to stderr. Exit codes: 0 on
success, 2 on validation or usage errors, 1 on internal errors (including a
failed oracle cross-check).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import dataclass

from . import allocator, attnproc, eviction, metrics, sampling, toymodel, trace

DEFAULT_OWS = 8
DEFAULT_POOL_SIZE = 7

ORACLE_CHECK_ATOL = 1e-9


@dataclass(frozen=True)
class RunConfig:
    """Common knobs shared by the pipeline commands."""

    ows: int = DEFAULT_OWS
    pool_size: int = DEFAULT_POOL_SIZE
    seed: int = 0
    fmt: str = "json"
    constraint: allocator.Constraint | None = None
    sample_ratio: float = sampling.DEFAULT_SAMPLE_RATIO

    @property
    def settings(self) -> attnproc.ProcSettings:
        return attnproc.ProcSettings(ows=self.ows, pool_size=self.pool_size)


def _add_proc_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--ows", type=int, default=DEFAULT_OWS, help="observation window size")
    parser.add_argument("--pool-size", type=int, default=DEFAULT_POOL_SIZE, help="smoothing kernel width (odd)")


def _add_constraint_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_mutually_exclusive_group()
    group.add_argument("--budget", type=int, default=None, help="total cache size across layers")
    group.add_argument("--target-ravg", type=float, default=None, help="target average retention in (0, 1]")


def _add_format_flag(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--format", choices=("json", "csv"), default="json", dest="fmt")


def _constraint(args: argparse.Namespace) -> allocator.Constraint:
    if (args.budget is None) == (args.target_ravg is None):
        raise ValueError("exactly one of --budget or --target-ravg is required")
    if args.budget is not None:
        return allocator.Constraint.budget(args.budget)
    return allocator.Constraint.target(args.target_ravg)


def _run_config(args: argparse.Namespace, constraint: allocator.Constraint | None = None) -> RunConfig:
    return RunConfig(
        ows=getattr(args, "ows", DEFAULT_OWS),
        pool_size=getattr(args, "pool_size", DEFAULT_POOL_SIZE),
        seed=getattr(args, "seed", 0),
        fmt=getattr(args, "fmt", "json"),
        constraint=constraint,
        sample_ratio=getattr(args, "sample_ratio", sampling.DEFAULT_SAMPLE_RATIO),
    )


def _cmd_gen(args: argparse.Namespace) -> int:
    spec = trace.SyntheticSpec(
        layers=args.layers,
        heads=args.heads,
        seq_len=args.seq_len,
        sparsity=args.sparsity,
        seed=args.seed,
        layer_skew=args.layer_skew,
    )
    generated = trace.generate_trace(spec)
    trace.save_trace(generated, args.output)
    print(f"wrote {args.output}", file=sys.stderr)
    return 0


def _cmd_scores(args: argparse.Namespace) -> int:
    cfg = _run_config(args)
    loaded = trace.load_trace(args.trace)
    vectors = attnproc.process_trace(loaded, cfg.settings, head_reduce=args.head_reduce)
    if cfg.fmt == "csv":
        sys.stdout.write(attnproc.scores_to_csv(vectors))
    else:
        sys.stdout.write(attnproc.scores_to_json(vectors) + "\n")
    return 0


def _cmd_curves(args: argparse.Namespace) -> int:
    cfg = _run_config(args)
    loaded = trace.load_trace(args.trace)
    vectors = attnproc.process_trace(loaded, cfg.settings)
    if (args.sizes is None) == (args.targets is None):
        raise ValueError("exactly one of --sizes or --targets is required")
    if args.sizes is not None:
        sizes = [int(x) for x in args.sizes.split(",") if x]
        points = metrics.retention_table(vectors, sizes)
        sys.stdout.write(metrics.retention_table_csv(points))
    else:
        targets = [float(x) for x in args.targets.split(",") if x]
        sys.stdout.write(metrics.min_size_table_csv(vectors, targets))
    return 0


def _cmd_allocate(args: argparse.Namespace) -> int:
    constraint = _constraint(args)
    cfg = _run_config(args, constraint)
    loaded = trace.load_trace(args.trace)
    vectors = attnproc.process_trace(loaded, cfg.settings)
    allocation = allocator.allocate(vectors, constraint)
    achieved = allocator.allocation_r_avg(vectors, allocation)

    if args.oracle:
        reference = allocator.oracle_allocate(vectors, constraint)
        reference_r = allocator.allocation_r_avg(vectors, reference)
        if constraint.mode == "budget":
            mismatch = abs(achieved - reference_r) > ORACLE_CHECK_ATOL
        else:
            mismatch = allocation.total != reference.total
        if mismatch:
            print(
                f"oracle mismatch: greedy sizes={list(allocation.sizes)} r_avg={achieved!r}, "
                f"oracle sizes={list(reference.sizes)} r_avg={reference_r!r}",
                file=sys.stderr,
            )
            return 1
        print("oracle check passed", file=sys.stderr)

    if cfg.fmt == "csv":
        sys.stdout.write(allocation.to_csv())
        print(f"r_avg {achieved!r}", file=sys.stderr)
    else:
        payload = {"sizes": list(allocation.sizes), "r_avg": achieved}
        sys.stdout.write(json.dumps(payload, separators=(",", ":")) + "\n")
    return 0


def _simulate_source(args: argparse.Namespace):
    """Resolve the attention source and projection width for simulation."""
    if args.toy:
        if args.trace is not None:
            raise ValueError("a trace path and --toy are mutually exclusive")
        config = toymodel.ToyModelConfig(
            layers=args.layers,
            heads=args.heads,
            model_dim=args.model_dim,
            proj_dim=args.proj_dim,
            seq_len=args.seq_len,
            seed=args.seed,
        )
        result = toymodel.mini_prefill(config)
        return result, config.proj_dim
    if args.trace is None:
        raise ValueError("either a trace path or --toy is required")
    return trace.load_trace(args.trace), args.proj_dim


def _simulate_allocation(
    args: argparse.Namespace, source, settings: attnproc.ProcSettings
) -> allocator.AllocationList:
    chosen = [args.allocation is not None, args.auto, args.profile is not None]
    if sum(chosen) != 1:
        raise ValueError("exactly one of --allocation, --auto, or --profile is required")
    if args.allocation is not None:
        with open(args.allocation, "r", encoding="utf-8") as fh:
            return allocator.AllocationList.from_json(fh.read())
    if args.profile is not None:
        return sampling.load_profile(args.profile).averaged
    constraint = _constraint(args)
    if isinstance(source, toymodel.PrefillResult):
        vectors = attnproc.process_trace(source.attention_trace(), settings)
    else:
        vectors = attnproc.process_trace(source, settings)
    return allocator.allocate(vectors, constraint)


def _report_rows(method: str, report: eviction.EvictionReport) -> list[list]:
    rows = []
    for layer, (n, idx, r) in enumerate(
        zip(report.sizes, report.retained_indices, report.per_layer_r)
    ):
        rows.append([method, layer, n, len(idx), repr(r)])
    return rows


def _cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _run_config(args)
    settings = cfg.settings
    source, proj_dim = _simulate_source(args)
    allocation = _simulate_allocation(args, source, settings)
    report = eviction.simulate_task(source, allocation, settings, proj_dim=proj_dim)
    print(f"personalized: {report.summary()}", file=sys.stderr)

    uniform_report = None
    if args.compare_uniform:
        seq_len = (
            source.per_layer_attention.shape[2]
            if isinstance(source, toymodel.PrefillResult)
            else source.seq_len
        )
        capacity = seq_len - settings.ows
        uniform = allocator.uniform_allocation(allocation.total, len(allocation), capacity)
        uniform_report = eviction.simulate_task(source, uniform, settings, proj_dim=proj_dim)
        print(f"uniform: {uniform_report.summary()}", file=sys.stderr)

    if cfg.fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["method", "layer", "n", "retained", "r"])
        writer.writerows(_report_rows("personalized", report))
        if uniform_report is not None:
            writer.writerows(_report_rows("uniform", uniform_report))
        sys.stdout.write(buf.getvalue())
    else:
        payload = json.loads(report.to_json())
        if uniform_report is not None:
            payload["uniform"] = json.loads(uniform_report.to_json())
        sys.stdout.write(json.dumps(payload, separators=(",", ":")) + "\n")
    return 0


def _cmd_profile(args: argparse.Namespace) -> int:
    constraint = _constraint(args)
    cfg = _run_config(args, constraint)
    lists = []
    for path in args.traces:
        loaded = trace.load_trace(path)
        vectors = attnproc.process_trace(loaded, cfg.settings)
        lists.append(allocator.allocate(vectors, constraint))
    profile = sampling.build_profile(args.task_type, lists, sample_ratio=cfg.sample_ratio)
    if len(lists) >= 2:
        try:
            similarity = sampling.profile_similarity(lists)
            print(f"sample similarity {similarity:.4f}", file=sys.stderr)
        except ValueError as exc:
            print(f"sample similarity unavailable: {exc}", file=sys.stderr)
    if args.output:
        sampling.save_profile(profile, args.output)
        print(f"wrote {args.output}", file=sys.stderr)
    else:
        payload = {
            "task_type": profile.task_type,
            "samples": [list(s.sizes) for s in profile.samples],
            "averaged": list(profile.averaged.sizes),
            "sample_ratio": profile.sample_ratio,
        }
        sys.stdout.write(json.dumps(payload, separators=(",", ":")) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kvalloc",
        description="Per-layer KV-cache budget allocation and eviction simulation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a seeded synthetic attention trace")
    gen.add_argument("--layers", type=int, required=True)
    gen.add_argument("--heads", type=int, default=1)
    gen.add_argument("--seq-len", type=int, required=True)
    gen.add_argument("--sparsity", type=float, default=0.1)
    gen.add_argument("--layer-skew", type=float, default=0.0)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("-o", "--output", required=True)
    gen.set_defaults(func=_cmd_gen)

    scores = sub.add_parser("scores", help="emit per-layer token scores from a trace")
    scores.add_argument("trace")
    scores.add_argument("--head-reduce", choices=attnproc.HEAD_REDUCTIONS, default="mean")
    _add_proc_flags(scores)
    _add_format_flag(scores)
    scores.set_defaults(func=_cmd_scores)

    curves = sub.add_parser("curves", help="emit retention-curve tables as CSV")
    curves.add_argument("trace")
    curves.add_argument("--sizes", default=None, help="comma-separated cache sizes for layer,n,r rows")
    curves.add_argument("--targets", default=None, help="comma-separated retention targets for layer,r_target,n_min rows")
    _add_proc_flags(curves)
    curves.set_defaults(func=_cmd_curves)

    alloc = sub.add_parser("allocate", help="compute a per-layer cache-size allocation")
    alloc.add_argument("trace")
    alloc.add_argument("--oracle", action="store_true", help="cross-check against exhaustive search")
    _add_constraint_flags(alloc)
    _add_proc_flags(alloc)
    _add_format_flag(alloc)
    alloc.set_defaults(func=_cmd_allocate)

    sim = sub.add_parser("simulate", help="simulate eviction for one task and report")
    sim.add_argument("trace", nargs="?", default=None)
    sim.add_argument("--toy", action="store_true", help="drive a seeded toy-model run instead of a trace")
    sim.add_argument("--layers", type=int, default=2)
    sim.add_argument("--heads", type=int, default=1)
    sim.add_argument("--model-dim", type=int, default=16)
    sim.add_argument("--proj-dim", type=int, default=8)
    sim.add_argument("--seq-len", type=int, default=16)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--allocation", default=None, help="allocation JSON file")
    sim.add_argument("--auto", action="store_true", help="run the allocator inline")
    sim.add_argument("--profile", default=None, help="reuse the averaged allocation of a profile")
    sim.add_argument("--compare-uniform", action="store_true")
    _add_constraint_flags(sim)
    _add_proc_flags(sim)
    _add_format_flag(sim)
    sim.set_defaults(func=_cmd_simulate)

    prof = sub.add_parser("profile", help="build an allocation profile from sampled tasks")
    prof.add_argument("traces", nargs="+")
    prof.add_argument("--task-type", required=True)
    prof.add_argument("--sample-ratio", type=float, default=sampling.DEFAULT_SAMPLE_RATIO)
    prof.add_argument("-o", "--output", default=None)
    _add_constraint_flags(prof)
    _add_proc_flags(prof)
    prof.set_defaults(func=_cmd_profile)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {exc}", file=sys.stderr)
        return 1


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
