"""
Command-line surface.

    python -m unraveling_pipeline.cli <subcommand> [flags]

Records go to stdout (or --out). Logs and the resolved seed go to stderr, and so
does the run manifest (one "manifest: {...}" line) unless --out is given, in
which case it is written to <out>.manifest.json.
Exit status: 0 success, 2 invalid input or configuration, 3 resource guard.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import pandas as pd

from unraveling_pipeline import __version__
from unraveling_pipeline.dist_core import SeededSampler
from unraveling_pipeline.errors import ConfigurationError, UnravelingError, exit_code_for
from unraveling_pipeline.experiments import (
    ExperimentConfig,
    ExperimentResult,
    chaos_probability,
    local_chaos_probability,
    region_area_1x1,
    simultaneous_fraction,
    unravel_probabilities,
)
from unraveling_pipeline.helper import _stable_digest, _stable_run_id, resolve_seed
from unraveling_pipeline.limit_model import ETA_VARIANTS, LimitEstimate, estimate_eta, estimate_pi, estimate_zeta
from unraveling_pipeline.market_model import sample_realization
from unraveling_pipeline.pipeline import load_runtime_config
from unraveling_pipeline.schemas import (
    MatchingModel,
    RealizationModel,
    RunManifest,
    distribution_from_argument,
    load_json_file,
    parse_payload,
)
from unraveling_pipeline.stability import analysis_report

LOGGER = logging.getLogger("UnravelingCLI")

EXPERIMENT_COLUMNS = ["experiment", "n", "k", "rank", "estimate", "std_error", "reps", "seed"]
LIMIT_COLUMNS = ["quantity", "r", "reps", "estimate", "std_error", "seed"]

# flags that identify a run; everything else (--out, --format, --threads) only shapes delivery
REPLAY_KEYS = (
    "n", "k", "dist_men", "dist_women", "reps", "seed", "ranks", "epsilon",
    "inner_samples", "max_n", "percentile", "window", "r", "variant",
)


# ---------------------------------------------------------------------------#
#                       OUTPUT                                                #
# ---------------------------------------------------------------------------#
def _write_text(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _emit_rows(rows: List[Dict[str, Any]], columns: List[str], args: argparse.Namespace) -> None:
    frame = pd.DataFrame(rows, columns=columns)
    if args.format == "json":
        _write_text(frame.to_json(orient="records", indent=2) + "\n", args.out)
    else:
        _write_text(frame.to_csv(index=False, lineterminator="\n"), args.out)


def _emit_json(payload: Dict[str, Any], args: argparse.Namespace) -> None:
    _write_text(json.dumps(payload, indent=2) + "\n", args.out)


def _echo_seed(seed: int) -> None:
    sys.stderr.write(f"seed: {seed}\n")


def _parameters(args: argparse.Namespace, seed: int) -> Dict[str, Any]:
    params = {key: getattr(args, key) for key in REPLAY_KEYS if getattr(args, key, None) is not None}
    # distributions are pinned inline so replay never reads the original file
    for key in ("dist_men", "dist_women"):
        if key in params:
            params[key] = json.dumps(distribution_from_argument(params[key]).to_dict(), separators=(",", ":"))
    params["seed"] = seed
    return params


def _write_manifest(
    args: argparse.Namespace,
    seed: int,
    digest_source: Any,
    wall_time: float,
    extra: Optional[Dict[str, Any]] = None,
) -> None:
    manifest = RunManifest(
        version=__version__,
        subcommand=args.subcommand,
        parameters=_parameters(args, seed),
        seed=seed,
        run_id=_stable_run_id(seed, args.subcommand),
        digest=_stable_digest({"records": digest_source}),
        wall_time=round(wall_time, 6),
        runtime=load_runtime_config(),
    )
    payload = manifest.model_dump()
    if extra:
        payload["experiment_manifest"] = extra
    if not args.out:
        sys.stderr.write("manifest: " + json.dumps(payload, default=str) + "\n")
        return
    path = Path(f"{args.out}.manifest.json")
    path.write_text(json.dumps(payload, indent=2, default=str) + "\n", encoding="utf-8")
    LOGGER.info("Manifest written to %s", path)


# ---------------------------------------------------------------------------#
#                       ARGUMENT HELPERS                                      #
# ---------------------------------------------------------------------------#
def _parse_ranks(value: Optional[str]) -> Optional[tuple]:
    if value is None:
        return None
    try:
        return tuple(int(part) for part in value.split(",") if part.strip())
    except ValueError as exc:
        raise ConfigurationError(f"ranks: expected a comma-separated list of integers, got {value!r}") from exc


def _threads(args: argparse.Namespace) -> int:
    return args.threads if args.threads is not None else load_runtime_config()["threads"]


def _flag(args: argparse.Namespace, name: str, default: Any) -> Any:
    value = getattr(args, name, None)
    return default if value is None else value


def _experiment_config(args: argparse.Namespace, seed: int) -> ExperimentConfig:
    runtime = load_runtime_config()
    cfg = ExperimentConfig(
        n=args.n,
        k=args.k,
        dist_men=distribution_from_argument(args.dist_men),
        dist_women=distribution_from_argument(args.dist_women),
        reps=args.reps,
        seed=seed,
        ranks=_parse_ranks(getattr(args, "ranks", None)),
        epsilon=_flag(args, "epsilon", 0.01),
        threads=_threads(args),
        inner_samples=_flag(args, "inner_samples", runtime["inner_samples"]),
        max_n=_flag(args, "max_n", runtime["chaos_max_n"]),
        percentile=_flag(args, "percentile", 0.5),
        window=_flag(args, "window", 7),
    )
    # environment-resolved values are pinned so the manifest replays without the environment
    for name in ("inner_samples", "max_n"):
        if hasattr(args, name):
            setattr(args, name, getattr(cfg, name))
    return cfg


# ---------------------------------------------------------------------------#
#                       SUBCOMMANDS                                           #
# ---------------------------------------------------------------------------#
def cmd_generate(args: argparse.Namespace) -> int:
    seed = resolve_seed(args.seed)
    _echo_seed(seed)
    started = time.perf_counter()
    C = sample_realization(
        args.n,
        args.k,
        distribution_from_argument(args.dist_men),
        distribution_from_argument(args.dist_women),
        SeededSampler(seed),
    )
    payload = RealizationModel.from_realization(C).model_dump()
    _emit_json(payload, args)
    _write_manifest(args, seed, payload, time.perf_counter() - started)
    return 0


def cmd_analyze(args: argparse.Namespace) -> int:
    C = load_json_file(args.realization, RealizationModel).to_realization()
    mu = None
    if args.matching:
        source = args.matching
        model = (
            parse_payload(MatchingModel, source)
            if source.lstrip().startswith("{")
            else load_json_file(source, MatchingModel)
        )
        mu = model.to_matching(C.n)
    _emit_json(analysis_report(C, mu), args)
    return 0


def _run_experiment(args: argparse.Namespace, operation: Callable[[ExperimentConfig], ExperimentResult]) -> int:
    seed = resolve_seed(args.seed)
    _echo_seed(seed)
    cfg = _experiment_config(args, seed)
    result = operation(cfg)
    rows = result.rows()
    _emit_rows(rows, EXPERIMENT_COLUMNS, args)
    _write_manifest(args, seed, rows, result.wall_time, extra=result.manifest)
    return 0


def cmd_simulate_chaos(args: argparse.Namespace) -> int:
    return _run_experiment(args, chaos_probability)


def cmd_simulate_unravel(args: argparse.Namespace) -> int:
    return _run_experiment(args, unravel_probabilities)


def cmd_simulate_fraction(args: argparse.Namespace) -> int:
    return _run_experiment(args, simultaneous_fraction)


def cmd_simulate_local(args: argparse.Namespace) -> int:
    return _run_experiment(args, local_chaos_probability)


def _limit_row(estimate: LimitEstimate) -> Dict[str, Any]:
    return {
        "quantity": estimate.quantity,
        "r": estimate.r,
        "reps": estimate.reps,
        "estimate": estimate.value,
        "std_error": estimate.std_error,
        "seed": estimate.seed,
    }


def _run_limit(args: argparse.Namespace, operation: Callable[[SeededSampler, int], LimitEstimate]) -> int:
    seed = resolve_seed(args.seed)
    _echo_seed(seed)
    started = time.perf_counter()
    estimate = operation(SeededSampler(seed), _threads(args))
    rows = [_limit_row(estimate)]
    _emit_rows(rows, LIMIT_COLUMNS, args)
    _write_manifest(args, seed, rows, time.perf_counter() - started)
    return 0


def cmd_region(args: argparse.Namespace) -> int:
    return _run_limit(args, lambda s, threads: region_area_1x1(args.reps, s, threads))


def cmd_limit_pi(args: argparse.Namespace) -> int:
    return _run_limit(args, lambda s, threads: estimate_pi(args.r, args.reps, s, threads))


def cmd_limit_zeta(args: argparse.Namespace) -> int:
    return _run_limit(args, lambda s, threads: estimate_zeta(args.r, args.reps, s, threads))


def cmd_limit_eta(args: argparse.Namespace) -> int:
    return _run_limit(args, lambda s, threads: estimate_eta(args.r, args.reps, s, threads, args.variant))


def manifest_argv(manifest: RunManifest) -> List[str]:
    """Flags that re-create the run recorded in `manifest`."""
    argv = [manifest.subcommand]
    for key, value in manifest.parameters.items():
        if value is None:
            continue
        if isinstance(value, (list, tuple)):
            value = ",".join(str(v) for v in value)
        argv += [f"--{key.replace('_', '-')}", str(value)]
    return argv


def cmd_replay(args: argparse.Namespace) -> int:
    manifest = load_json_file(args.manifest, RunManifest)
    if manifest.subcommand == "replay":
        raise ConfigurationError("subcommand: a manifest cannot replay another replay")
    argv = manifest_argv(manifest) + ["--format", args.format]
    if args.out:
        argv += ["--out", args.out]
    if args.threads is not None:
        argv += ["--threads", str(args.threads)]
    LOGGER.info("Replaying %s", " ".join(argv))
    return run(argv)


# ---------------------------------------------------------------------------#
#                       PARSER                                                #
# ---------------------------------------------------------------------------#
def _delivery_flags(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--out", default=None, help="output file (default: stdout); also writes <out>.manifest.json")
    sp.add_argument("--format", choices=("csv", "json"), default="csv")
    sp.add_argument("--threads", type=int, default=None, help="worker processes (default: UNRAVELING_THREADS)")


def _market_flags(sp: argparse.ArgumentParser, reps: int) -> None:
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--k", type=int, default=1)
    sp.add_argument("--dist-men", default=None, help="distribution JSON or path (default: uniform[0,1])")
    sp.add_argument("--dist-women", default=None, help="distribution JSON or path (default: uniform[0,1])")
    sp.add_argument("--reps", type=int, default=reps)
    sp.add_argument("--seed", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="unraveling",
        description="Two-period matching markets with late entrants: stability, chaos and unraveling experiments.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    sp = sub.add_parser("generate", help="sample a realization and write it as JSON")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--k", type=int, default=1)
    sp.add_argument("--dist-men", default=None)
    sp.add_argument("--dist-women", default=None)
    sp.add_argument("--seed", type=int, default=None)
    _delivery_flags(sp)
    sp.set_defaults(handler=cmd_generate)

    sp = sub.add_parser("analyze", help="chaos verdict and stability witness for a realization file")
    sp.add_argument("--realization", required=True)
    sp.add_argument("--matching", default=None, help='matching JSON ({"pairs": [[1, 1]]}) or path')
    _delivery_flags(sp)
    sp.set_defaults(handler=cmd_analyze)

    sp = sub.add_parser("simulate-chaos", help="probability that a realization is chaotic")
    _market_flags(sp, reps=10_000)
    sp.add_argument("--max-n", type=int, default=None, help="size guard (default: UNRAVELING_CHAOS_MAX_N)")
    _delivery_flags(sp)
    sp.set_defaults(handler=cmd_simulate_chaos)

    sp = sub.add_parser("simulate-unravel", help="per-rank unraveling probabilities")
    _market_flags(sp, reps=10_000)
    sp.add_argument("--ranks", default=None, help="comma-separated ranks (default: all)")
    sp.add_argument("--inner-samples", type=int, default=None)
    _delivery_flags(sp)
    sp.set_defaults(handler=cmd_simulate_unravel)

    sp = sub.add_parser("simulate-fraction", help="share of couples unraveling at once")
    _market_flags(sp, reps=1_000)
    sp.add_argument("--epsilon", type=float, default=None)
    sp.add_argument("--inner-samples", type=int, default=None)
    _delivery_flags(sp)
    sp.set_defaults(handler=cmd_simulate_fraction)

    sp = sub.add_parser("simulate-local", help="stability of a window of consecutive couples")
    _market_flags(sp, reps=10_000)
    sp.add_argument("--percentile", type=float, default=None)
    sp.add_argument("--window", type=int, default=None)
    _delivery_flags(sp)
    sp.set_defaults(handler=cmd_simulate_local)

    sp = sub.add_parser("region", help="area of the n = k = 1 unraveling region")
    sp.add_argument("--reps", type=int, default=1_000_000)
    sp.add_argument("--seed", type=int, default=None)
    _delivery_flags(sp)
    sp.set_defaults(handler=cmd_region)

    for name, handler in (("limit-pi", cmd_limit_pi), ("limit-zeta", cmd_limit_zeta), ("limit-eta", cmd_limit_eta)):
        sp = sub.add_parser(name, help=f"exponential-gap limit model: {name.split('-')[1]}")
        sp.add_argument("--r", type=int, required=True)
        sp.add_argument("--reps", type=int, default=1_000_000)
        sp.add_argument("--seed", type=int, default=None)
        if name == "limit-eta":
            sp.add_argument("--variant", choices=ETA_VARIANTS, default="symmetric")
        _delivery_flags(sp)
        sp.set_defaults(handler=handler)

    sp = sub.add_parser("replay", help="re-run the invocation recorded in a manifest")
    sp.add_argument("--manifest", required=True)
    _delivery_flags(sp)
    sp.set_defaults(handler=cmd_replay)
    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except UnravelingError as exc:
        sys.stderr.write(f"error: {exc}\n")
        LOGGER.debug("Failed %s", args.subcommand, exc_info=True)
        return exit_code_for(exc)


def main(argv: Optional[Sequence[str]] = None) -> int:
    return run(argv)


if __name__ == "__main__":
    sys.exit(main())
