"""``pongsnn`` command line: run, sweep, bench and replay.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
Any ``--section.key=value`` argument overrides one config entry.
"""
from __future__ import annotations

import argparse
import json
import re
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from . import config as config_mod
from . import formats
from .bench import (BenchConfig, parse_modes, parse_sizes, run_bench, write_report,
                    write_samples)
from .config import ExperimentConfig
from .exceptions import ConfigurationError, ParameterError
from .experiment import aggregate_curves, run_experiment

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class Console:
    """Diagnostics go to stderr (silenced by --quiet); results go to stdout as JSON."""

    def __init__(self, quiet: bool):
        self.quiet = quiet

    def info(self, msg: str) -> None:
        if not self.quiet:
            print(msg, file=sys.stderr, flush=True)

    def error(self, msg: str) -> None:
        print(f"error: {msg}", file=sys.stderr, flush=True)

    def result(self, payload: dict) -> None:
        print(json.dumps(payload), flush=True)


# configuration

def parse_overrides(extra: list[str]) -> dict[str, str]:
    out = {}
    for arg in extra:
        if not arg.startswith("--") or "=" not in arg:
            raise UsageError(f"unrecognized argument {arg!r}; overrides take the form --section.key=value")
        key, _, value = arg[2:].partition("=")
        out[key] = value
    return out


def load_config(path: str | None) -> ExperimentConfig:
    """INI config or a run manifest (``.json``); no path means all defaults."""
    if path is None:
        return ExperimentConfig()
    p = Path(path)
    if p.suffix == ".json":
        if not p.is_file():
            raise ConfigurationError(f"config file not found: {p}")
        try:
            manifest = json.loads(p.read_text())
            data = manifest["config"]
        except (ValueError, KeyError, TypeError):
            raise ConfigurationError(f"{p}: not a run manifest (no 'config' object)") from None
        return config_mod.from_dict(data)
    return config_mod.load(p)


def resolve_config(args, extra) -> ExperimentConfig:
    cfg = load_config(args.config)
    overrides = parse_overrides(extra)
    if args.seed is not None:
        overrides["experiment.seed"] = str(args.seed)
    if args.iterations is not None:
        overrides["experiment.n_iterations"] = str(args.iterations)
    return config_mod.apply_overrides(cfg, overrides) if overrides else cfg.validate()


# run outputs

class Manifest:
    def __init__(self, out_dir: Path, cfg: ExperimentConfig, command: str):
        self.path = out_dir / "manifest.json"
        self.data = {"tool": "pongsnn", "version": __version__, "command": command,
                     "seed": cfg.seed, "config": config_mod.to_dict(cfg),
                     "artifacts": {}, "status": "running", "partial": True,
                     "started": _now(), "finished": None}
        self.write()

    def write(self) -> None:
        self.path.write_text(json.dumps(self.data, indent=2) + "\n")

    def finish(self, status: str, artifacts: dict, error: str | None = None) -> None:
        self.data.update(status=status, partial=status != "complete", artifacts=artifacts,
                         finished=_now())
        if error:
            self.data["error"] = error
        self.write()


RUN_ARTIFACTS = {"iterations_csv": "iterations.csv", "log_ndjson": "log.ndjson",
                 "catch_fraction_csv": "catch_fraction.csv", "mean_reward_csv": "mean_reward.csv",
                 "summary": "summary.txt", "weights_initial": "weights_initial.txt",
                 "weights_final": "weights_final.txt", "config": "config.ini"}


def write_run_outputs(out_dir: Path, result) -> None:
    """Everything except the streamed logs."""
    m = result.metrics
    final = formats.final_record(result)
    formats.write_metrics(out_dir, m.catch_fraction_curve, m.mean_reward_curve,
                          formats.summary_items(final, m.catch_fraction_curve))
    formats.write_weights(out_dir / "weights_initial.txt", result.initial_weights)
    formats.write_weights(out_dir / "weights_final.txt", result.weights)
    return final


def write_logs_from_result(out_dir: Path, result) -> None:
    """Write the logs of a finished run exactly as the streaming writer would."""
    writer = formats.RunWriter(out_dir)
    evals = dict(result.metrics.catch_fraction_curve)
    try:
        for log in result.logs:
            writer.iteration(log)
            if log.iteration % result.config.eval_every == 0 and log.iteration in evals:
                writer.evaluation(log.iteration, evals[log.iteration])
        writer.record(formats.final_record(result))
    finally:
        writer.close()


def execute_run(cfg: ExperimentConfig, out_dir: Path, console: Console, command: str = "run"):
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(out_dir, cfg, command)
    (out_dir / "config.ini").write_text(config_mod.dumps(cfg))
    writer = formats.RunWriter(out_dir)
    artifacts = {k: str(out_dir / v) for k, v in RUN_ARTIFACTS.items()}
    try:
        def on_eval(k, frac):
            writer.evaluation(k, frac)
            console.info(f"iteration {k}: catch fraction {frac:.3f}")

        result = run_experiment(cfg, on_iteration=writer.iteration, on_evaluation=on_eval)
        final = write_run_outputs(out_dir, result)
        writer.record(final)
    except BaseException as exc:
        writer.close()
        manifest.finish("failed", artifacts, f"{type(exc).__name__}: {exc}")
        raise
    writer.close()
    manifest.finish("complete", artifacts)
    return result


def run_payload(result, out_dir) -> dict:
    m = result.metrics
    return {"out": str(out_dir), "seed": result.config.seed,
            "initial_catch_fraction": m.initial_catch_fraction,
            "final_catch_fraction": m.final_catch_fraction,
            "diagonal_dominance": m.diagonal_dominance,
            "weight_excitability_correlation": m.weight_excitability_correlation,
            "correlation_p_value": m.correlation_p_value}


# commands

def cmd_run(args, extra, console: Console) -> int:
    cfg = resolve_config(args, extra)
    out = Path(args.out)
    result = execute_run(cfg, out, console)
    console.result(run_payload(result, out))
    return EXIT_OK


def parse_seeds(text: str) -> list[int]:
    """``"0-9"``, ``"1,4,7"`` or a mix such as ``"0-2,10"``."""
    seeds = []
    for part in (p.strip() for p in text.split(",")):
        m = re.fullmatch(r"(\d+)(?:-(\d+))?", part)
        if not m:
            raise UsageError(f"cannot parse seed list {text!r}")
        lo = int(m.group(1))
        seeds.extend(range(lo, int(m.group(2) or lo) + 1))
    if not seeds:
        raise UsageError("seed list must be non-empty")
    return seeds


def _sweep_job(job):
    cfg, seed = job
    try:
        return seed, run_experiment(replace(cfg, seed=seed)), None
    except Exception as exc:
        return seed, None, f"{type(exc).__name__}: {exc}"


def cmd_sweep(args, extra, console: Console) -> int:
    cfg = resolve_config(args, extra)
    seeds = parse_seeds(args.seeds)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(out, cfg, "sweep")
    manifest.data["seeds"] = seeds
    manifest.write()
    jobs = [(cfg, s) for s in seeds]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            outcomes = list(pool.map(_sweep_job, jobs))
    else:
        outcomes = [_sweep_job(j) for j in jobs]

    status_rows, curves = [], []
    for seed, result, err in outcomes:
        if result is None:
            status_rows.append((seed, "failed", "nan", err))
            console.error(f"seed {seed} failed: {err}")
            continue
        run_dir = out / f"seed_{seed}"
        run_dir.mkdir(exist_ok=True)
        (run_dir / "config.ini").write_text(config_mod.dumps(result.config))
        write_logs_from_result(run_dir, result)
        write_run_outputs(run_dir, result)
        curves.append(result.metrics.catch_fraction_curve)
        status_rows.append((seed, "ok", repr(result.metrics.final_catch_fraction), ""))
        console.info(f"seed {seed}: final catch fraction {result.metrics.final_catch_fraction:.3f}")

    with open(out / "seeds.csv", "w") as fh:
        fh.write("seed,status,final_catch_fraction,message\n")
        for seed, status, frac, msg in status_rows:
            fh.write(f"{seed},{status},{frac},{json.dumps(msg) if msg else ''}\n")
    failed = [r[0] for r in status_rows if r[1] != "ok"]
    artifacts = {"seeds_csv": str(out / "seeds.csv")}
    if curves:
        formats.write_aggregate(out / "catch_fraction_aggregate.csv", aggregate_curves(curves))
        artifacts["aggregate_csv"] = str(out / "catch_fraction_aggregate.csv")
    manifest.finish("failed" if failed else "complete", artifacts,
                    f"seeds failed: {failed}" if failed else None)
    console.result({"out": str(out), "seeds": seeds, "failed": failed})
    return EXIT_RUNTIME if failed else EXIT_OK


def cmd_bench(args, extra, console: Console) -> int:
    cfg = resolve_config(args, extra)
    b = cfg.bench
    sizes = parse_sizes(args.sizes if args.sizes is not None else b.sizes)
    modes = parse_modes(args.modes if args.modes is not None else b.modes)
    bcfg = BenchConfig(b.n_iterations, b.warmup, sizes, modes, cfg.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(out, cfg, "bench")
    report = run_bench(cfg, bcfg)
    write_report(report, out / "bench_report.csv")
    write_samples(report, out / "bench_samples.csv")
    (out / "bench_warnings.txt").write_text("".join(w + "\n" for w in report.warnings))
    for w in report.warnings:
        console.error(f"measurement quality: {w}")
    for r in report.rows:
        console.info(f"{r.mode:16s} {r.n_input}x{r.n_output}: median {r.median_s * 1e3:.3f} ms "
                     f"(p10 {r.p10_s * 1e3:.3f}, p90 {r.p90_s * 1e3:.3f})")
    manifest.finish("complete", {"report_csv": str(out / "bench_report.csv"),
                                 "samples_csv": str(out / "bench_samples.csv"),
                                 "warnings": str(out / "bench_warnings.txt")})
    console.result({"out": str(out), "rows": [vars(r) for r in report.rows],
                    "warnings": report.warnings})
    return EXIT_OK


def cmd_replay(args, extra, console: Console) -> int:
    if extra:
        raise UsageError(f"replay takes no overrides: {extra}")
    log = Path(args.log)
    if not log.is_file():
        raise ConfigurationError(f"log file not found: {log}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if log.suffix == ".csv":
        rows = formats.read_iterations_csv(log)
        rewards = [r["reward"] for r in rows]
        eval_every = args.eval_every
    else:
        records = formats.read_ndjson(log)
        final = records[-1]
        rewards = [r["reward"] for r in records if r["type"] == "iteration"]
        eval_every = final["eval_every"]
        catch = [(r["iteration"], r["catch_fraction"]) for r in records if r["type"] == "evaluation"]
        if not catch:
            catch = [(final["n_iterations"], final.get("final_catch_fraction", float("nan")))]
        formats.write_metrics(out, catch, formats.mean_reward_rows(rewards, eval_every),
                              formats.summary_items(final, catch))
        formats.write_heatmap(out / "weights_heatmap.csv", formats.weights_from_final(final))
        written += ["catch_fraction.csv", "summary.txt", "weights_heatmap.csv"]
    if log.suffix == ".csv":
        formats.write_reward_curve(out / "mean_reward.csv",
                                   formats.mean_reward_rows(rewards, eval_every))
    written.append("mean_reward.csv")
    window = args.window or eval_every
    formats.write_curve(out / "reward_moving_average.csv", ["iteration", "reward_ma"],
                        formats.reward_moving_average(rewards, window))
    written.append("reward_moving_average.csv")
    console.info(f"replayed {len(rewards)} iterations into {out}")
    console.result({"out": str(out), "files": sorted(written), "n_iterations": len(rewards)})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="INI config file or a run manifest.json")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--seed", type=int, help="experiment seed")
    common.add_argument("--iterations", type=int, help="number of learning iterations")
    common.add_argument("--quiet", action="store_true",
                        help="only machine-readable JSON on stdout")

    parser = _Parser(prog="pongsnn", description=__doc__.splitlines()[0],
                     epilog="Overrides: --section.key=value, e.g. --plasticity.eta=0.1")
    parser.add_argument("--version", action="version", version=f"pongsnn {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("run", parents=[common], help="train one network")
    p = sub.add_parser("sweep", parents=[common], help="independent runs over seeds")
    p.add_argument("--seeds", default="0-9", help="seed list, e.g. 0-9 or 1,3,5")
    p.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    p = sub.add_parser("bench", parents=[common], help="per-iteration timing")
    p.add_argument("--modes", help="comma list of no-plasticity, with-plasticity")
    p.add_argument("--sizes", help="comma list such as 32x32,64x64")
    p = sub.add_parser("replay", parents=[common], help="rebuild plot-ready CSVs from a log")
    p.add_argument("log", help="log.ndjson (full replay) or iterations.csv (reward curves only)")
    p.add_argument("--window", type=int, help="moving-average window (default: eval_every)")
    p.add_argument("--eval-every", type=int, default=ExperimentConfig().eval_every,
                   help="block size for CSV logs, which do not record it")
    return parser


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "bench": cmd_bench, "replay": cmd_replay}


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    console = Console("--quiet" in argv)
    parser = build_parser()
    try:
        args, extra = parser.parse_known_args(argv)
        return COMMANDS[args.command](args, extra, console)
    except UsageError as exc:
        console.error(str(exc))
        return EXIT_USAGE
    except (ConfigurationError, ParameterError) as exc:
        console.error(str(exc))
        return EXIT_USAGE
    except formats.LogFormatError as exc:
        console.error(str(exc))
        return EXIT_RUNTIME
    except Exception as exc:
        console.error(f"{type(exc).__name__}: {exc}")
        if not console.quiet:
            traceback.print_exc(file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
