"""Operator entry points: simulate, synth, serve-env.

Every simulate/synth run directory gets a manifest recording the invocation
and input/output checksums so runs can be reproduced byte-identically.
Exit codes: 0 ok, 2 configuration/schema problem, 3 scheduling failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path

from . import __version__
from .engine import Engine, SimConfig, SimSummary
from .errors import ConfigError, SchedulerViolation, StarvationGuard
from .power import load_carbon_intensity
from .rlenv import load_scenario, serve_stdio, serve_tcp
from .workload import SynthParams, generate_synthetic, load_trace_dir, write_trace
from .cluster import load_cluster

POWER_HISTORY_HEADER = ["time_s", "it_power_w", "facility_power_w", "loss_w",
                        "util_fraction", "running_jobs", "queued_jobs"]
JOBS_HEADER = ["job_id", "submit_time_s", "start_time_s", "end_time_s",
               "wait_s", "run_s", "slowdown"]


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_manifest(out_dir: Path, command: str, argv: list[str],
                    inputs: list[Path], outputs: list[Path]) -> None:
    manifest = {
        "command": command,
        "argv": argv,
        "version": __version__,
        "inputs": {str(p): _sha256(p) for p in inputs if p.is_file()},
        "outputs": {p.name: _sha256(p) for p in outputs},
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def _write_outputs(out_dir: Path, summary: SimSummary) -> list[Path]:
    summary_path = out_dir / "summary.json"
    summary_path.write_text(json.dumps(summary.to_dict(), indent=2) + "\n")
    history_path = out_dir / "power_history.csv"
    with open(history_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(POWER_HISTORY_HEADER)
        for step in summary.history:
            writer.writerow([_fmt(step.clock_s), _fmt(step.it_power_w),
                             _fmt(step.facility_power_w), _fmt(step.loss_w),
                             _fmt(step.util_fraction), step.running_jobs, step.queued_jobs])
    jobs_path = out_dir / "jobs.csv"
    with open(jobs_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(JOBS_HEADER)
        for job in summary.job_stats:
            writer.writerow([job.job_id, _fmt(job.submit_time_s), _fmt(job.start_time_s),
                             _fmt(job.end_time_s), _fmt(job.wait_s), _fmt(job.run_s),
                             _fmt(job.slowdown)])
    return [summary_path, history_path, jobs_path]


def cmd_simulate(args, argv: list[str]) -> int:
    if bool(args.trace) == bool(args.synth_params):
        raise ConfigError("simulate: exactly one of --trace or --synth-params is required")
    cluster = load_cluster(args.cluster)
    inputs = [Path(args.cluster)]
    if args.trace:
        jobs = load_trace_dir(args.trace)
        inputs.append(Path(args.trace) / "jobs.csv")
    else:
        params = SynthParams.from_json(args.synth_params)
        jobs = generate_synthetic(params, seed=args.seed)
        inputs.append(Path(args.synth_params))
    config = SimConfig(
        delta_s=args.delta,
        mode=args.mode,
        scheduler=args.scheduler,
        horizon_s=args.horizon,
        carbon=load_carbon_intensity(args.carbon),
        seed=args.seed,
    )
    summary = Engine(jobs, cluster, config).run()
    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = _write_outputs(out_dir, summary)
    if args.carbon is not None and Path(str(args.carbon)).is_file():
        inputs.append(Path(str(args.carbon)))
    _write_manifest(out_dir, "simulate", argv, inputs, outputs)
    print(f"simulated {summary.steps} steps, {summary.metrics.jobs_finished} jobs finished "
          f"-> {out_dir}")
    return 0


def cmd_synth(args, argv: list[str]) -> int:
    params = SynthParams.from_json(args.params)
    records = generate_synthetic(params, seed=args.seed)
    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_trace(records, out_dir)
    outputs = [out_dir / "jobs.csv"] + sorted((out_dir / "telemetry").glob("*.csv"))
    _write_manifest(out_dir, "synth", argv, [Path(args.params)], outputs)
    print(f"wrote {len(records)} synthetic jobs -> {out_dir}")
    return 0


def cmd_serve_env(args, argv: list[str]) -> int:
    scenario = load_scenario(args.scenario) if args.scenario else None
    base_dir = Path(args.scenario).parent if args.scenario else None
    if scenario is not None:
        from .rlenv import SchedulingEnv
        print(json.dumps({"spec": SchedulingEnv(scenario).spec_payload()}), file=sys.stderr)
    if args.stdio:
        serve_stdio(scenario, base_dir=base_dir)
        return 0
    server = serve_tcp(scenario, args.port, base_dir=base_dir)
    host, port = server.server_address[:2]
    print(f"listening on {host}:{port}", file=sys.stderr, flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="clustersim",
                                     description="Cluster power/scheduling simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a replay or reschedule simulation")
    sim.add_argument("--cluster", required=True, help="cluster config JSON")
    sim.add_argument("--trace", help="trace directory (jobs.csv + telemetry/)")
    sim.add_argument("--synth-params", help="synthetic workload params JSON")
    sim.add_argument("--mode", choices=["replay", "reschedule"], default="reschedule")
    sim.add_argument("--scheduler", choices=["replay", "fcfs", "easy"], default="fcfs")
    sim.add_argument("--delta", type=float, default=1.0, help="time delta in seconds")
    sim.add_argument("--horizon", type=float, default=None, help="stop after this many seconds")
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--carbon", default=0.0,
                     help="carbon intensity: gCO2/kWh constant or CSV path")
    sim.add_argument("--output", required=True, help="output directory")
    sim.set_defaults(func=cmd_simulate)

    synth = sub.add_parser("synth", help="generate a synthetic workload trace")
    synth.add_argument("--params", required=True, help="SynthParams JSON")
    synth.add_argument("--seed", type=int, default=None, help="overrides params.seed")
    synth.add_argument("--output", required=True, help="output trace directory")
    synth.set_defaults(func=cmd_synth)

    serve = sub.add_parser("serve-env", help="serve the RL environment protocol")
    serve.add_argument("--scenario", help="scenario JSON (cluster + workload + rl config)")
    transport = serve.add_mutually_exclusive_group(required=True)
    transport.add_argument("--stdio", action="store_true", help="serve one session on stdio")
    transport.add_argument("--port", type=int, help="serve TCP on this port (0 = ephemeral)")
    serve.set_defaults(func=cmd_serve_env)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SchedulerViolation, StarvationGuard) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
