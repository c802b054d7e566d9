"""Command-line entry point: ``fedsel <subcommand>``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path
from typing import List, Optional

from .devices import DeviceProfile
from .orchestrator.bench import BENCH_STRATEGIES, run_bandit_bench
from .orchestrator.config import ExperimentConfig
from .orchestrator.engine import ExperimentResult, SeedRun, run_experiment, write_outputs
from .orchestrator.scenarios import scenario_table2

logger = logging.getLogger("fedsel")

STRATEGIES = ["random", "linucb", "neuralucb_s", "neuralucb_m", "resource_aware"]


def _address(text: str):
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise argparse.ArgumentTypeError(f"expected HOST:PORT, got {text!r}")
    return host, int(port)


def _config(args) -> ExperimentConfig:
    data = json.loads(Path(args.config).read_text()) if args.config else {}
    for key in ("fleet", "rounds", "k", "strategy", "aggregation"):
        val = getattr(args, key, None)
        if val is not None:
            data[key] = val
    if getattr(args, "seed", None) is not None:
        data["seeds"] = [args.seed]
    return ExperimentConfig.model_validate(data)


def _dump(obj) -> str:
    # json cannot carry inf; spell it out
    def clean(x):
        if isinstance(x, float) and (math.isinf(x) or math.isnan(x)):
            return str(x)
        if isinstance(x, dict):
            return {k: clean(v) for k, v in x.items()}
        if isinstance(x, list):
            return [clean(v) for v in x]
        return x

    return json.dumps(clean(obj), indent=2, sort_keys=True)


def cmd_simulate(args) -> int:
    cfg = _config(args)
    result = run_experiment(cfg, args.out_dir)
    print(_dump(result.summary()["mean"]))
    if args.out_dir:
        logger.info("outputs written to %s", args.out_dir)
    return 0


def cmd_server(args) -> int:
    from .protocol.server import ServerOptions, run_server

    cfg = _config(args)
    host, port = args.listen
    seed = cfg.seeds[0]

    def ready(addr):
        print(f"listening on {addr[0]}:{addr[1]}", flush=True)

    server = run_server(cfg, seed, ServerOptions(host=host, port=port, context_timeout=args.context_timeout), ready)
    if args.out_dir:
        coord = server.coordinator
        run = SeedRun(seed, coord.initial_error, server.reports, dict(coord.selection_counts))
        write_outputs(ExperimentResult(cfg, [run]), args.out_dir)
    last = server.reports[-1] if server.reports else None
    print(_dump({"rounds": len(server.reports), "hung": server.hung, "final_error": last.global_error if last else None}))
    return 0


def cmd_client(args) -> int:
    from .protocol.client import run_client

    if args.profile:
        profile = DeviceProfile.model_validate_json(Path(args.profile).read_text())
    else:
        cfg = _config(args)
        matches = [p for p in cfg.resolve_fleet().profiles if p.device_id == args.device_id]
        if not matches:
            print(f"device {args.device_id!r} not in fleet", file=sys.stderr)
            return 2
        profile = matches[0]
    host, port = args.server
    outcomes = run_client(
        profile, args.seed if args.seed is not None else 0, host, port, local_lr=args.lr, wall_time_scale=args.wall_time_scale,
        checkpoint_dir=args.checkpoint_dir,
    )
    for o in outcomes:
        print(json.dumps(o.__dict__))
    return 0


def cmd_scenario(args) -> int:
    record = scenario_table2(args.id, args.strategy, args.paper_fidelity, args.seed or 0)
    text = _dump(record)
    print(text)
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"scenario{args.id}_{args.strategy}.json").write_text(text)
    return 0


def cmd_bandit_bench(args) -> int:
    seeds = [args.seed] if args.seed is not None else list(range(args.n_seeds))
    results = run_bandit_bench(args.rounds, seeds, args.strategies, args.out_dir)
    print(_dump({name: b.summary() for name, b in results.items()}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fedsel", description=__doc__)
    p.add_argument("--log-level", default="WARNING")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, overrides=True):
        sp.add_argument("--config", help="experiment config JSON")
        sp.add_argument("--seed", type=int, help="single seed (replaces the config seed list)")
        sp.add_argument("--out-dir", help="directory for CSV and JSON outputs")
        if overrides:
            sp.add_argument("--fleet", help="built-in fleet name or fleet JSON path")
            sp.add_argument("--rounds", type=int)
            sp.add_argument("--k", type=int)
            sp.add_argument("--strategy", choices=STRATEGIES)
            sp.add_argument("--aggregation", choices=["fedavg", "wer_softmax"])

    sp = sub.add_parser("simulate", help="in-process experiment")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("server", help="socket-mode round server")
    common(sp)
    sp.add_argument("--listen", type=_address, default=("127.0.0.1", 7070), help="HOST:PORT")
    sp.add_argument("--context-timeout", type=float, default=30.0)
    sp.set_defaults(func=cmd_server)

    sp = sub.add_parser("client", help="socket-mode simulated device")
    common(sp)
    sp.add_argument("--server", type=_address, required=True, help="HOST:PORT")
    who = sp.add_mutually_exclusive_group(required=True)
    who.add_argument("--profile", help="device profile JSON")
    who.add_argument("--device-id", help="device id from the config's fleet")
    sp.add_argument("--lr", type=float, default=0.1)
    sp.add_argument("--wall-time-scale", type=float, default=0.0)
    sp.add_argument("--checkpoint-dir")
    sp.set_defaults(func=cmd_client)

    sp = sub.add_parser("scenario", help="single-round straggler scenario audit")
    common(sp, overrides=False)
    sp.add_argument("--id", type=int, choices=[1, 2], required=True)
    sp.add_argument("--strategy", choices=["resource_aware", "random"], default="resource_aware")
    fid = sp.add_mutually_exclusive_group()
    fid.add_argument("--paper-fidelity", dest="paper_fidelity", action="store_true", default=None)
    fid.add_argument("--no-paper-fidelity", dest="paper_fidelity", action="store_false")
    sp.set_defaults(func=cmd_scenario)

    sp = sub.add_parser("bandit-bench", help="estimator MSE and regret comparison")
    common(sp, overrides=False)
    sp.add_argument("--rounds", type=int, default=475)
    sp.add_argument("--n-seeds", type=int, default=5)
    sp.add_argument("--strategies", nargs="+", choices=list(BENCH_STRATEGIES), default=list(BENCH_STRATEGIES))
    sp.set_defaults(func=cmd_bandit_bench)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level.upper(), logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ValueError as exc:  # includes pydantic ValidationError
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
