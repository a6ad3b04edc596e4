"""Command-line interface.

Verbs: run, sweep, serve-prover, verify-client, selftest.
Exit codes: 0 success, 1 selftest failure, 2 configuration error,
3 simulation/transport error.
"""

from __future__ import annotations

import argparse
import os
import sys

from .adversary import AdversaryError
from .config import ConfigError, ExperimentConfig, load_config
from .cv import CVError
from .hypergraph import GraphError
from .io import json_line, transcript_record, verdict_line
from .qudit import DimensionError
from .verifier import ProtocolError

_SIM_ERRORS = (ProtocolError, GraphError, DimensionError, CVError, AdversaryError)
_CFG_ERRORS = (ConfigError, FileNotFoundError)


def _add_override_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="flat key=value configuration file")
    parser.add_argument("--n", type=int, help="vertex count per register")
    parser.add_argument("--d", type=int, help="qudit local dimension")
    parser.add_argument("--cv", action="store_true", help="continuous-variable mode")
    parser.add_argument("--c", type=float, help="confidence constant c")
    parser.add_argument("--epsilon", type=float, help="iid source noise rate")
    parser.add_argument(
        "--adversary", help="honest | iid | single_bad | scripted"
    )
    parser.add_argument("--trials", type=int, help="number of trials")
    parser.add_argument("--seed", type=int, help="64-bit experiment seed")
    parser.add_argument("--ntilde", type=int, help="number of target registers")
    parser.add_argument("--tau", type=float, help="CV pass tolerance")
    parser.add_argument("--graph", help="path | cycle | complete | cluster2d[:RxC] | file:PATH")
    parser.add_argument("--n-test", type=int, dest="n_test", help="tests per round")
    parser.add_argument("--n-total", type=int, dest="n_total", help="total registers")
    parser.add_argument(
        "--outcome-mode", dest="outcome_mode", choices=("sampled", "residual")
    )
    parser.add_argument("--record-raw", dest="record_raw", action="store_true", default=None)
    parser.add_argument("--strict", action="store_true", default=None)
    parser.add_argument("--out", help="output directory")


def _config_from_args(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.cv:
        cfg.mode = "cv"
    direct = (
        "n", "d", "c", "epsilon", "adversary", "trials", "seed", "ntilde",
        "graph", "n_test", "n_total", "outcome_mode", "record_raw", "strict", "out",
    )
    for name in direct:
        value = getattr(args, name, None)
        if value is not None:
            setattr(cfg, name, value)
    if args.tau is not None:
        cfg.tolerance_tau = args.tau
    return cfg


def _parse_grid(text: str, cast):
    try:
        return [cast(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"bad grid value list {text!r}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="graphcert",
        description="Statistical certification of graph states from single-site stabilizer tests",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p_run = sub.add_parser("run", help="run a Monte Carlo experiment")
    _add_override_flags(p_run)

    p_sweep = sub.add_parser("sweep", help="emit formula sweep tables")
    p_sweep.add_argument("--sweep-n", default="9,10,12,16,18,20", help="comma list of n")
    p_sweep.add_argument("--sweep-c", default="13,16,64,192", help="comma list of c")
    p_sweep.add_argument("--sweep-epsilon", default="0.0001,0.001,0.01", help="comma list of epsilon")
    p_sweep.add_argument("--sweep-ntilde", default="1", help="comma list of ntilde")
    p_sweep.add_argument("--out", default="out/sweep.csv", help="output CSV path")

    p_served = sub.add_parser("serve-prover", help="serve protocol sessions as the prover")
    _add_override_flags(p_served)
    p_served.add_argument("--endpoint", default="127.0.0.1:0", help="host:port to listen on")
    p_served.add_argument("--sessions", type=int, default=1, help="sessions to serve")

    p_client = sub.add_parser("verify-client", help="run the verifier against a remote prover")
    _add_override_flags(p_client)
    p_client.add_argument("--endpoint", required=True, help="host:port of the prover")
    p_client.add_argument("--trial", type=int, default=0, help="trial index to execute")

    sub.add_parser("selftest", help="run built-in sanity checks")

    args = parser.parse_args(argv)

    try:
        if args.verb == "run":
            from .runner import run_experiment

            cfg = _config_from_args(args)
            result = run_experiment(cfg)
            print(json_line(result.summary))
            return 0
        if args.verb == "sweep":
            from .runner import emit_sweep

            rows = emit_sweep(
                _parse_grid(args.sweep_n, int),
                _parse_grid(args.sweep_c, float),
                _parse_grid(args.sweep_epsilon, float),
                _parse_grid(args.sweep_ntilde, int),
                args.out,
            )
            print(f"wrote {len(rows)} rows to {args.out}")
            return 0
        if args.verb == "serve-prover":
            from .wire import serve_prover

            cfg = _config_from_args(args)
            verdicts = serve_prover(cfg, args.endpoint, args.sessions)
            for v in verdicts:
                print(v)
            return 0
        if args.verb == "verify-client":
            from .wire import run_verifier_client

            cfg = _config_from_args(args)
            transcript, verdict, stats = run_verifier_client(
                cfg, args.endpoint, args.trial, record_raw=cfg.record_raw
            )
            line = verdict_line(verdict)
            if cfg.out:
                os.makedirs(cfg.out, exist_ok=True)
                path = os.path.join(cfg.out, f"wire_verdict_{args.trial}.jsonl")
                with open(path, "w", encoding="utf-8") as fh:
                    fh.write(line + "\n")
                    if cfg.record_raw:
                        fh.write(json_line(transcript_record(transcript)) + "\n")
            print(line)
            print(
                f"# outcome memory high-water: {stats.outcome_highwater} values "
                f"({stats.frames_sent} frames sent, {stats.frames_received} received)",
                file=sys.stderr,
            )
            return 0
        if args.verb == "selftest":
            from .runner import selftest

            return 0 if selftest() else 1
    except _CFG_ERRORS as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except _SIM_ERRORS as exc:
        print(f"simulation error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # transport and unexpected failures
        from .wire import WireProtocolError

        if isinstance(exc, (WireProtocolError, OSError, TimeoutError)):
            print(f"transport error: {exc}", file=sys.stderr)
            return 3
        raise
    return 0


if __name__ == "__main__":
    sys.exit(main())
