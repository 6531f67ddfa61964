"""Command-line entry point.

Exit codes: 0 ok, 2 config error, 3 I/O error, 4 harness failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import multiprocessing
import sys
from pathlib import Path
from typing import Optional

from . import bench as bench_mod
from . import config as config_mod
from . import cost_model as cm
from . import simulator as sim
from .codec import CODEC_NAMES, get_codec
from .cost_model import ConfigError
from .svg import emit_svg

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_HARNESS = 0, 2, 3, 4

log = logging.getLogger("homcomp")


class OutputError(Exception):
    pass


def _write(path: Optional[str], text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from None


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _addr(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected HOST:PORT, got {text!r}")
    try:
        return host or "127.0.0.1", int(port)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad port in {text!r}") from None


# -- shared options --

def _model_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config (defaults: alexnet_like.json)")
    g = p.add_argument_group("cluster overrides")
    g.add_argument("--workers", "-M", type=int)
    g.add_argument("--minibatch-time", type=float, help="C, seconds per single-node minibatch")
    g.add_argument("--iterations", type=int, help="i, minibatch iterations per global update")
    g.add_argument("--weight-bytes", type=float, help="W")
    g.add_argument("--bandwidth", type=float, help="chi, bytes/s")
    g.add_argument("--minibatch", type=int, help="B")
    g = p.add_argument_group("strategy/profile overrides")
    g.add_argument("--strategy", choices=[s.value for s in cm.Strategy])
    g.add_argument("--rho", type=float, help="compressed/original size ratio")
    g.add_argument("--compression-ratio", type=float, help="original/compressed (e.g. 1.079)")
    g.add_argument("--h", type=float, help="compressed-op overhead")
    g.add_argument("--compress-s", type=float)
    g.add_argument("--decompress-s", type=float)
    g.add_argument("--m-limit", type=int)
    g.add_argument("--updates", type=int)


def _overrides(args) -> dict:
    out: dict = {}
    cluster = {k: getattr(args, k) for k in
               ("workers", "minibatch_time", "iterations", "weight_bytes", "bandwidth", "minibatch")
               if getattr(args, k, None) is not None}
    if cluster:
        if "weight_bytes" in cluster and float(cluster["weight_bytes"]).is_integer():
            cluster["weight_bytes"] = int(cluster["weight_bytes"])
        out["cluster"] = cluster
    profile = {k: getattr(args, k) for k in
               ("rho", "compression_ratio", "h", "compress_s", "decompress_s")
               if getattr(args, k, None) is not None}
    if profile:
        out["profile"] = profile
    if getattr(args, "strategy", None):
        out["strategy"] = args.strategy
    for key in ("m_limit", "updates"):
        if getattr(args, key, None) is not None:
            out[key] = getattr(args, key)
    return out


def _load(args, extra: Optional[dict] = None) -> config_mod.RunConfig:
    over = _overrides(args)
    if extra:
        over = config_mod.merge(over, extra) if over else extra
    return config_mod.load(args.config, over)


# -- subcommands --

def cmd_model(args) -> int:
    rc = _load(args)
    cfg, strat, prof = rc.cluster, rc.strategy, rc.profile
    if strat is cm.Strategy.VANILLA:
        prof = None
    p = cm.update_time(cfg, strat, prof)
    m_opt, s_opt = cm.optimal_workers(cfg, strat, prof, rc.m_limit)
    total, _ = sim.simulate_training(cfg, strat, prof, rc.updates)
    result = {
        "strategy": strat.value,
        "workers": cfg.workers,
        "t_cmt": p.t_cmt,
        "t_tnf": p.t_tnf,
        "t_update": p.t_update,
        "speedup": cfg.update_compute / p.t_update,
        "crossover_workers": cm.crossover_workers(cfg),
        "optimal_workers": m_opt,
        "optimal_speedup": s_opt,
        "updates": rc.updates,
        "training_total_s": total,
        "phases": p.phases(),
    }
    rows = [
        ("strategy", strat.value),
        ("workers M", str(cfg.workers)),
        ("T_cmt [s]", f"{p.t_cmt:.4f}"),
        ("T_tnf [s]", f"{p.t_tnf:.4f}"),
        ("T_update [s]", f"{p.t_update:.4f}"),
        ("speedup", f"{result['speedup']:.4f}"),
        ("crossover M", str(result["crossover_workers"])),
        (f"optimal M (<= {rc.m_limit})", f"{m_opt} (speedup {s_opt:.4f})"),
        (f"total over {rc.updates} updates [s]", f"{total:.4f}"),
    ]
    width = max(len(k) for k, _ in rows)
    _write(None, "".join(f"{k.ljust(width)}  {v}\n" for k, v in rows))
    if args.json:
        _write(args.json, _dump({"config": rc.resolved(), "result": result}))
    return EXIT_OK


def cmd_sweep(args) -> int:
    extra: dict = {}
    sweep = {}
    if args.m_max is not None:
        sweep["m_max"] = args.m_max
    if args.m_min is not None:
        sweep["m_min"] = args.m_min
    if args.h_list:
        sweep["h"] = args.h_list
    if args.rho_list:
        sweep["rho"] = args.rho_list
    if sweep:
        extra["sweep"] = sweep
    rc = _load(args, extra)
    cfg = rc.cluster
    if args.kind == "workers":
        prof = None if rc.strategy is cm.Strategy.VANILLA else rc.profile
        data = sim.sweep_workers(cfg, rc.strategy, prof, rc.workers_range)
        csv = data.to_csv()
    elif args.kind == "hrho":
        data = sim.sweep_h_rho(cfg, rc.h_list, rc.rho_list)
        csv = data.to_csv()
    else:
        data = sim.compare_curves(cfg, rc.workers_range, rc.rho_list)
        csv = sim.compare_to_csv(data)
    _write(args.out or rc.output_path, csv)
    if args.svg:
        try:
            emit_svg(data, args.svg)
        except OSError as exc:
            raise OutputError(f"cannot write {args.svg}: {exc.strerror or exc}") from None
    if args.json:
        _write(args.json, _dump({"config": rc.resolved(), "kind": args.kind, "csv": csv}))
    return EXIT_OK


def cmd_frontier(args) -> int:
    extra = {}
    front = {}
    if args.r is not None:
        front["r"] = args.r
    if args.rho_list:
        front["rho"] = args.rho_list
    if front:
        extra["frontier"] = front
    rc = _load(args, extra)
    points = [cm.frontier_h_max(rc.cluster, rho, rc.r) for rho in rc.frontier_rho]
    budget = cm.budget_time(rc.cluster, rc.r)
    lines = [f"M={rc.cluster.workers}  r={rc.r:g}  budget (C_u/M)*r = {budget:.4f}s",
             "rho       h_max      feasible"]
    lines += [f"{p.rho:<8g}  {p.h_max:<9.4f}  {'yes' if p.feasible else 'no'}" for p in points]
    _write(None, "\n".join(lines) + "\n")
    if args.json:
        _write(args.json, _dump({
            "config": rc.resolved(),
            "budget_s": budget,
            "points": [{"rho": p.rho, "h_max": p.h_max, "r": p.r, "feasible": p.feasible}
                       for p in points],
        }))
    return EXIT_OK


def cmd_bench(args) -> int:
    try:
        spec = bench_mod.BenchSpec(blob_bytes=args.blob_bytes, distribution=args.distribution,
                                   seed=args.seed, repeats=args.repeats)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    blob = bench_mod.make_synthetic_weights(spec)
    rows = [bench_mod.bench_codec(get_codec(name), spec, blob) for name in args.codec]
    _write(None, bench_mod.format_table(rows))
    if args.json:
        profiles = {s.codec: bench_mod.profile_from_stats(s, args.h).to_dict() for s in rows}
        _write(args.json, _dump({
            "spec": {"blob_bytes": spec.blob_bytes, "distribution": spec.distribution.value,
                     "seed": spec.seed, "repeats": spec.repeats},
            "stats": [s.to_dict() for s in rows],
            "profiles": profiles,
        }))
    return EXIT_OK


def _harness_cluster(args) -> cm.ClusterConfig:
    over = {"cluster": {"workers": args.workers}}
    if args.weight_bytes is not None:
        over["cluster"]["weight_bytes"] = int(args.weight_bytes)
    if args.chi_bytes_per_sec is not None:
        over["cluster"]["bandwidth"] = args.chi_bytes_per_sec
    minibatch = max(args.workers, 256)
    over["cluster"]["minibatch"] = minibatch
    return config_mod.load(args.config, over).cluster


def _worker_process(addr, wid, cfg, codec_name, rounds, seed, compute_s, chi, timeout_s, queue):
    from .harness import HarnessError, run_worker
    try:
        run_worker(addr, wid, cfg, get_codec(codec_name), rounds, seed=seed,
                   compute_s=compute_s, chi=chi, timeout_s=timeout_s)
        queue.put((wid, None))
    except HarnessError as exc:
        queue.put((wid, str(exc)))


def cmd_serve(args) -> int:
    from .harness import ParameterServer
    cfg = _harness_cluster(args)
    codec = get_codec(args.codec)
    server = ParameterServer(args.bind, cfg, codec, args.rounds, chi=args.chi_bytes_per_sec,
                             per_link=args.per_link, timeout_s=args.timeout_s)
    host, port = server.address
    print(f"listening on {host}:{port} for {cfg.workers} workers", file=sys.stderr, flush=True)
    procs = []
    queue = None
    if args.spawn_local:
        ctx = multiprocessing.get_context("spawn")
        queue = ctx.Queue()
        compute = args.compute_ms / 1000 if args.compute_ms is not None else None
        chi = args.chi_bytes_per_sec if args.per_link else None
        for wid in range(cfg.workers):
            p = ctx.Process(target=_worker_process,
                            args=((host, port), wid, cfg, args.codec, args.rounds, args.seed,
                                  compute, chi, args.timeout_s, queue))
            p.start()
            procs.append(p)
    try:
        report = server.serve()
    finally:
        for p in procs:
            p.join(args.timeout_s)
    failures = []
    while queue is not None and not queue.empty():
        wid, err = queue.get()
        if err:
            failures.append(f"worker {wid}: {err}")
    if failures:
        raise _HarnessFailure("; ".join(failures))
    out = report.to_dict()
    lines = [f"round {r['round']}: push {r['push_s']:.3f}s  aggregate {r['aggregate_s']:.3f}s  "
             f"broadcast {r['broadcast_s']:.3f}s  transfer {r['transfer_s']:.3f}s"
             for r in out["rounds"]]
    if report.chi:
        lines.append(f"modeled t_tnf {report.modeled_t_tnf:.3f}s  measured "
                     f"{report.measured_t_tnf:.3f}s  relative error {report.relative_error:.3f}")
    _write(None, "\n".join(lines) + "\n")
    if args.json:
        _write(args.json, _dump({"config": {"cluster": cfg.to_dict(), "codec": args.codec,
                                            "rounds": args.rounds,
                                            "chi": args.chi_bytes_per_sec,
                                            "per_link": args.per_link},
                                 "report": out}))
    return EXIT_OK


def cmd_worker(args) -> int:
    from .harness import run_worker
    cfg = _harness_cluster(args)
    compute = args.compute_ms / 1000 if args.compute_ms is not None else None
    res = run_worker(args.connect, args.worker_id, cfg, get_codec(args.codec), args.rounds,
                     seed=args.seed, compute_s=compute,
                     chi=args.chi_bytes_per_sec if args.per_link else None,
                     timeout_s=args.timeout_s)
    for t in res.timings:
        print(f"round {t.round}: compute {t.compute_s:.3f}s  encode {t.encode_s:.3f}s  "
              f"push {t.push_s:.3f}s  wait {t.wait_s:.3f}s  decode {t.decode_s:.3f}s")
    if args.json:
        _write(args.json, _dump(res.to_dict()))
    return EXIT_OK


class _HarnessFailure(Exception):
    pass


def _harness_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config")
    p.add_argument("--workers", type=int, default=4)
    p.add_argument("--rounds", type=int, default=3)
    p.add_argument("--codec", choices=CODEC_NAMES, default="identity")
    p.add_argument("--chi-bytes-per-sec", type=float, help="emulated link rate (default: unlimited)")
    p.add_argument("--weight-bytes", type=float, default=10_000_000)
    p.add_argument("--compute-ms", type=float, help="injected compute per round (default i*C/M)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--timeout-s", type=float, default=30.0)
    p.add_argument("--per-link", action="store_true",
                   help="throttle each connection separately instead of one shared link")
    p.add_argument("--json", help="write the report as JSON")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="homcomp", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("model", help="closed-form per-update times, speedup, crossover/optimum")
    _model_options(p)
    p.add_argument("--json")
    p.set_defaults(func=cmd_model)

    p = sub.add_parser("sweep", help="worker / h-rho sweeps as CSV (+ SVG)")
    _model_options(p)
    p.add_argument("--kind", choices=("workers", "hrho", "compare"), default="workers")
    p.add_argument("--m-min", type=int)
    p.add_argument("--m-max", type=int)
    p.add_argument("--h-list", type=float, nargs="+")
    p.add_argument("--rho-list", type=float, nargs="+")
    p.add_argument("--out", "-o", help="CSV path (default: stdout)")
    p.add_argument("--svg")
    p.add_argument("--json")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("frontier", help="largest feasible h per rho for a budget (C_u/M)*r")
    _model_options(p)
    p.add_argument("--r", type=float)
    p.add_argument("--rho-list", type=float, nargs="+")
    p.add_argument("--json")
    p.set_defaults(func=cmd_frontier)

    p = sub.add_parser("bench", help="codec timings on a synthetic weight blob")
    p.add_argument("--codec", choices=CODEC_NAMES, nargs="+", default=["deflate"])
    p.add_argument("--blob-bytes", type=int, default=bench_mod.DEFAULT_BLOB_BYTES)
    p.add_argument("--distribution", choices=[d.value for d in bench_mod.Distribution],
                   default="structured")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--h", type=float, default=1.0, help="h for the emitted cost-model profiles")
    p.add_argument("--json")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("serve", help="run the parameter server")
    _harness_options(p)
    p.add_argument("--bind", type=_addr, default=("127.0.0.1", 5555))
    p.add_argument("--spawn-local", action="store_true",
                   help="also launch the M workers as local processes")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("worker", help="run one worker")
    _harness_options(p)
    p.add_argument("--connect", type=_addr, default=("127.0.0.1", 5555))
    p.add_argument("--worker-id", type=int, required=True)
    p.set_defaults(func=cmd_worker)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    from .harness import HarnessError
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OutputError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (HarnessError, _HarnessFailure) as exc:
        print(f"harness failure: {exc}", file=sys.stderr)
        return EXIT_HARNESS
    except OSError as exc:
        if args.command in ("serve", "worker"):
            print(f"harness failure: {exc}", file=sys.stderr)
            return EXIT_HARNESS
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
