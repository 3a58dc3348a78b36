"""``mtgnn`` command line: train, eval, forecast, export-graph, gradcheck, synth.

Exit codes: 0 success, 1 verification failure, 2 usage or config error,
3 runtime or data error (including corrupt checkpoints and divergence).
"""
import argparse
import logging
import os
import sys
from pathlib import Path

from threadpoolctl import threadpool_limits

from .config import RunConfig
from .data import load_csv
from .estimator import MTGNNForecaster
from .exceptions import CheckpointError, ConfigError, MissingInputError, MtgnnError, TrainingError
from .gradcheck import CASES, run_gradcheck
from .metrics import MetricReport
from .synth import make_synthetic, write_synthetic

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _require_file(path, what):
    if path is None:
        raise UsageError(f"--{what} is required")
    if not Path(path).is_file():
        raise UsageError(f"{what} file not found: {path}")
    return Path(path)


def _load_series(path, data_cfg=None):
    delim = None if data_cfg is None or data_cfg.delimiter == "auto" else data_cfg.delimiter
    policy = "reject" if data_cfg is None else data_cfg.nan_policy
    return load_csv(path, delimiter=delim, nan_policy=policy).values


def _out_dir(args):
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _print_report(rep, split):
    print(MetricReport.csv_header())
    print(rep.csv_line())
    print(f"\n{split} metrics")
    print(rep.table())


# ---------------------------------------------------------------- commands


def cmd_train(args):
    rc = RunConfig.load(args.config, args.override)
    if args.seed is not None:
        rc.train.seed = args.seed
        rc.explicit.add("seed")
    data = _require_file(args.data, "data")
    series = _load_series(data, rc.data)
    rc.fit_to_data(series.shape[1])
    out = _out_dir(args)
    ckpt = Path(args.checkpoint) if args.checkpoint else out / "model.ckpt"
    est = MTGNNForecaster.from_run_config(rc)
    log_path = out / "train_log.csv"
    with open(log_path, "w") as fh:
        est.fit(series, log_file=fh)
    est.save(ckpt)
    ds = est.dataset_
    lo, hi = ds.splits["test"]
    print(f"checkpoint: {ckpt}\nlog: {log_path}")
    if hi > lo:
        rep = est.evaluate(series, "test")
        (out / "test_metrics.csv").write_text(MetricReport.csv_header() + "\n" + rep.csv_line() + "\n")
        _print_report(rep, "test")
    else:
        print("test split is empty; no test metrics")
    return EXIT_OK


def cmd_eval(args):
    ckpt = _require_file(args.checkpoint, "checkpoint")
    data = _require_file(args.data, "data")
    est = MTGNNForecaster.load(ckpt)
    rep = est.evaluate(_load_series(data, est.config_.data), args.split)
    _print_report(rep, args.split)
    return EXIT_OK


def cmd_forecast(args):
    ckpt = _require_file(args.checkpoint, "checkpoint")
    data = _require_file(args.data, "data")
    est = MTGNNForecaster.load(ckpt)
    series = _load_series(data, est.config_.data)
    end = len(series) if args.end is None else args.end
    pred = est.forecast(series, end)
    d = est.config_.data
    # row offsets of each forecast step after the window end
    offsets = [d.horizon - 1] if d.horizon_mode == "single" else list(range(pred.shape[0]))
    truth_rows = [end + o for o in offsets]
    has_truth = all(r < len(series) for r in truth_rows)
    out = _out_dir(args)
    path = out / "forecast.csv"
    with open(path, "w") as fh:
        fh.write("step,node,prediction" + (",truth" if has_truth else "") + "\n")
        for q, o in enumerate(offsets):
            for n in range(pred.shape[1]):
                line = f"{o + 1},{n},{pred[q, n]:.10g}"
                if has_truth:
                    line += f",{series[truth_rows[q], n]:.10g}"
                fh.write(line + "\n")
    print(f"forecast: {path}")
    return EXIT_OK


def cmd_export_graph(args):
    ckpt = _require_file(args.checkpoint, "checkpoint")
    est = MTGNNForecaster.load(ckpt)
    adj = est.adjacency_
    if adj is None:
        raise UsageError("this checkpoint has no static learned graph (graph convolution off or dynamic mode)")
    out = _out_dir(args)
    adj.export(out / "adjacency.csv", out / "edges.csv")
    top = adj.k if args.top is None else args.top
    with open(out / "neighbors.csv", "w") as fh:
        fh.write("node,rank,neighbor,weight\n")
        for u in range(adj.num_nodes):
            for rank, (v, w) in enumerate(adj.top_neighbors(u, top), start=1):
                fh.write(f"{u},{rank},{v},{w:.12g}\n")
    print(f"adjacency: {out / 'adjacency.csv'}\nedges: {out / 'edges.csv'}\nneighbors: {out / 'neighbors.csv'}")
    if args.node is not None:
        if not 0 <= args.node < adj.num_nodes:
            raise UsageError(f"--node must be in [0, {adj.num_nodes})")
        print(f"top {top} neighbors of node {args.node}")
        print("rank,neighbor,weight")
        for rank, (v, w) in enumerate(adj.top_neighbors(args.node, top), start=1):
            print(f"{rank},{v},{w:.6g}")
    return EXIT_OK


def cmd_gradcheck(args):
    ops = args.op or None
    if ops:
        unknown = [o for o in ops if o not in CASES]
        if unknown:
            raise UsageError(f"unknown op(s) {unknown}; choose from {', '.join(CASES)}")
    seed = 0 if args.seed is None else args.seed
    results = run_gradcheck(ops, instances=args.instances, seed=seed)
    width = max(len(k) for k in results)
    print(f"{'op':<{width}}  max_rel_err  status")
    failed = []
    for name, err in results.items():
        ok = err <= args.tol
        if not ok:
            failed.append(name)
        print(f"{name:<{width}}  {err:.3e}    {'ok' if ok else 'FAIL'}")
    if failed:
        print(f"gradient check failed (tol {args.tol:g}): {', '.join(failed)}", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def cmd_synth(args):
    seed = 0 if args.seed is None else args.seed
    series, edges = make_synthetic(args.nodes, args.edges, args.lag, args.noise, args.length, seed)
    s, e = write_synthetic(_out_dir(args), series, edges)
    print(f"series: {s}\nedges: {e}")
    return EXIT_OK


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "forecast": cmd_forecast,
            "export-graph": cmd_export_graph, "gradcheck": cmd_gradcheck, "synth": cmd_synth}


def build_parser():
    p = argparse.ArgumentParser(prog="mtgnn", description="Graph-learning multivariate forecaster.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=False, data=False, checkpoint=False, out=False):
        if config:
            sp.add_argument("--config", help="flat 'key = value' config file")
            sp.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                            help="config override, repeatable; wins over --config")
        if data:
            sp.add_argument("--data", help="delimiter-separated series, one row per time step")
        if checkpoint:
            sp.add_argument("--checkpoint", help="checkpoint path")
        if out:
            sp.add_argument("--out-dir", default=".", help="directory for output files")
        sp.add_argument("--seed", type=int, help="random seed")

    common(sub.add_parser("train", help="train a model"), config=True, data=True, checkpoint=True, out=True)
    sp = sub.add_parser("eval", help="metrics of a checkpoint on one split")
    common(sp, data=True, checkpoint=True)
    sp.add_argument("--split", choices=("train", "valid", "test"), default="test")
    sp = sub.add_parser("forecast", help="forecast from one window")
    common(sp, data=True, checkpoint=True, out=True)
    sp.add_argument("--end", type=int, help="window ends before this row (default: end of data)")
    sp = sub.add_parser("export-graph", help="write the learned adjacency")
    common(sp, checkpoint=True, out=True)
    sp.add_argument("--top", type=int, help="neighbors per node in neighbors.csv (default: k)")
    sp.add_argument("--node", type=int, help="also print the top neighbors of this node")
    sp = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    common(sp)
    sp.add_argument("--op", action="append", help="restrict to this op, repeatable")
    sp.add_argument("--tol", type=float, default=1e-4, help="max relative error (default 1e-4)")
    sp.add_argument("--instances", type=int, default=20, help="random instances per op")
    sp = sub.add_parser("synth", help="generate a synthetic graph-driven dataset")
    common(sp, out=True)
    sp.add_argument("--nodes", type=int, default=10)
    sp.add_argument("--edges", type=int, default=15)
    sp.add_argument("--lag", type=int, default=3)
    sp.add_argument("--noise", type=float, default=0.1)
    sp.add_argument("--length", type=int, default=5000)
    return p


def _thread_limit():
    raw = os.environ.get("MTGNN_THREADS")
    if raw is None or raw == "":
        return None
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n < 1:
        raise UsageError(f"MTGNN_THREADS must be a positive integer, got {raw!r}")
    return n


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        limit = _thread_limit()
        with threadpool_limits(limits=limit):
            return COMMANDS[args.command](args)
    except (UsageError, ConfigError, MissingInputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingError as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (MtgnnError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
