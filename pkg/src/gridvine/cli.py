"""Command-line interface.

Every command writes ``<out-dir>/<command>.record.json``; ``replay`` re-runs
a record's command line and checks that all metrics match bit for bit.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bench, info, vine, zoo
from .edge import ESTIMATORS, INTERPOLATIONS
from .errors import DataError, GridVineError, NumericalError
from .ipfp import validity_report
from .kendall import kendall_matrix, kendall_tau
from .records import RunRecord, file_digest, ingest_csv, jsonable, metric_diff, write_csv, write_table
from .transform import pseudo_observations_matrix

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4

log = logging.getLogger("gridvine")


@dataclass
class Context:
    out_dir: Path
    fmt: str
    seed: int
    threads: int
    artifacts: list[str] = field(default_factory=list)
    inputs: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def path(self, given: str | None, default_name: str) -> Path:
        p = Path(given) if given else self.out_dir / default_name
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def produced(self, path) -> None:
        self.artifacts.append(str(path))

    def read_input(self, path: str, has_header: bool = False) -> np.ndarray:
        self.inputs[path] = file_digest(path)
        return ingest_csv(path, has_header)

    def load_model(self, path: str) -> vine.VineModel:
        self.inputs[path] = file_digest(path)
        return vine.load(path)

    @contextlib.contextmanager
    def timer(self, name: str):
        start = time.perf_counter()
        yield
        self.timings[name] = time.perf_counter() - start


# argument helpers ----------------------------------------------------------


def _alpha(text: str):
    if text == "auto":
        return "auto"
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"alpha must be a number or 'auto', got {text!r}") from None


def _add_fit_options(p: argparse.ArgumentParser, structure: bool = True) -> None:
    defaults = vine.FitConfig()
    if structure:
        p.add_argument("--structure", choices=[k.value for k in vine.StructureKind], default=defaults.structure)
        p.add_argument("--truncation", type=int, default=None, help="fit trees above this level as independence")
    p.add_argument("--m", type=int, default=defaults.m, help="grid size")
    p.add_argument("--k-ipfp", type=int, default=defaults.k_ipfp)
    p.add_argument("--edge-estimator", choices=ESTIMATORS, default=defaults.estimator)
    p.add_argument("--alpha", type=_alpha, default=defaults.alpha, help="shrinkage weight, 'auto' or omit")
    p.add_argument("--no-alpha", dest="alpha", action="store_const", const=None, help="no uniform mixing (kde) / default schedule (shrink)")
    p.add_argument("--bandwidth", type=float, default=None, help="kde bandwidth in cells")
    p.add_argument("--grid-dir", default=None, help="directory of grids for --edge-estimator import")
    p.add_argument("--interpolation", choices=INTERPOLATIONS, default=defaults.interpolation)


def _fit_config(args, threads: int = 1) -> vine.FitConfig:
    return vine.FitConfig(
        structure=getattr(args, "structure", "dvine"),
        m=args.m,
        estimator=args.edge_estimator,
        alpha=args.alpha,
        bandwidth=args.bandwidth,
        k_ipfp=args.k_ipfp,
        interpolation=args.interpolation,
        truncation=getattr(args, "truncation", None),
        threads=threads,
        grid_dir=args.grid_dir,
    )


def _copula_input(ctx: Context, args) -> np.ndarray:
    data = ctx.read_input(args.input, args.header)
    return pseudo_observations_matrix(data) if args.pit else data


def _spec_from_args(args) -> zoo.CopulaSpec:
    if args.spec:
        text = Path(args.spec).read_text() if os.path.exists(args.spec) else args.spec
        try:
            return zoo.CopulaSpec.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise DataError(f"--spec is neither a file nor valid JSON: {exc}") from exc
    return zoo.CopulaSpec(family=args.family, params=tuple(args.params), rotation=args.rotation)


def _edge_summary(model: vine.VineModel) -> list[dict]:
    out = []
    for e in model.edges:
        row, col, mass = validity_report(e.grid)
        entry = {"edge": e.label, "tree": e.tree_level, "max_row_dev": row, "max_col_dev": col, "mass_err": mass}
        if e.fit_stats is not None:
            entry.update(tau_hat=e.fit_stats.tau_hat, n_used=e.fit_stats.n_used, mean_log_density=e.fit_stats.mean_log_density)
        out.append(entry)
    return out


# commands ------------------------------------------------------------------


def cmd_zoo_gen(args, ctx: Context):
    spec = _spec_from_args(args)
    uv = zoo.sample(spec, args.n, ctx.seed)
    out = ctx.path(args.out, "zoo_samples.csv")
    write_csv(out, ["u", "v"], uv.tolist())
    ctx.produced(out)
    metrics = {
        "spec": spec.to_dict(),
        "n": args.n,
        "sample_tau": kendall_tau(uv[:, 0], uv[:, 1]),
        "analytic_tau": None if spec.is_mixture else zoo.analytic_tau(spec),
        "analytic_mi": zoo.analytic_mi(spec),
        "checksum": float(np.sum(uv)),
    }
    return {"spec": spec.to_dict(), "n": args.n}, metrics


def cmd_fit(args, ctx: Context):
    cfg = _fit_config(args, ctx.threads)
    data = ctx.read_input(args.input, args.header)
    with ctx.timer("fit"):
        model = vine.fit(data, cfg)
    out = ctx.path(args.out, "model.vdc")
    vine.save(model, out)
    ctx.produced(out)
    u = pseudo_observations_matrix(data)
    metrics = {
        "d": model.d,
        "n": int(data.shape[0]),
        "order": list(model.order) if model.order else None,
        "insample_mean_loglik": float(np.mean(vine.log_likelihood(model, u))),
        "edges": _edge_summary(model),
    }
    return cfg.to_dict(), metrics


def cmd_loglik(args, ctx: Context):
    model = ctx.load_model(args.model)
    u = _copula_input(ctx, args)
    ll = np.atleast_1d(vine.log_likelihood(model, u))
    out = ctx.path(None, "loglik")
    path = write_table(out, [{"row": i, "loglik": float(v)} for i, v in enumerate(ll)], ctx.fmt)
    ctx.produced(path)
    metrics = {"n": int(ll.size), "mean": float(np.mean(ll)), "std": float(np.std(ll)), "min": float(ll.min()), "max": float(ll.max())}
    return {"model": args.model, "input": args.input, "pit": args.pit}, metrics


def cmd_sample(args, ctx: Context):
    model = ctx.load_model(args.model)
    with ctx.timer("sample"):
        s = vine.sample(model, args.n, ctx.seed)
    out = ctx.path(args.out, "samples.csv")
    write_csv(out, [f"u{i}" for i in range(model.d)], s.tolist())
    ctx.produced(out)
    return {"model": args.model, "n": args.n}, {"n": args.n, "tau": kendall_matrix(s), "checksum": float(np.sum(s))}


def cmd_mi(args, ctx: Context):
    data = ctx.read_input(args.input, args.header)
    i, j = args.cols
    x, y = data[:, i], data[:, j]
    config = {"estimator": args.estimator, "cols": [i, j]}
    if args.estimator == "ksg":
        config["k"] = args.k
        return config, {"mi": info.ksg_mi(x, y, args.k, ctx.seed)}
    if args.estimator == "gaussian":
        return config, {"mi": float(info.gaussian_baseline(np.column_stack([x, y])).mi[0, 1])}
    cfg = _fit_config(args)
    config["fit"] = cfg.to_dict()
    mdl = vine.fit(np.column_stack([x, y]), cfg)
    edge = mdl.edges[0]
    return config, {"mi": edge.fit_stats.mean_log_density, "mi_integral": info.grid_mi_integral(edge.grid)}


def cmd_tc(args, ctx: Context):
    model = ctx.load_model(args.model)
    u = _copula_input(ctx, args)
    dec = info.total_correlation(model, u)
    path = write_table(ctx.path(None, "tc_edges"), [{"edge": e, "mean_log_density": v} for e, v in dec.per_edge], ctx.fmt)
    ctx.produced(path)
    return {"model": args.model, "input": args.input, "pit": args.pit}, dec.to_dict()


def cmd_tc_scaling(args, ctx: Context):
    cfg = _fit_config(args, ctx.threads)
    seeds = args.seeds if args.seeds else [ctx.seed]
    rows, times = bench.tc_scaling(args.d, args.rho, args.n, seeds, cfg, ksg=not args.no_ksg, ksg_k=args.k)
    ctx.timings["cases"] = times
    ctx.produced(write_table(ctx.path(None, "tc_scaling"), rows, ctx.fmt))
    config = {"d": args.d, "rho": args.rho, "n": args.n, "seeds": seeds, "ksg": not args.no_ksg, "k": args.k, "fit": cfg.to_dict()}
    return config, {"rows": rows}


def cmd_bench_bivariate(args, ctx: Context):
    suite = None
    if args.suite:
        ctx.inputs[args.suite] = file_digest(args.suite)
        suite = [zoo.CopulaSpec.from_dict(obj) for obj in json.loads(Path(args.suite).read_text())]
    seeds = args.seeds if args.seeds else [ctx.seed]
    result = bench.bench_bivariate(suite, args.methods, args.n, args.m, seeds, args.k_ipfp, ctx.threads)
    ctx.timings["methods"] = result.timings
    ctx.produced(write_table(ctx.path(None, "bench_rows"), list(result.rows), ctx.fmt))
    ctx.produced(write_table(ctx.path(None, "bench_aggregates"), list(result.aggregates), ctx.fmt))
    config = {"suite": [s.to_dict() for s in (suite or bench.default_suite())], "methods": args.methods, "n": args.n, "m": args.m, "seeds": seeds, "k_ipfp": args.k_ipfp}
    return config, result.to_dict()


def cmd_ipfp_ablation(args, ctx: Context):
    rows, times = bench.ipfp_ablation(args.ks, args.n, args.m, ctx.seed, args.repeats)
    ctx.timings["cases"] = times
    ctx.produced(write_table(ctx.path(None, "ipfp_ablation"), rows, ctx.fmt))
    return {"ks": args.ks, "n": args.n, "m": args.m, "estimator": "shrink"}, {"rows": rows}


def cmd_self_consistency(args, ctx: Context):
    cfg = info.SuiteConfig(
        estimator=args.estimator,
        trials=args.trials,
        n=args.n,
        seed=ctx.seed,
        ksg_k=args.k,
        fit=_fit_config(args),
        threads=ctx.threads,
    )
    report = info.self_consistency_suite(cfg)
    return cfg.to_dict(), report.to_dict()


def cmd_model_inspect(args, ctx: Context):
    model = ctx.load_model(args.model)
    metrics = {
        "d": model.d,
        "m": model.m,
        "structure_kind": model.structure_kind.value,
        "order": list(model.order) if model.order else None,
        "proximity_ok": vine.check_proximity(model),
        "model_tc": info.model_tc(model),
        "edges": _edge_summary(model),
        "config": model.config.to_dict(),
    }
    return {"model": args.model}, metrics


def _rewrite_outputs(argv: list[str], tmp: str) -> list[str]:
    """Point ``--out-dir`` and ``--out`` of a recorded command line into ``tmp``."""
    out, i = [], 0
    while i < len(argv):
        tok = argv[i]
        key, eq, value = tok.partition("=")
        if key in ("--out-dir", "--out"):
            if not eq:
                i += 1
                value = argv[i] if i < len(argv) else ""
            out += [key, tmp if key == "--out-dir" else str(Path(tmp) / Path(value).name)]
        else:
            out.append(tok)
        i += 1
    if "--out-dir" not in out:
        out = ["--out-dir", tmp] + out
    return out


def cmd_replay(args, ctx: Context):
    ctx.inputs[args.record] = file_digest(args.record)
    original = RunRecord.load(args.record)
    if original.command == "replay":
        raise DataError("refusing to replay a replay record")
    with tempfile.TemporaryDirectory() as tmp, _chdir(original.cwd or os.getcwd()):
        again, _ = execute(_rewrite_outputs(list(original.argv), tmp))
    mismatches = metric_diff(original.metrics, again.metrics)
    metrics = {"replayed_command": original.command, "identical": not mismatches, "mismatches": mismatches}
    if mismatches:
        log.error("replay of %s differs at %s", original.command, ", ".join(mismatches[:10]))
    return {"record": args.record}, metrics


@contextlib.contextmanager
def _chdir(path):
    prev = os.getcwd()
    os.chdir(path)
    try:
        yield
    finally:
        os.chdir(prev)


COMMANDS = {
    "zoo-gen": cmd_zoo_gen,
    "fit": cmd_fit,
    "loglik": cmd_loglik,
    "sample": cmd_sample,
    "mi": cmd_mi,
    "tc": cmd_tc,
    "tc-scaling": cmd_tc_scaling,
    "bench-bivariate": cmd_bench_bivariate,
    "ipfp-ablation": cmd_ipfp_ablation,
    "self-consistency": cmd_self_consistency,
    "model-inspect": cmd_model_inspect,
    "replay": cmd_replay,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gridvine", description="Grid-based vine copula engine.")
    parser.add_argument("--seed", type=int, default=0, help="root random seed")
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--out-dir", default="runs", help="directory for records and tables")
    parser.add_argument("--format", choices=("json", "csv"), default="json", help="table output format")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("zoo-gen", help="sample a parametric copula to CSV")
    p.add_argument("--spec", help="spec JSON text or file")
    p.add_argument("--family", default="Gaussian", choices=zoo.FAMILIES)
    p.add_argument("--params", type=float, nargs="*", default=[0.5])
    p.add_argument("--rotation", type=int, default=0, choices=zoo.ROTATIONS)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--out")

    p = sub.add_parser("fit", help="fit a vine to a CSV data matrix")
    p.add_argument("--input", required=True)
    p.add_argument("--header", action="store_true", help="skip the first CSV line")
    _add_fit_options(p)
    p.add_argument("--out")

    for name, helptext in (("loglik", "per-row log-likelihood"), ("tc", "held-out total correlation")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--model", required=True)
        p.add_argument("--input", required=True)
        p.add_argument("--header", action="store_true")
        p.add_argument("--pit", action="store_true", help="rank-transform raw columns first")

    p = sub.add_parser("sample", help="draw rows from a fitted model")
    p.add_argument("--model", required=True)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--out")

    p = sub.add_parser("mi", help="mutual information of two columns")
    p.add_argument("--input", required=True)
    p.add_argument("--header", action="store_true")
    p.add_argument("--cols", type=int, nargs=2, default=[0, 1])
    p.add_argument("--estimator", choices=("grid", "ksg", "gaussian"), default="grid")
    p.add_argument("--k", type=int, default=5, help="KSG neighbours")
    _add_fit_options(p, structure=False)

    p = sub.add_parser("tc-scaling", help="TC on Gaussian AR(1) data by dimension")
    p.add_argument("--d", type=int, nargs="+", default=[5, 10, 20])
    p.add_argument("--rho", type=float, default=0.7)
    p.add_argument("--n", type=int, default=20_000)
    p.add_argument("--seeds", type=int, nargs="*")
    p.add_argument("--no-ksg", action="store_true")
    p.add_argument("--k", type=int, default=5)
    _add_fit_options(p)

    p = sub.add_parser("bench-bivariate", help="edge estimator accuracy on the copula suite")
    p.add_argument("--suite", help="JSON list of specs (default: built-in 24-spec suite)")
    p.add_argument("--methods", nargs="+", default=["hist", "shrink", "kde", "oracle"], choices=bench.METHODS)
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--m", type=int, default=64)
    p.add_argument("--k-ipfp", type=int, default=15)
    p.add_argument("--seeds", type=int, nargs="*")

    p = sub.add_parser("ipfp-ablation", help="marginal error versus IPFP iterations")
    p.add_argument("--ks", type=int, nargs="+", default=list(bench.ABLATION_KS))
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--m", type=int, default=64)
    p.add_argument("--repeats", type=int, default=5)

    p = sub.add_parser("self-consistency", help="DPI, additivity and monotonicity checks")
    p.add_argument("--estimator", choices=("grid", "ksg"), default="grid")
    p.add_argument("--trials", type=int, default=30)
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--k", type=int, default=5)
    _add_fit_options(p, structure=False)

    p = sub.add_parser("model-inspect", help="structure and per-edge diagnostics of a model")
    p.add_argument("--model", required=True)

    p = sub.add_parser("replay", help="re-run a record and compare metrics bit for bit")
    p.add_argument("--record", required=True)
    return parser


def execute(argv: list[str]) -> tuple[RunRecord, Path]:
    """Run one command and write its record; errors propagate."""
    args = build_parser().parse_args(argv)
    ctx = Context(Path(args.out_dir), args.format, args.seed, args.threads)
    ctx.out_dir.mkdir(parents=True, exist_ok=True)
    with ctx.timer("total"):
        config, metrics = COMMANDS[args.command](args, ctx)
    record = RunRecord(
        command=args.command,
        argv=list(argv),
        config=jsonable(config),
        seed=args.seed,
        metrics=json.loads(json.dumps(jsonable(metrics))),
        timings=jsonable(ctx.timings),
        artifact_paths=ctx.artifacts,
        inputs=ctx.inputs,
        cwd=os.getcwd(),
    )
    return record, record.save(ctx.out_dir)


def _headline(metrics: dict) -> dict:
    return {k: v for k, v in metrics.items() if isinstance(v, (int, float, str, bool)) or v is None}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(level=logging.INFO if "-v" in argv or "--verbose" in argv else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        record, path = execute(argv)
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except GridVineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    print(json.dumps({"command": record.command, "record": str(path), **_headline(record.metrics)}))
    if record.command == "replay" and not record.metrics["identical"]:
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
