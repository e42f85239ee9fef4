"""Command line entry point ``gac``.

    gac measure --kernel '{"kind": "gaussian", "l": 0.5}' --data synthetic:n=50,d=1
    gac --seeds 0-19 experiment dd-rff --out results
    gac plot --csv results/dd-rff.csv --spec '{"x_log": true}' --out dd-rff.svg
"""
import argparse
import json
import logging
import os
import sys

import numpy as np

from ..baselines import enp, error_summary, genp_rx, genp_v
from ..complexity import matrix_entropy
from ..exceptions import GACError, MissingMatrixError
from ..kernels import KernelSpec, normalize
from ..models import KernelRidge
from .data import gen_gaussian, load_table, parse_synthetic
from .experiments import EXPERIMENTS, ExperimentConfig, run_experiment, write_rows
from .plotting import emit_plot

__all__ = ["main", "build_parser", "parse_seeds"]

log = logging.getLogger("gac")

MEASURES = ("gac", "enp", "genp-v", "genp-rx", "vne", "le", "param-norm")


def _json_arg(text):
    """Inline JSON, or a path to a JSON file."""
    if text is None:
        return None
    if os.path.exists(text):
        with open(text, encoding="utf-8") as fh:
            return json.load(fh)
    return json.loads(text)


def parse_seeds(text):
    """``"3"``, ``"0,2,5"`` or ``"0-19"`` (inclusive) to a list of ints."""
    seeds = []
    for part in filter(None, text.split(",")):
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise argparse.ArgumentTypeError("empty seed list")
    return seeds


def _load(spec):
    return parse_synthetic(spec) if spec.startswith("synthetic") else load_table(spec)


def cmd_measure(args):
    spec = KernelSpec.from_dict(_json_arg(args.kernel))
    train = _load(args.data)
    measures = [m.strip() for m in args.measures.split(",") if m.strip()]
    bad = [m for m in measures if m not in MEASURES]
    if bad:
        raise GACError(f"unknown measure(s) {bad}; choose from {list(MEASURES)}")
    test = None
    if args.test_data:
        test = _load(args.test_data)
    elif train.source == "gaussian":
        pre = train.preprocessing
        test = gen_gaussian(train.n, train.d, pre["sigma"], pre["sigma_y"], [pre["seed"], 1])
    if args.sigma2 is not None:
        sigma2 = args.sigma2
    elif train.source == "gaussian":
        sigma2 = train.preprocessing["sigma_y"] ** 2
    else:
        sigma2 = float(np.var(train.y))

    model = KernelRidge(spec.kind, p=spec.p, c=spec.c, l=spec.l, nu=spec.nu, lam=args.lam)
    model.fit(train.x, train.y)
    s = model.smoother_matrices(None if test is None else test.x)
    rows = []
    for m in measures:
        if m in ("genp-v", "genp-rx") and test is None:
            raise MissingMatrixError(f"{m} needs --test-data")
        if m == "gac":
            v = model.complexity().value
        elif m == "enp":
            v = enp(s, normalized=args.normalized)
        elif m == "genp-v":
            v = genp_v(s, normalized=args.normalized)
        elif m == "genp-rx":
            v = genp_rx(error_summary(s, train.y, test.y, sigma2), train.n,
                        normalized=args.normalized)
        elif m == "vne":
            v = matrix_entropy(normalize(model.K_), "von_neumann").value
        elif m == "le":
            v = matrix_entropy(normalize(model.K_), "linear").value
        else:
            v = model.param_norm()
        rows.append({"experiment": "measure", "seed": "", "sweep_name": "",
                     "sweep_value": "", "measure": m, "value": repr(float(v)),
                     "n": str(train.n), "runtime_ms": "0"})
    write_rows(rows, sys.stdout)
    return 0


def cmd_experiment(args):
    cfg = _json_arg(args.config) or {}
    cfg = {**cfg, "experiment": args.id}
    cfg["out_dir"] = args.out
    if args.seeds is not None:
        cfg["seeds"] = args.seeds
    if args.threads is not None:
        cfg["threads"] = args.threads
    if args.timing:
        cfg["timing"] = True
    path = run_experiment(ExperimentConfig.from_dict(cfg))
    print(path)
    return 0


def cmd_plot(args):
    emit_plot(args.csv, _json_arg(args.spec), args.out)
    print(args.out)
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="gac", description="Gradient alignment complexity tools")
    ap.add_argument("--seeds", type=parse_seeds, default=None,
                    help="seed list, e.g. 0,1,2 or 0-19")
    ap.add_argument("--threads", type=int, default=None, help="parallel workers over seeds")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    m = sub.add_parser("measure", help="complexity measures of kernel ridge regression")
    m.add_argument("--kernel", required=True, help="kernel spec as JSON or a JSON file")
    m.add_argument("--data", required=True, help="data file (.npz/.csv) or synthetic:n=..,d=..")
    m.add_argument("--test-data", default=None)
    m.add_argument("--measures", default="gac,enp",
                   help=f"comma list from {','.join(MEASURES)}")
    m.add_argument("--lam", type=float, default=1e-5)
    m.add_argument("--sigma2", type=float, default=None, help="noise variance for genp-rx")
    m.add_argument("--normalized", action="store_true", help="divide counts by n")
    m.set_defaults(func=cmd_measure)

    e = sub.add_parser("experiment", help="run an experiment grid to CSV")
    e.add_argument("id", choices=EXPERIMENTS)
    e.add_argument("--config", default=None, help="config JSON or a JSON file")
    e.add_argument("--out", default="results")
    e.add_argument("--timing", action="store_true", help="record wall time per cell")
    e.set_defaults(func=cmd_experiment)

    p = sub.add_parser("plot", help="SVG chart from a result CSV")
    p.add_argument("--csv", required=True)
    p.add_argument("--spec", default=None, help="plot spec JSON or a JSON file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (GACError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

