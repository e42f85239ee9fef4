"""Experiment grids and CSV emission.

Each experiment is a grid over (seed, sweep name, sweep value). Every cell
yields one row per measure in the fixed schema

    experiment,seed,sweep_name,sweep_value,measure,value,n,runtime_ms

Rows are ordered by seed, then sweep, then value, then measure, so a rerun
with the same config and input files gives a byte-identical CSV (timings
are written as 0 unless ``timing`` is switched on).
"""
import copy
import csv
import json
import logging
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from ..baselines import enp, error_summary, genp_rx, genp_v
from ..complexity import gac_from_gradients, matrix_entropy, total_gac
from ..exceptions import DomainError, GACError, UndefinedTotalError
from ..kernels import KernelSpec, normalize
from ..models import (
    GradientBoostingRegressor,
    KernelRidge,
    MLPRegressor,
    rff_features,
    rff_fit,
)
from ..smoothers import DecisionTreeSmoother, KNNSmoother, RandomForestSmoother
from .data import (
    Dataset,
    gen_gaussian,
    load_cifar10,
    load_digits_8x8,
    load_idx,
    split_dataset,
)

__all__ = [
    "CSV_COLUMNS",
    "EXPERIMENTS",
    "ExperimentConfig",
    "default_config",
    "run_rows",
    "run_experiment",
    "write_rows",
    "read_rows",
    "summarize",
    "median_se",
    "load_experiment_data",
]

log = logging.getLogger(__name__)

CSV_COLUMNS = ["experiment", "seed", "sweep_name", "sweep_value", "measure", "value", "n",
               "runtime_ms"]

KRR_MEASURES = ["gac", "enp", "genp-v", "genp-rx", "vne", "param-norm"]
DD_MEASURES = ["test-mse", "train-mse", "test-01", "gac", "proxy"]
DD_TRAINED_MEASURES = ["test-mse", "train-mse", "test-01", "total-gac", "proxy"]

_DEFAULTS = {
    "fig1": {
        "sweep": {
            "d": [1, 2, 5, 10, 20, 50, 100],
            "p": [1, 2, 3, 4, 5, 6, 7, 8, 9, 10],
            "l": [0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0],
            "n-linear": [10, 20, 50, 100, 200],
            "n-polynomial": [10, 20, 50, 100, 200],
            "n-gaussian": [10, 20, 50, 100, 200],
        },
        "measures": KRR_MEASURES,
        "params": {"n": 50, "d_linear": 20, "p": 5, "l": 1.0, "lam": 1e-5, "c": 1.0,
                   "sigma_y": 1.0},
    },
    "fig2": {
        "sweep": {"l": [0.2, 1.0]},
        "measures": ["gac", "enp"],
        "params": {"lam": [0.5, 1e-5], "n": 20, "x_range": 3.0, "noise": 0.3},
    },
    "fig3": {
        "sweep": {
            "kappa": list(range(1, 21)),
            "max_leaves": list(range(1, 21)),
            "n_trees": [1, 2, 5, 10, 20, 50, 100],
        },
        "measures": ["gac", "enp", "genp-v", "genp-rx"],
        "params": {"n": 20, "d": 1, "sigma_y": 1.0, "rf_bootstrap": True,
                   "rf_max_leaves": None},
    },
    "dd-rff": {
        "sweep": {"n_features": [10, 20, 50, 100, 150, 180, 200, 220, 250, 300, 500, 1000,
                                 2000]},
        "measures": DD_MEASURES,
        "params": {"n_train": 200, "n_test": 200, "l": 1.0},
        "data": {"source": "digits", "kind": "multiclass"},
    },
    "dd-rf": {
        "sweep": {"max_leaves": [2, 5, 10, 20, 50, 100, 150, 200],
                  "n_trees": [1, 2, 5, 10, 20]},
        "measures": DD_MEASURES,
        "params": {"n_train": 200, "n_test": 200, "bootstrap": False,
                   "max_features": "third"},
        "data": {"source": "digits", "kind": "multiclass"},
    },
    "dd-mlp-mnist": {
        "sweep": {"hidden": [1, 2, 4, 8, 16, 24, 32, 48, 64, 128]},
        "measures": DD_TRAINED_MEASURES,
        "params": {"n_train": 200, "n_test": 200, "epochs": 2000, "learning_rate": 0.01,
                   "momentum": 0.95, "n_batches": 1, "init": "sequential",
                   "gac_every": 5, "gac_subsample": 20, "center_inputs": True},
        "data": {"source": "digits", "kind": "multiclass"},
    },
    "dd-mlp-cifar": {
        "sweep": {"hidden": [1, 2, 4, 8, 16, 32, 64, 128]},
        "measures": DD_TRAINED_MEASURES,
        "params": {"n_train": 180, "n_test": 180, "epochs": 2000, "learning_rate": 1e-4,
                   "momentum": 0.99, "n_batches": 10, "init": "random",
                   "gac_every": 5, "gac_subsample": 20, "center_inputs": True},
        "data": {"source": "digits", "kind": "binary"},
    },
    "dd-gbdt": {
        "sweep": {"max_depth": [1, 2, 3, 4, 5, 6, 7, 8]},
        "measures": DD_TRAINED_MEASURES,
        "params": {"n_train": 180, "n_test": 180, "stages": 100, "learning_rate": 0.01,
                   "momentum": 0.95, "gac_kernel": "stage"},
        "data": {"source": "digits", "kind": "binary"},
    },
}

EXPERIMENTS = tuple(_DEFAULTS)
_POSITIVE = {"l", "sigma", "lam", "n", "d", "n-linear", "n-polynomial", "n-gaussian",
             "kappa", "max_leaves", "n_trees", "n_features", "hidden", "max_depth"}


def default_config(experiment):
    if experiment not in _DEFAULTS:
        raise DomainError(f"unknown experiment {experiment!r}; choose from {EXPERIMENTS}")
    return copy.deepcopy(_DEFAULTS[experiment])


@dataclass
class ExperimentConfig:
    """What to run and where to write it.

    Missing fields are filled from the experiment's defaults; a given
    ``sweep`` replaces the default grid entirely, while ``params`` and
    ``data`` are merged key by key.
    """

    experiment: str
    sweep: dict = None
    seeds: list = field(default_factory=lambda: [0])
    data: dict = None
    out_dir: str = "."
    measures: list = None
    params: dict = None
    timing: bool = False
    threads: int = 1

    def __post_init__(self):
        base = default_config(self.experiment)
        if self.sweep is None:
            self.sweep = base["sweep"]
        if self.measures is None:
            self.measures = list(base["measures"])
        self.params = {**base.get("params", {}), **(self.params or {})}
        self.data = {**base.get("data", {}), **(self.data or {})}
        self.seeds = [int(s) for s in self.seeds]
        self.validate()

    def validate(self):
        if not self.seeds:
            raise DomainError("seed list must be nonempty")
        for name, values in self.sweep.items():
            if not values:
                raise DomainError(f"sweep {name!r} is empty")
            if name in _POSITIVE and any(not v > 0 for v in values):
                raise DomainError(f"sweep {name!r} needs positive values")
        if self.experiment == "fig2" and len(self.params["lam"]) != len(self.sweep["l"]):
            raise DomainError("fig2 needs one lam per length scale")

    @classmethod
    def from_dict(cls, d, **overrides):
        d = {**d, **{k: v for k, v in overrides.items() if v is not None}}
        return cls(**d)

    @classmethod
    def from_json(cls, text, **overrides):
        return cls.from_dict(json.loads(text), **overrides)


# --------------------------------------------------------------------------
# shared pieces


def _cell_rng(seed, *path):
    return np.random.default_rng([seed, *path])


def _krr_values(model, x_test, y, y_star, sigma2, measures):
    """All kernel-ridge measures for one fitted model, keyed by name."""
    out = {}
    needs_s = any(m in measures for m in ("enp", "genp-v", "genp-rx"))
    s = model.smoother_matrices(x_test) if needs_s else None
    for m in measures:
        if m == "gac":
            out[m] = model.complexity().value
        elif m == "enp":
            out[m] = enp(s, normalized=True)
        elif m == "genp-v":
            out[m] = genp_v(s, normalized=True)
        elif m == "genp-rx":
            out[m] = genp_rx(error_summary(s, y, y_star, sigma2), len(y), normalized=True)
        elif m == "vne":
            out[m] = matrix_entropy(normalize(model.K_), "von_neumann").value
        elif m == "param-norm":
            out[m] = model.param_norm()
        else:
            raise DomainError(f"measure {m!r} is not available for kernel ridge")
    return out


def _smoother_values(model, x_test, y, y_star, sigma2, measures):
    out = {}
    s = model.smoother_matrices(x_test)
    for m in measures:
        if m == "gac":
            out[m] = model.complexity().value
        elif m == "enp":
            out[m] = enp(s, normalized=True)
        elif m == "genp-v":
            out[m] = genp_v(s, normalized=True)
        elif m == "genp-rx":
            out[m] = genp_rx(error_summary(s, y, y_star, sigma2), len(y), normalized=True)
        else:
            raise DomainError(f"measure {m!r} is not available for kernel smoothers")
    return out


def _errors(pred_train, y_train, pred_test, y_test):
    def mse(p, t):
        return float(np.mean(np.sum((p - t).reshape(len(t), -1) ** 2, axis=1)))

    if y_test.ndim == 2:
        err01 = float(np.mean(pred_test.argmax(1) != y_test.argmax(1)))
    else:
        err01 = float(np.mean(np.where(pred_test >= 0, 1.0, -1.0) != y_test))
    return {"train-mse": mse(pred_train, y_train), "test-mse": mse(pred_test, y_test),
            "test-01": err01}


def _safe_total(trace):
    try:
        return total_gac(trace).value
    except UndefinedTotalError:
        return float("nan")


# --------------------------------------------------------------------------
# cells: each returns {measure: value} and the sample size


def _fig1_extent(cfg):
    p = cfg.params
    ns = [p["n"]] + [v for k, vals in cfg.sweep.items() if k.startswith("n-") for v in vals]
    ds = [1, p["d_linear"]] + list(cfg.sweep.get("d", []))
    return int(max(ns)), int(max(ds))


def _fig1_cell(cfg, seed, name, si, value, vi):
    p = cfg.params
    n, d = p["n"], 1
    spec = None
    if name == "d":
        d = int(value)
        spec = KernelSpec("linear", c=p["c"])
    elif name == "p":
        spec = KernelSpec("polynomial", p=int(value), c=p["c"])
    elif name == "l":
        spec = KernelSpec("gaussian", l=float(value))
    elif name.startswith("n-"):
        kind = name[2:]
        n = int(value)
        if kind == "linear":
            d = p["d_linear"]
            spec = KernelSpec("linear", c=p["c"])
        elif kind == "polynomial":
            spec = KernelSpec("polynomial", p=p["p"], c=p["c"])
        else:
            spec = KernelSpec("gaussian", l=p["l"])
    if spec is None:
        raise DomainError(f"fig1 has no sweep named {name!r}")
    # one sample per seed shared by all cells (common random numbers): a
    # cell uses its first n rows and first d columns
    rows, cols = _fig1_extent(cfg)
    rng = _cell_rng(seed, 0)
    base = gen_gaussian(rows, cols, 1.0, p["sigma_y"], rng.integers(2**32))
    base_test = gen_gaussian(rows, cols, 1.0, p["sigma_y"], rng.integers(2**32))
    train = base.subset(slice(0, n))
    test = base_test.subset(slice(0, n))
    train.x, test.x = train.x[:, :d], test.x[:, :d]
    model = KernelRidge(spec.kind, p=spec.p, c=spec.c, l=spec.l, lam=p["lam"])
    model.fit(train.x, train.y)
    vals = _krr_values(model, test.x, train.y, test.y, p["sigma_y"] ** 2, cfg.measures)
    return vals, n


def _fig2_cell(cfg, seed, name, si, value, vi):
    p = cfg.params
    if name != "l":
        raise DomainError("fig2 sweeps the length scale 'l' only")
    # same data for both settings: depends on the seed alone
    rng = _cell_rng(seed, 0)
    n, r = p["n"], p["x_range"]
    x = rng.uniform(-r, r, size=(n, 1))
    y = np.sin(2.0 * x[:, 0]) + p["noise"] * rng.standard_normal(n)
    x_test = rng.uniform(-r, r, size=(n, 1))
    y_test = np.sin(2.0 * x_test[:, 0]) + p["noise"] * rng.standard_normal(n)
    model = KernelRidge("gaussian", l=float(value), lam=float(p["lam"][vi])).fit(x, y)
    vals = _krr_values(model, x_test, y, y_test, p["noise"] ** 2, cfg.measures)
    return vals, n


def _fig3_cell(cfg, seed, name, si, value, vi):
    p = cfg.params
    rng = _cell_rng(seed, 0)
    train = gen_gaussian(p["n"], p["d"], 1.0, p["sigma_y"], rng.integers(2**32))
    test = gen_gaussian(p["n"], p["d"], 1.0, p["sigma_y"], rng.integers(2**32))
    model_seed = int(_cell_rng(seed, si, vi).integers(2**32))
    if name == "kappa":
        model = KNNSmoother(int(value))
    elif name == "max_leaves":
        model = DecisionTreeSmoother(max_leaves=int(value), random_state=model_seed)
    elif name == "n_trees":
        model = RandomForestSmoother(int(value), max_leaves=p["rf_max_leaves"],
                                     bootstrap=p["rf_bootstrap"], random_state=model_seed)
    else:
        raise DomainError(f"fig3 has no sweep named {name!r}")
    model.fit(train.x, train.y)
    vals = _smoother_values(model, test.x, train.y, test.y, p["sigma_y"] ** 2, cfg.measures)
    return vals, p["n"]


def _split(cfg, seed, dataset):
    return split_dataset(dataset, cfg.params["n_train"], cfg.params["n_test"], seed)


def _dd_rff_cell(cfg, seed, name, si, value, vi, dataset):
    train, test = _split(cfg, seed, dataset)
    dfeat = int(value)
    z = rff_features(np.vstack([train.x, test.x]), dfeat, cfg.params["l"],
                     seed=_cell_rng(seed, si, vi))
    z_tr, z_te = z[: train.n], z[train.n:]
    w = rff_fit(z_tr, train.y)
    vals = _errors(z_tr @ w, train.y, z_te @ w, test.y)
    vals["gac"] = gac_from_gradients(z_tr).value
    vals["proxy"] = float(dfeat)
    return vals, train.n


def _dd_rf_cell(cfg, seed, name, si, value, vi, dataset):
    train, test = _split(cfg, seed, dataset)
    p = cfg.params
    if name == "max_leaves":
        leaves, trees = int(value), 1
    elif name == "n_trees":
        leaves, trees = train.n, int(value)
    else:
        raise DomainError(f"dd-rf has no sweep named {name!r}")
    model = RandomForestSmoother(trees, max_leaves=leaves, bootstrap=p["bootstrap"],
                                 max_features=p["max_features"],
                                 random_state=int(_cell_rng(seed, si, vi).integers(2**32)))
    model.fit(train.x, train.y)
    vals = _errors(model.predict(train.x), train.y, model.predict(test.x), test.y)
    vals["gac"] = model.complexity().value
    vals["proxy"] = float(leaves * trees)
    return vals, train.n


def _dd_gbdt_cell(cfg, seed, name, si, value, vi, dataset):
    train, test = _split(cfg, seed, dataset)
    p = cfg.params
    if name != "max_depth":
        raise DomainError("dd-gbdt sweeps 'max_depth' only")
    model = GradientBoostingRegressor(
        n_stages=p["stages"], learning_rate=p["learning_rate"], momentum=p["momentum"],
        max_depth=int(value), gac_kernel=p["gac_kernel"],
        random_state=int(_cell_rng(seed, si, vi).integers(2**32)),
    ).fit(train.x, train.y)
    vals = _errors(model.train_predictions_, train.y, model.predict(test.x), test.y)
    vals["total-gac"] = _safe_total(model.trace_)
    vals["proxy"] = float(value)
    return vals, train.n


def _mlp_sweep(cfg, seed, name, si, values, dataset):
    """Widths are trained in order so that small nets can warm-start the next."""
    if name != "hidden":
        raise DomainError("dd-mlp sweeps 'hidden' only")
    train, test = _split(cfg, seed, dataset)
    p = cfg.params
    if p.get("center_inputs", False):
        # nonnegative pixel inputs let one momentum step switch a ReLU unit
        # off for every sample; centring on the training mean avoids that
        mu = train.x.mean(0)
        train = Dataset(train.x - mu, train.y, train.source, train.preprocessing)
        test = Dataset(test.x - mu, test.y, test.source, test.preprocessing)
    y_tr = train.y
    c = 1 if y_tr.ndim == 1 else y_tr.shape[1]
    threshold = train.n * c
    prev = None
    results = []
    for vi, h in enumerate(values):
        h = int(h)
        n_params = h * train.d + h + c * h + c
        warm = p["init"] == "sequential" and n_params < threshold and prev is not None
        model = MLPRegressor(
            hidden=h, learning_rate=p["learning_rate"], momentum=p["momentum"],
            epochs=p["epochs"], n_batches=p["n_batches"],
            init="warm" if warm else "random", warm_start_from=prev if warm else None,
            gac_every=p["gac_every"], gac_subsample=p["gac_subsample"],
            random_state=int(_cell_rng(seed, si, vi).integers(2**32)),
        )
        t0 = time.perf_counter()
        try:
            model.fit(train.x, y_tr)
            vals = _errors(model.predict(train.x), y_tr, model.predict(test.x), test.y)
            vals["total-gac"] = _safe_total(model.trace_)
            prev = model
        except GACError as exc:
            log.warning("seed %s, hidden %s: %s", seed, h, exc)
            vals = {k: float("nan") for k in ("train-mse", "test-mse", "test-01", "total-gac")}
            prev = None
        vals["proxy"] = float(n_params)
        results.append((vi, h, vals, train.n, (time.perf_counter() - t0) * 1e3))
    return results


_CELLS = {"fig1": _fig1_cell, "fig2": _fig2_cell, "fig3": _fig3_cell}
_DATA_CELLS = {"dd-rff": _dd_rff_cell, "dd-rf": _dd_rf_cell, "dd-gbdt": _dd_gbdt_cell}


def load_experiment_data(cfg):
    """Dataset for a double-descent experiment, or None for synthetic ones."""
    if not cfg.experiment.startswith("dd-"):
        return None
    d = cfg.data
    if "images" in d or "labels" in d:
        return load_idx(d["images"], d["labels"], d.get("subsample"), d.get("seed"))
    if "cifar" in d:
        return load_cifar10(d["cifar"], tuple(d.get("classes", (3, 5))), d.get("seed"),
                            d.get("subsample"))
    source = d.get("source", "digits")
    if source == "digits":
        return load_digits_8x8(d.get("kind", "multiclass"))
    raise FileNotFoundError(f"no data files configured for source {source!r}")


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def _row(cfg, seed, name, value, measure, val, n, ms):
    return {
        "experiment": cfg.experiment,
        "seed": str(seed),
        "sweep_name": name,
        "sweep_value": _fmt(value),
        "measure": measure,
        "value": repr(float(val)),
        "n": str(int(n)),
        "runtime_ms": f"{ms:.3f}" if cfg.timing else "0",
    }


def _seed_rows(cfg, seed, dataset):
    rows = []
    for si, (name, values) in enumerate(cfg.sweep.items()):
        if cfg.experiment.startswith("dd-mlp"):
            for vi, h, vals, n, ms in _mlp_sweep(cfg, seed, name, si, values, dataset):
                rows += [_row(cfg, seed, name, h, m, vals[m], n, ms) for m in cfg.measures]
            continue
        for vi, value in enumerate(values):
            t0 = time.perf_counter()
            if cfg.experiment in _CELLS:
                vals, n = _CELLS[cfg.experiment](cfg, seed, name, si, value, vi)
            else:
                vals, n = _DATA_CELLS[cfg.experiment](cfg, seed, name, si, value, vi, dataset)
            ms = (time.perf_counter() - t0) * 1e3
            for m in cfg.measures:
                if m not in vals:
                    raise DomainError(f"measure {m!r} is not produced by {cfg.experiment}")
                rows.append(_row(cfg, seed, name, value, m, vals[m], n, ms))
    log.info("%s: seed %s done (%d rows)", cfg.experiment, seed, len(rows))
    return rows


def _iter_seed_rows(cfg):
    dataset = load_experiment_data(cfg)
    if cfg.threads and cfg.threads > 1 and len(cfg.seeds) > 1:
        yield from Parallel(n_jobs=cfg.threads, return_as="generator")(
            delayed(_seed_rows)(cfg, s, dataset) for s in cfg.seeds
        )
    else:
        for s in cfg.seeds:
            yield _seed_rows(cfg, s, dataset)


def run_rows(cfg):
    """All result rows (as string dicts) in deterministic order."""
    if isinstance(cfg, dict):
        cfg = ExperimentConfig.from_dict(cfg)
    return [r for rows in _iter_seed_rows(cfg) for r in rows]


def write_rows(rows, fh, header=True):
    writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
    if header:
        writer.writeheader()
    writer.writerows(rows)


def run_experiment(cfg):
    """Run a config and write ``<out_dir>/<experiment>.csv``; returns the path.

    Rows are flushed after each completed seed, so an interrupted run keeps
    the seeds it finished.
    """
    if isinstance(cfg, dict):
        cfg = ExperimentConfig.from_dict(cfg)
    os.makedirs(cfg.out_dir, exist_ok=True)
    path = os.path.join(cfg.out_dir, f"{cfg.experiment}.csv")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        write_rows([], fh, header=True)
        fh.flush()
        for rows in _iter_seed_rows(cfg):
            write_rows(rows, fh, header=False)
            fh.flush()
    return path


def read_rows(path):
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def summarize(rows, measure, sweep_name=None):
    """Median over seeds per sweep value: ``{value: median}`` in sweep order."""
    groups = {}
    for r in rows:
        if r["measure"] != measure or (sweep_name and r["sweep_name"] != sweep_name):
            continue
        groups.setdefault(float(r["sweep_value"]), []).append(float(r["value"]))
    return {k: float(np.median(v)) for k, v in groups.items()}


def median_se(values):
    """Large-sample standard error of a median, ``1.2533 s / sqrt(m)``."""
    v = np.asarray(values, dtype=float)
    if len(v) < 2:
        return math.inf
    return 1.2533 * float(v.std(ddof=1)) / math.sqrt(len(v))

