"""Experiment orchestration, dataset I/O and report emission.

A simulation run fixes one training/test dataset per ``(scenario, N, seed)``
and one full-sample reference fit ``beta_hat`` on it.  Replications differ
only in their subsampling seeds, so the per-replication squared errors
average to ``B^-1 sum_b ||beta~(b) - beta_hat||^2``.

Within a replication the pilot is shared by every criterion and subsample
size; LC-UNIF reuses the pilot's uniform draw and adds ``n`` more uniform
rows.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .datagen import ScenarioSpec, gen_scenario
from .pipeline import leverage_fit, pilot_fit, uniform_draw, uniform_pilot
from .rng import derive_seed, make_rng
from .svm import Dataset, Hyperplane, Instances, SolverConfig, fit_weighted, predict
from .tuning import LambdaGrid, default_grid, select_lambda

__all__ = [
    "ExperimentConfig",
    "ExperimentResult",
    "LabeledData",
    "CSVFormatError",
    "RESULT_COLUMNS",
    "SUMMARY_COLUMNS",
    "TIMING_COLUMNS",
    "run_simulation",
    "run_timing",
    "summarize",
    "load_labeled_csv",
    "emit_projection",
    "read_table",
    "write_table",
    "prepare_data",
    "full_reference",
]

log = logging.getLogger(__name__)

RESULT_COLUMNS = ["scenario", "criterion", "n", "n0", "rep", "seed", "mse", "accuracy_pct",
                  "t_pilot_s", "t_probs_s", "t_draw_s", "t_fit_s", "error_code"]
SUMMARY_COLUMNS = ["scenario", "criterion", "n", "n0", "reps_ok", "reps_failed", "mean_mse",
                   "mean_accuracy_pct", "mean_t_pilot_s", "mean_t_probs_s", "mean_t_draw_s",
                   "mean_t_fit_s", "mean_t_total_s"]
TIMING_COLUMNS = ["N", "method", "seconds", "repeats", "ratio_full_over_method"]
CRITERIA = ("FULL", "A", "L", "UNIF")
FULL_TUNING_SIZE = 2000


class CSVFormatError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def _tuple(v, cast):
    if isinstance(v, str):
        v = [t for t in v.replace(";", ",").split(",") if t.strip()]
    elif not isinstance(v, (list, tuple)):
        v = [v]
    return tuple(cast(str(t).strip()) if isinstance(t, str) else cast(t) for t in v)


def _int(v):
    return int(float(v)) if isinstance(v, str) else int(v)


def _opt_float(v):
    if v is None or (isinstance(v, str) and v.strip().lower() in ("", "none")):
        return None
    return float(v)


def _opt_str(v):
    if v is None or (isinstance(v, str) and v.strip().lower() in ("", "none")):
        return None
    return str(v)


@dataclass
class ExperimentConfig:
    """Everything that determines an experiment.

    ``grid_values`` pins an explicit penalty grid; otherwise each fit uses
    ``grid_num`` log-spaced values in ``[grid_lo, grid_hi]`` scaled by the
    inverse root of the tuned subsample size.  ``delta_scale`` sets the
    probability floor ``delta_scale / N``.
    """

    scenario: str | None = "ImUniform"
    input: str | None = None
    label_col: str = "RMSD"
    threshold: float | None = None
    N: int = 10000
    p: int = 8
    n0: int = 500
    n_list: tuple = (1000,)
    reps: int = 10
    criteria: tuple = ("A", "L", "UNIF")
    seed: int = 0
    delta_scale: float = 0.01
    grid_lo: float = 1e-6
    grid_hi: float = 1e-1
    grid_num: int = 8
    grid_values: tuple | None = None
    gacv_scope: str = "combined"
    t3_scaling: str = "whole"
    test_size: int | None = None
    N_list: tuple = (1000, 10000, 100000)
    timing_n: int = 1000
    timing_repeats: int = 3
    out: str | None = "results"
    workers: int = 1
    cache: bool = True

    def __post_init__(self):
        self.N = _int(self.N)
        self.p = _int(self.p)
        self.n0 = _int(self.n0)
        self.reps = _int(self.reps)
        self.seed = _int(self.seed)
        self.grid_num = _int(self.grid_num)
        self.workers = _int(self.workers)
        self.timing_n = _int(self.timing_n)
        self.timing_repeats = _int(self.timing_repeats)
        self.test_size = None if _opt_str(self.test_size) is None else _int(self.test_size)
        self.threshold = _opt_float(self.threshold)
        self.scenario = _opt_str(self.scenario)
        self.input = _opt_str(self.input)
        self.out = _opt_str(self.out)
        self.delta_scale = float(self.delta_scale)
        self.grid_lo = float(self.grid_lo)
        self.grid_hi = float(self.grid_hi)
        self.n_list = _tuple(self.n_list, _int)
        self.N_list = _tuple(self.N_list, _int)
        self.criteria = tuple(c.upper() for c in _tuple(self.criteria, str))
        if isinstance(self.grid_values, str) and _opt_str(self.grid_values) is None:
            self.grid_values = None
        if self.grid_values is not None:
            self.grid_values = _tuple(self.grid_values, float)
            LambdaGrid(self.grid_values)
        if isinstance(self.cache, str):
            self.cache = self.cache.strip().lower() in ("1", "true", "yes", "on")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if not self.n_list:
            raise ValueError("n_list must be nonempty")
        bad = [c for c in self.criteria if c not in CRITERIA]
        if bad or not self.criteria:
            raise ValueError(f"unknown criteria {bad}; choose from {CRITERIA}")
        if self.scenario is None and self.input is None:
            raise ValueError("need a scenario or an input file")
        if self.gacv_scope not in ("combined", "draw"):
            raise ValueError("gacv_scope must be 'combined' or 'draw'")

    @classmethod
    def from_file(cls, path, **overrides) -> "ExperimentConfig":
        """Read ``key = value`` lines (an optional ``[experiment]`` header is allowed)."""
        import configparser

        text = Path(path).read_text()
        if not text.lstrip().startswith("["):
            text = "[experiment]\n" + text
        cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        cp.optionxform = str
        cp.read_string(text)
        section = cp["experiment"] if cp.has_section("experiment") else cp[cp.sections()[0]]
        known = {f.name for f in dataclasses.fields(cls)}
        values = {}
        for k, v in section.items():
            key = k.strip().replace("-", "_")
            if key == "lambda_grid":
                key = "grid_values"
            if key not in known:
                raise ValueError(f"unknown config key {k!r} in {path}")
            values[key] = v
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    def grid_for(self, n: int) -> LambdaGrid:
        if self.grid_values is not None:
            return LambdaGrid(self.grid_values)
        return default_grid(n, self.grid_lo, self.grid_hi, self.grid_num)

    @property
    def label(self) -> str:
        return Path(self.input).stem if self.input else self.scenario

    def data_key(self) -> str:
        keys = {"scenario": self.scenario, "input": self.input and os.path.abspath(self.input),
                "label_col": self.label_col, "threshold": self.threshold, "N": self.N,
                "p": self.p, "seed": self.seed, "t3_scaling": self.t3_scaling,
                "test_size": self.test_size, "grid": [self.grid_lo, self.grid_hi, self.grid_num,
                                                      self.grid_values]}
        return hashlib.sha256(json.dumps(keys, sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class ExperimentResult:
    scenario: str
    criterion: str
    n: int
    n0: int
    rep: int
    seed: int
    mse: float = float("nan")
    accuracy_pct: float = float("nan")
    t_pilot_s: float = 0.0
    t_probs_s: float = 0.0
    t_draw_s: float = 0.0
    t_fit_s: float = 0.0
    error_code: str = ""
    beta: np.ndarray | None = field(default=None, repr=False, compare=False)

    def row(self):
        return [getattr(self, c) for c in RESULT_COLUMNS]

    @property
    def ok(self) -> bool:
        return not self.error_code


# ---------------------------------------------------------------------------
# CSV I/O
# ---------------------------------------------------------------------------


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return "" if v is None else str(v)


def write_table(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return path


def read_table(path):
    """Read a CSV written by :func:`write_table`; numeric cells become floats."""
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        rows = []
        for r in rd:
            out = []
            for v in r:
                try:
                    out.append(float(v))
                except ValueError:
                    out.append(v)
            rows.append(out)
    return header, rows


@dataclass
class LabeledData:
    dataset: Dataset
    mean: np.ndarray
    scale: np.ndarray
    feature_names: list
    response: np.ndarray

    def transform(self, X):
        return (np.asarray(X, dtype=float) - self.mean) / self.scale


def load_labeled_csv(path, label_column: str, threshold: float | None = None,
                     feature_columns=None, standardize: bool = True) -> LabeledData:
    """Parse a headered CSV into a standardized :class:`Dataset`.

    With ``threshold`` the label is +1 when the response is strictly greater
    than it and -1 otherwise; without it the label column must hold +/-1.
    Features are centered and scaled to unit sd (``ddof=0``); the parameters
    are returned for reuse on other data.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        try:
            header = [h.strip() for h in next(rd)]
        except StopIteration:
            raise CSVFormatError(f"{path}: empty file") from None
        if label_column not in header:
            raise CSVFormatError(f"{path}: missing label column {label_column!r}")
        if feature_columns is None:
            feature_columns = [h for h in header if h != label_column]
        missing = [c for c in feature_columns if c not in header]
        if missing:
            raise CSVFormatError(f"{path}: missing feature columns {missing}")
        cols = [header.index(label_column)] + [header.index(c) for c in feature_columns]
        rows, bad = [], []
        for lineno, rec in enumerate(rd, start=2):
            if not rec or all(not v.strip() for v in rec):
                continue
            if len(rec) != len(header):
                bad.append((lineno, f"expected {len(header)} fields, got {len(rec)}"))
                continue
            try:
                vals = [float(rec[c]) for c in cols]
            except ValueError as exc:
                bad.append((lineno, str(exc)))
                continue
            if not all(math.isfinite(v) for v in vals):
                bad.append((lineno, "non-finite value"))
                continue
            rows.append(vals)
    if bad:
        shown = "; ".join(f"line {ln}: {msg}" for ln, msg in bad[:10])
        more = f" (and {len(bad) - 10} more)" if len(bad) > 10 else ""
        raise CSVFormatError(f"{path}: {len(bad)} malformed rows: {shown}{more}")
    if not rows:
        raise CSVFormatError(f"{path}: no data rows")
    arr = np.array(rows)
    resp, X = arr[:, 0], arr[:, 1:]
    if threshold is not None:
        y = np.where(resp > threshold, 1.0, -1.0)
    else:
        if not np.all(np.isin(resp, (-1.0, 1.0))):
            raise CSVFormatError(f"{path}: label column must be +1/-1 when no threshold is given")
        y = resp
    mean = X.mean(axis=0) if standardize else np.zeros(X.shape[1])
    sd = X.std(axis=0) if standardize else np.ones(X.shape[1])
    const = [c for c, s in zip(feature_columns, sd) if not s > 0]
    if const:
        raise CSVFormatError(f"{path}: constant feature columns {const}")
    return LabeledData(Dataset((X - mean) / sd, y), mean, sd, list(feature_columns), resp)


def emit_projection(data: Dataset, beta_list, path, names=None):
    """Write first two principal-component scores, labels and decision values.

    ``beta_list`` is a sequence of hyperplanes or a ``{name: hyperplane}``
    mapping.  With ``p = 1`` the second score column is all zeros.
    """
    if isinstance(beta_list, dict):
        names, betas = list(beta_list), list(beta_list.values())
    else:
        betas = list(beta_list)
        names = names or [f"beta{j}" for j in range(len(betas))]
    X = data.X
    Z = X - X.mean(axis=0)
    _, _, Vt = np.linalg.svd(Z, full_matrices=False)
    scores = Z @ Vt[:2].T
    if scores.shape[1] < 2:
        scores = np.column_stack([scores, np.zeros(data.N)])
    cols = [scores[:, 0], scores[:, 1], data.y] + [b.decision_function(X) for b in betas]
    header = ["pc1", "pc2", "label"] + [f"f_{nm}" for nm in names]
    return write_table(path, header, zip(*cols))


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------


def prepare_data(config: ExperimentConfig):
    """Training and test sets for the configured scenario or input file."""
    if config.input:
        ld = load_labeled_csv(config.input, config.label_col, config.threshold)
        d = ld.dataset
        perm = make_rng(derive_seed(config.seed, 0)).permutation(d.N)
        half = d.N // 2
        return d.subset(np.sort(perm[:half])), d.subset(np.sort(perm[half:]))
    n_test = config.N if config.test_size is None else config.test_size
    spec = ScenarioSpec(config.scenario, config.N + n_test, config.p,
                        derive_seed(config.seed, 0), config.t3_scaling)
    full = gen_scenario(spec)
    # i.i.d. rows, so a fixed split is a random split
    return full.subset(np.arange(config.N)), full.subset(np.arange(config.N, full.N))


def full_reference(train: Dataset, config: ExperimentConfig, cache_dir=None):
    """``(beta_hat, lambda_full, seconds)``, tuned on a uniform subsample of 2000 rows."""
    path = None
    if cache_dir is not None and config.cache:
        path = Path(cache_dir) / f"full_{config.data_key()}_{train.N}.npz"
        if path.exists():
            z = np.load(path)
            return Hyperplane.from_vector(z["beta"]), float(z["lam"]), float(z["seconds"])
    m = min(FULL_TUNING_SIZE, train.N)
    sub = uniform_draw(train.N, m, derive_seed(config.seed, 1))
    lam = select_lambda(train, Instances(sub.indices), config.grid_for(m))
    t0 = time.perf_counter()
    res = fit_weighted(train, Instances.full(train.N), SolverConfig(lam))
    seconds = time.perf_counter() - t0
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savez(path, beta=res.beta.as_vector(), lam=lam, seconds=seconds)
    return res.beta, lam, seconds


def _accuracy(beta: Hyperplane, test: Dataset) -> float:
    return 100.0 * float(np.mean(predict(beta, test.X) == test.y))


def _replication(rep, config, train, test, beta_hat, full_seconds, full_acc):
    rows = []
    N = train.N
    pilot_seed = derive_seed(config.seed, 2, rep)
    bhat = beta_hat.as_vector()
    need_fit = any(c in ("A", "L") for c in config.criteria)
    pilot, pilot_err, t_pilot = None, "", 0.0
    if need_fit:
        t0 = time.perf_counter()
        try:
            pilot = pilot_fit(train, config.n0, pilot_seed, config.grid_for(config.n0),
                              with_hessian="A" in config.criteria)
            if pilot.attempts > 1:
                log.warning("rep %d: pilot redrawn %d times (single-class draws)", rep, pilot.attempts)
        except Exception as exc:  # recorded per cell
            pilot_err = type(exc).__name__
            log.warning("rep %d: pilot failed: %s", rep, exc)
        t_pilot = time.perf_counter() - t0
    upilot = pilot if pilot is not None else uniform_pilot(train, config.n0, pilot_seed)
    delta = config.delta_scale / N
    for i, n in enumerate(config.n_list):
        for c, crit in enumerate(config.criteria):
            seed = derive_seed(config.seed, 3, rep, i, c)
            r = ExperimentResult(config.label, crit, n, config.n0, rep, seed)
            if crit == "FULL":
                r.mse, r.accuracy_pct, r.t_fit_s = 0.0, full_acc, full_seconds
                r.beta = bhat
                rows.append(r)
                continue
            if crit != "UNIF" and pilot is None:
                r.error_code = pilot_err or "PilotError"
                rows.append(r)
                continue
            try:
                fit = leverage_fit(train, pilot if crit != "UNIF" else upilot, crit, n, seed,
                                   config.grid_for(n + config.n0), delta=delta,
                                   gacv_scope=config.gacv_scope)
                b = fit.beta.as_vector()
                r.beta = b
                r.mse = float(np.sum((b - bhat) ** 2))
                r.accuracy_pct = _accuracy(fit.beta, test)
                r.t_pilot_s = t_pilot if crit != "UNIF" else 0.0
                r.t_probs_s = fit.timings["probs"]
                r.t_draw_s = fit.timings["draw"]
                r.t_fit_s = fit.timings["fit"]
            except Exception as exc:  # recorded per cell
                r.error_code = type(exc).__name__
                log.warning("cell %s n=%d rep=%d failed: %s", crit, n, rep, exc)
            rows.append(r)
    return rows


_WORKER = {}


def _init_worker(config, train, test, beta_hat, full_seconds, full_acc):
    _WORKER.update(config=config, train=train, test=test, beta_hat=beta_hat,
                   full_seconds=full_seconds, full_acc=full_acc)


def _run_rep(rep):
    w = _WORKER
    return _replication(rep, w["config"], w["train"], w["test"], w["beta_hat"],
                        w["full_seconds"], w["full_acc"])


def summarize(results):
    """Mean MSE, accuracy and phase times per ``(criterion, n)`` cell."""
    cells = {}
    for r in results:
        cells.setdefault((r.scenario, r.criterion, r.n, r.n0), []).append(r)
    out = []
    for key in sorted(cells, key=lambda k: (k[0], CRITERIA.index(k[1]), k[2], k[3])):
        rs = cells[key]
        ok = [r for r in rs if r.ok]

        def mean(attr):
            return float(np.mean([getattr(r, attr) for r in ok])) if ok else float("nan")

        tt = [r.t_pilot_s + r.t_probs_s + r.t_draw_s + r.t_fit_s for r in ok]
        out.append(list(key) + [len(ok), len(rs) - len(ok), mean("mse"), mean("accuracy_pct"),
                                mean("t_pilot_s"), mean("t_probs_s"), mean("t_draw_s"),
                                mean("t_fit_s"), float(np.mean(tt)) if tt else float("nan")])
    return out


def run_simulation(config: ExperimentConfig, data=None):
    """Run every ``(replication, n, criterion)`` cell; write results and summary CSVs.

    ``data`` may pass a prepared ``(train, test)`` pair.  Returns the list of
    :class:`ExperimentResult` sorted by cell key.
    """
    train, test = prepare_data(config) if data is None else data
    if not train.has_both_classes():
        raise ValueError("training data contain a single class")
    cache_dir = None if config.out is None else Path(config.out) / ".cache"
    beta_hat, lam_full, full_seconds = full_reference(train, config, cache_dir)
    full_acc = _accuracy(beta_hat, test)
    log.info("full reference: lambda=%.3g, %.2fs, accuracy %.2f%%", lam_full, full_seconds, full_acc)
    args = (config, train, test, beta_hat, full_seconds, full_acc)
    reps = range(config.reps)
    if config.workers > 1:
        with ProcessPoolExecutor(config.workers, initializer=_init_worker, initargs=args) as ex:
            chunks = list(ex.map(_run_rep, reps))
    else:
        chunks = [_replication(rep, *args) for rep in reps]
    results = [r for ch in chunks for r in ch]
    results.sort(key=lambda r: (CRITERIA.index(r.criterion), r.n, r.rep))
    if config.out is not None:
        out = Path(config.out)
        write_table(out / "results.csv", RESULT_COLUMNS, [r.row() for r in results])
        write_table(out / "summary.csv", SUMMARY_COLUMNS, summarize(results))
    return results


@dataclass
class TimingTable:
    rows: list
    checks: dict

    def seconds(self, N, method):
        for r in self.rows:
            if r[0] == N and r[1] == method:
                return r[2]
        raise KeyError((N, method))


def run_timing(config: ExperimentConfig) -> TimingTable:
    """CPU seconds of SVM-FULL, LC-A, LC-L and LC-UNIF for each N in ``N_list``.

    Each method is timed ``timing_repeats`` times with fresh subsampling
    seeds (the same seeds for every method) and the median is reported.
    SVM-FULL is timed at a penalty tuned beforehand on a 2000-row uniform
    subsample; the tuning itself is not timed.  Leverage classifiers are
    timed end to end: pilot, probabilities, draw, penalty search and fit.
    """
    rows, full_times, ratios = [], [], []
    clock = time.process_time
    n = config.timing_n
    for N in config.N_list:
        cfg = dataclasses.replace(config, N=N, test_size=1, out=None)
        train, _ = prepare_data(cfg)
        _, lam, _ = full_reference(train, cfg)
        times = {m: [] for m in ("SVM-FULL", "LC-A", "LC-L", "LC-UNIF")}
        for rep in range(config.timing_repeats):
            t0 = clock()
            fit_weighted(train, Instances.full(N), SolverConfig(lam))
            times["SVM-FULL"].append(clock() - t0)
            ps, ds = derive_seed(config.seed, 11, N, rep), derive_seed(config.seed, 12, N, rep)
            for crit in ("A", "L"):
                t0 = clock()
                pil = pilot_fit(train, config.n0, ps, cfg.grid_for(config.n0),
                                with_hessian=crit == "A")
                leverage_fit(train, pil, crit, n, ds, cfg.grid_for(n + config.n0),
                             delta=config.delta_scale / N, gacv_scope=config.gacv_scope)
                times[f"LC-{crit}"].append(clock() - t0)
            t0 = clock()
            leverage_fit(train, uniform_pilot(train, config.n0, ps), "UNIF", n, ds,
                         cfg.grid_for(n + config.n0), gacv_scope=config.gacv_scope)
            times["LC-UNIF"].append(clock() - t0)
        med = {m: float(np.median(v)) for m, v in times.items()}
        for m in times:
            rows.append([N, m, med[m], config.timing_repeats, med["SVM-FULL"] / med[m]])
        full_times.append(med["SVM-FULL"])
        ratios.append(med["SVM-FULL"] / med["LC-L"])
        log.info("N=%d: %s", N, {m: round(v, 4) for m, v in med.items()})
    checks = {
        "full_time_increasing": bool(np.all(np.diff(full_times) > 0)),
        "ratio_full_over_L_increasing": bool(np.all(np.diff(ratios) > 0)),
        "L_not_slower_than_A": all(r_l[2] <= r_a[2] for r_a, r_l in zip(
            [r for r in rows if r[1] == "LC-A"], [r for r in rows if r[1] == "LC-L"])),
    }
    if not checks["full_time_increasing"]:
        log.warning("full-sample SVM time is not increasing in N: %s", full_times)
    if config.out is not None:
        write_table(Path(config.out) / "timing.csv", TIMING_COLUMNS, rows)
    return TimingTable(rows, checks)
