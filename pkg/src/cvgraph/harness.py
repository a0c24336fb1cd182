"""Simulation experiments: graph recovery, non-Gaussian designs, sparsity sweeps.

Every experiment yields :class:`MetricsRecord` rows and can write them to a
CSV file with a fixed header (see :data:`CSV_COLUMNS`) plus a ``.meta``
sidecar holding the resolved configuration. A successful run ends the CSV
with a ``# end rows=<count>`` line; a file without it was interrupted.
"""

import csv
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields

import numpy as np
import scipy.stats

from ._meta import read_meta, write_meta  # noqa: F401
from ._rng import derive_seed, make_rng
from .gaussian_model import sample
from .graphs import FAMILIES, make_instance
from .lasso import gram_problem, log_grid
from .selection import CRITERIA, cv_penalty, select_by_ic_gram
from .structure import CV_SCORES, METHODS, RULES, graph_lambda_max, graph_path, select_on_path

CSV_COLUMNS = ("family", "method", "criterion", "p", "n", "rep", "seed", "lambda", "shd",
               "tpr", "fdr", "fdr_defined", "status", "elapsed_seconds")
FOOTER = "# end rows=%d"
SKEW_ALPHA = 5.0
NOISE_VARIANCE = 0.1


# --- metrics ---

def _pair_states(adj):
    a = np.asarray(adj, dtype=bool)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("adjacency must be square")
    iu, ju = np.triu_indices(a.shape[0], 1)
    # 0: no edge, 1: i -> j (or undirected), 2: j -> i only
    fwd, bwd = a[iu, ju], a[ju, iu]
    return np.where(fwd, 1, np.where(bwd, 2, 0))


def _check_same(est, truth):
    if np.shape(est) != np.shape(truth):
        raise ValueError("adjacency shapes differ: %r vs %r" % (np.shape(est), np.shape(truth)))


def shd(est, truth):
    """Structural Hamming distance.

    Each unordered node pair counts once if its state differs: an edge
    inserted, deleted or (for directed graphs) reversed.
    """
    _check_same(est, truth)
    e, t = np.asarray(est, bool), np.asarray(truth, bool)
    if (e == e.T).all() and (t == t.T).all():
        return int(np.triu(e ^ t, 1).sum())
    return int((_pair_states(e) != _pair_states(t)).sum())


def _edges(adj):
    a = np.asarray(adj, dtype=bool)
    if (a == a.T).all():
        return np.triu(a, 1)
    return a


def tpr(est, truth):
    """``|est & truth| / |truth|``; None when the truth has no edges."""
    _check_same(est, truth)
    e, t = _edges(est), _edges(truth)
    nt = int(t.sum())
    return None if nt == 0 else float((e & t).sum()) / nt


def fdr(est, truth):
    """``|est - truth| / |est|``; None (undefined) for an empty estimate."""
    _check_same(est, truth)
    e, t = _edges(est), _edges(truth)
    ne = int(e.sum())
    return None if ne == 0 else float((e & ~t).sum()) / ne


def support_metrics(est, truth):
    """SHD, TPR and FDR between two index sets."""
    est, truth = set(est), set(truth)
    tp = len(est & truth)
    return (len(est ^ truth), tp / len(truth) if truth else None,
            (len(est) - tp) / len(est) if est else None)


@dataclass(frozen=True)
class MetricsRecord:
    family: str
    method: str
    criterion: str
    p: int
    n: int
    rep: int
    seed: int
    lam: float = None
    shd: int = None
    tpr: float = None
    fdr: float = None
    status: str = "ok"
    elapsed_seconds: float = 0.0

    @property
    def fdr_defined(self):
        return self.fdr is not None


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


def record_row(rec):
    return [rec.family, rec.method, rec.criterion, str(rec.p), str(rec.n), str(rec.rep),
            str(rec.seed), _fmt(rec.lam), _fmt(rec.shd), _fmt(rec.tpr), _fmt(rec.fdr),
            "1" if rec.fdr_defined else "0", rec.status, "%.6f" % rec.elapsed_seconds]


def _metric_record(cell, rep, seed, lam, est, truth, elapsed):
    f = fdr(est, truth)
    return MetricsRecord(*cell, rep=rep, seed=seed, lam=float(lam), shd=shd(est, truth),
                         tpr=tpr(est, truth), fdr=f,
                         status="ok" if f is not None else "fdr_undefined",
                         elapsed_seconds=elapsed)


def summarize(records):
    """Mean and standard deviation of SHD, TPR and FDR per cell.

    Returns a dict keyed by ``(family, method, criterion, p, n)``; each
    value holds ``shd_mean``, ``shd_sd``, ``tpr_mean``, ``fdr_mean``,
    ``fdr_sd``, ``reps``, ``missing`` (timed-out repetitions) and
    ``fdr_undefined`` (empty estimates). Both kinds are left out of the
    FDR mean; timeouts are also left out of the SHD and TPR means.
    """
    cells = {}
    for r in records:
        cells.setdefault((r.family, r.method, r.criterion, r.p, r.n), []).append(r)
    out = {}
    for key, rs in cells.items():
        shds = [r.shd for r in rs if r.shd is not None]
        tprs = [r.tpr for r in rs if r.tpr is not None]
        fdrs = [r.fdr for r in rs if r.fdr is not None]
        out[key] = dict(
            reps=len(rs),
            shd_mean=float(np.mean(shds)) if shds else math.nan,
            shd_sd=float(np.std(shds, ddof=1)) if len(shds) > 1 else math.nan,
            tpr_mean=float(np.mean(tprs)) if tprs else math.nan,
            fdr_mean=float(np.mean(fdrs)) if fdrs else math.nan,
            fdr_sd=float(np.std(fdrs, ddof=1)) if len(fdrs) > 1 else math.nan,
            missing=sum(r.status == "timeout" for r in rs),
            fdr_undefined=sum(r.status == "fdr_undefined" for r in rs))
    return out


# --- configuration ---

def _int_list(text):
    vals = [int(x) for x in str(text).split(",") if x.strip()]
    if not vals or any(v <= 0 for v in vals):
        raise ValueError("expected a comma-separated list of positive integers, got %r"
                         % (text,))
    return tuple(vals)


def _str_list(text):
    return tuple(x.strip() for x in str(text).split(",") if x.strip())


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment grid; every combination of the list fields is a cell.

    ``family`` and ``method`` may list several values. ``lambda_min_rule``
    is ``"truth"`` (stop the grid once the estimate has twice as many edges
    as the true graph) or ``"ratio"`` (``lambda_min_ratio * lambda_max``).
    """

    family: tuple = ("band",)
    method: tuple = ("NS",)
    criteria: tuple = ("cv", "aic", "bic", "ebic")
    n_list: tuple = (250, 1000, 4000)
    p_list: tuple = (25, 50)
    reps: int = 20
    K: int = 5
    gamma: float = 0.5
    rule: str = "OR"
    seed: int = 0
    wall_time_budget: float = math.inf
    grid_size: int = 100
    output_path: str = "results.csv"
    lambda_min_rule: str = "truth"
    lambda_min_ratio: float = 0.01
    threads: int = 1
    cv_score: str = "auto"
    ic_likelihood: str = "joint"
    off_diag_value: float = 0.3
    diag_boost: float = 0.1

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if self.K < 2:
            raise ValueError("K must be >= 2")
        if any(n < self.K for n in self.n_list):
            raise ValueError("every n must be >= K")
        if any(p < 2 for p in self.p_list):
            raise ValueError("every p must be >= 2")
        for f in self.family:
            if f not in FAMILIES:
                raise ValueError("unknown family %r" % f)
        for m in self.method:
            if m not in METHODS:
                raise ValueError("unknown method %r" % m)
        for c in self.criteria:
            if c not in CRITERIA:
                raise ValueError("unknown criterion %r" % c)
        if self.rule not in RULES:
            raise ValueError("rule must be AND or OR")
        if self.lambda_min_rule not in ("truth", "ratio"):
            raise ValueError("lambda_min_rule must be 'truth' or 'ratio'")
        if self.grid_size < 2:
            raise ValueError("grid_size must be >= 2")
        if not self.wall_time_budget > 0:
            raise ValueError("wall_time_budget must be positive")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.cv_score not in CV_SCORES + ("auto",):
            raise ValueError("cv_score must be 'auto' or one of %s" % ", ".join(CV_SCORES))
        if self.ic_likelihood not in ("joint", "pseudo"):
            raise ValueError("ic_likelihood must be 'joint' or 'pseudo'")

    def replace(self, **changes):
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d.update(changes)
        return ExperimentConfig(**d)

    def to_lines(self):
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            out.append("%s=%s" % (f.name, v))
        return out


_PARSERS = {
    "family": _str_list, "method": _str_list, "criteria": _str_list,
    "n_list": _int_list, "p_list": _int_list, "reps": int, "K": int, "gamma": float,
    "rule": lambda v: v.strip().upper(), "seed": int,
    "wall_time_budget": float, "grid_size": int, "output_path": str.strip,
    "lambda_min_rule": str.strip, "lambda_min_ratio": float, "threads": int,
    "cv_score": str.strip, "ic_likelihood": str.strip, "off_diag_value": float,
    "diag_boost": float,
}


def parse_config_text(text, source="<config>"):
    """Parse ``key=value`` lines; ``#`` starts a comment. Unknown keys are errors."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError("%s:%d: expected key=value, got %r" % (source, lineno, raw))
        key, val = (x.strip() for x in line.split("=", 1))
        if key not in _PARSERS:
            raise ValueError("%s:%d: unknown key %r (known: %s)"
                             % (source, lineno, key, ", ".join(sorted(_PARSERS))))
        if key in values:
            raise ValueError("%s:%d: duplicate key %r" % (source, lineno, key))
        try:
            values[key] = _PARSERS[key](val)
        except ValueError as exc:
            raise ValueError("%s:%d: bad value for %s: %s" % (source, lineno, key, exc))
    return ExperimentConfig(**values)


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read(), source=str(path))


# --- output ---

class CSVSink:
    """Incremental CSV writer; :meth:`close` appends the completion footer."""

    def __init__(self, path):
        self.path = path
        self._fh = open(path, "w", newline="", encoding="utf-8")
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow(CSV_COLUMNS)
        self.rows = 0

    def write(self, records):
        for r in records:
            self._w.writerow(record_row(r))
            self.rows += 1
        self._fh.flush()

    def close(self, complete=True):
        if complete:
            self._fh.write(FOOTER % self.rows + "\n")
        self._fh.close()


def read_results(path):
    """Rows of a results CSV as dicts, plus whether the footer was present."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    complete = bool(lines) and lines[-1].startswith("# end rows=")
    body = [ln for ln in lines if not ln.startswith("#")]
    return list(csv.DictReader(body)), complete


def _run(records_iter, path, meta_lines):
    sink = CSVSink(path)
    ok = False
    try:
        for batch in records_iter:
            sink.write(batch)
        ok = True
    finally:
        sink.close(complete=ok)
    write_meta(path, meta_lines)
    return sink.rows


# --- graph experiments ---

def truth_lambda_min(X, method, truth_edges, rule="OR", pilot_size=50, ratio=0.01):
    """Smallest pilot-grid penalty whose estimate has fewer than ``2 |E*|`` edges.

    Falls back to ``ratio * lambda_max`` when the truth is empty or the
    threshold is never reached on the pilot grid.
    """
    lmax = graph_lambda_max(X)
    if truth_edges == 0:
        return ratio * lmax
    pilot = log_grid(lmax, pilot_size, ratio)
    counts = graph_path(X, method, pilot, rule=rule).edge_counts
    ok = np.flatnonzero(counts < 2 * truth_edges)
    return float(pilot[ok[-1]]) if ok[-1] < pilot.size - 1 else ratio * lmax


def _graph_rep(cfg, inst, method, n, rep):
    """All criteria on one sample; returns records ordered by criterion."""
    fam, p = inst.family, inst.p
    seed = derive_seed(cfg.seed, "data", fam, p, n, rep)
    t0 = time.perf_counter()
    X = sample(inst.covariance, n, seed)
    lmax = graph_lambda_max(X)
    if cfg.lambda_min_rule == "truth":
        lmin = truth_lambda_min(X, method, inst.n_edges, cfg.rule,
                                ratio=cfg.lambda_min_ratio)
    else:
        lmin = cfg.lambda_min_ratio * lmax
    grid = log_grid(lmax, cfg.grid_size, lmin=lmin)
    gp = graph_path(X, method, grid, rule=cfg.rule)
    out = []
    for crit in cfg.criteria:
        sel = select_on_path(gp, X, crit, K=cfg.K, gamma=cfg.gamma,
                             seed=derive_seed(cfg.seed, "folds", fam, p, n, rep),
                             sigma=inst.covariance, likelihood=cfg.ic_likelihood,
                             cv_score=None if cfg.cv_score == "auto" else cfg.cv_score)
        est = gp.adjacency[sel.chosen_index]
        out.append(_metric_record((fam, method, crit, p, n), rep, seed, sel.chosen_lambda,
                                  est, inst.adjacency, time.perf_counter() - t0))
    return out


def _timeout_records(cfg, inst, method, n, rep):
    seed = derive_seed(cfg.seed, "data", inst.family, inst.p, n, rep)
    return [MetricsRecord(inst.family, method, c, inst.p, n, rep, seed, status="timeout")
            for c in cfg.criteria]


def _graph_group(cfg, inst, method, n, pool):
    """Repetitions of one (family, method, p, n) group under a shared deadline.

    Deadline checks happen between repetitions; repetitions that never
    started are reported with status ``timeout``.
    """
    deadline = time.monotonic() + cfg.wall_time_budget
    results = {}
    if pool is None:
        for rep in range(cfg.reps):
            if time.monotonic() > deadline:
                results[rep] = _timeout_records(cfg, inst, method, n, rep)
            else:
                results[rep] = _graph_rep(cfg, inst, method, n, rep)
    else:
        def job(rep):
            if time.monotonic() > deadline:
                return _timeout_records(cfg, inst, method, n, rep)
            return _graph_rep(cfg, inst, method, n, rep)
        for rep, recs in zip(range(cfg.reps), pool.map(job, range(cfg.reps))):
            results[rep] = recs
    # rows sorted by criterion, then rep
    return [results[rep][k] for k in range(len(cfg.criteria)) for rep in range(cfg.reps)]


def iter_experiment(cfg):
    """Yield one list of records per (family, method, p, n) group, in order."""
    pool = ThreadPoolExecutor(cfg.threads) if cfg.threads > 1 else None
    try:
        for fam in cfg.family:
            for p in cfg.p_list:
                inst = make_instance(fam, p, seed=derive_seed(cfg.seed, "graph", fam, p),
                                     off_diag_value=cfg.off_diag_value,
                                     diag_boost=cfg.diag_boost)
                for method in cfg.method:
                    for n in cfg.n_list:
                        yield _graph_group(cfg, inst, method, n, pool)
    finally:
        if pool is not None:
            pool.shutdown()


def run_experiment(cfg, output_path=None):
    """Run the whole grid, streaming rows to CSV; returns all records.

    With ``output_path=None`` the configured ``output_path`` is used; pass
    ``output_path=False`` to skip writing files.
    """
    path = cfg.output_path if output_path is None else output_path
    records = []

    def collect():
        for batch in iter_experiment(cfg):
            records.extend(batch)
            yield batch

    if path is False:
        for _ in collect():
            pass
        return records
    _run(collect(), path, cfg.to_lines())
    return records


# --- planted linear models ---

def draw_design(dist, n, p, rng):
    """``n x p`` matrix of independent draws from a named distribution.

    ``skew_normal``: location 0, scale 1, shape 5. ``log_normal``: exp of a
    standard normal. ``gaussian``: standard normal.
    """
    if dist == "skew_normal":
        return scipy.stats.skewnorm.rvs(SKEW_ALPHA, size=(n, p), random_state=rng)
    if dist == "log_normal":
        return np.exp(rng.standard_normal((n, p)))
    if dist == "gaussian":
        return rng.standard_normal((n, p))
    raise ValueError("unknown distribution %r" % (dist,))


def planted_coefficients(p, s, rng):
    """``s`` random coordinates drawn uniformly from ``[-2, -1] U [1, 2]``."""
    if not 0 <= s <= p:
        raise ValueError("need 0 <= s <= p")
    theta = np.zeros(p)
    idx = np.sort(rng.choice(p, size=s, replace=False))
    theta[idx] = rng.choice([-1.0, 1.0], size=s) * rng.uniform(1.0, 2.0, size=s)
    return theta


def planted_problem(dist, n, p, s, seed):
    """Centered data matrix ``[X, y]`` with ``y = X theta + eps``, plus ``theta``.

    ``eps`` is Gaussian with variance 0.1. Columns are centered, which
    plays the part of an intercept.
    """
    rng = make_rng(seed, "planted", dist)
    theta = planted_coefficients(p, s, rng)
    X = draw_design(dist, n, p, rng)
    y = X @ theta + rng.normal(0.0, math.sqrt(NOISE_VARIANCE), size=n)
    Z = np.column_stack([X, y])
    Z -= Z.mean(axis=0)
    return Z, theta


def planted_ratio(n, p):
    """Grid floor ratio for planted regressions: 1e-4 when ``n > p``, else 1e-2."""
    return 1e-4 if n > p else 1e-2


def _planted_rep(family, dist, n, p, s, rep, seed, criteria, K, gamma, grid_size, ratio):
    rs = derive_seed(seed, family, n, p, s, rep)
    t0 = time.perf_counter()
    Z, theta = planted_problem(dist, n, p, s, rs)
    truth = frozenset(int(i) for i in np.flatnonzero(theta))
    if ratio is None:
        ratio = planted_ratio(n, p)
    cv = cv_penalty(Z, p, K=K, grid_size=grid_size, lambda_min_ratio=ratio, seed=rs)
    out = []
    for crit in criteria:
        if crit == "cv":
            sel = cv
        elif crit in ("aic", "bic", "ebic"):
            sel = select_by_ic_gram(cv.metadata["path"], gram_problem(Z, p), crit, gamma)
        else:
            raise ValueError("criterion %r is not available for planted models" % crit)
        d, tp_rate, fd_rate = support_metrics(sel.chosen_support, truth)
        out.append(MetricsRecord(family, "Lasso", crit, p, n, rep, rs, sel.chosen_lambda,
                                 d, tp_rate, fd_rate,
                                 "ok" if fd_rate is not None else "fdr_undefined",
                                 time.perf_counter() - t0))
    return out


def _planted_groups(family, dist, n_list, p, s, reps, seed, criteria, K, gamma,
                    grid_size, threads, ratio, wall_time=math.inf):
    """One batch per ``n``; each batch has its own cooperative deadline."""
    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    mapper = pool.map if pool is not None else map
    try:
        for n in n_list:
            deadline = time.monotonic() + wall_time

            def job(r):
                if time.monotonic() > deadline:
                    rs = derive_seed(seed, family, n, p, s, r)
                    return [MetricsRecord(family, "Lasso", c, p, n, r, rs, status="timeout")
                            for c in criteria]
                return _planted_rep(family, dist, n, p, s, r, seed, criteria, K, gamma,
                                    grid_size, ratio)

            reps_out = list(mapper(job, range(reps)))
            yield [reps_out[r][k] for k in range(len(criteria)) for r in range(reps)]
    finally:
        if pool is not None:
            pool.shutdown()


def nongaussian_experiment(dist, n, p, s, reps, seed=0, criteria=("cv", "ebic"), K=5,
                           gamma=0.5, grid_size=100, out=None, threads=1,
                           lambda_min_ratio=None, wall_time=math.inf):
    """Lasso support recovery with a non-Gaussian design.

    Rows of ``X`` have independent ``dist`` coordinates, ``s`` coefficients
    are planted and ``y = X theta + eps``. Each criterion's selected
    support is compared with the planted one. ``n`` may be an int or a
    list of ints. ``lambda_min_ratio=None`` uses :func:`planted_ratio`;
    ``wall_time`` is the per-``n`` deadline in seconds.
    """
    n_list = (n,) if np.isscalar(n) else tuple(n)
    groups = _planted_groups(dist, dist, n_list, p, s, reps, seed, criteria, K, gamma,
                             grid_size, threads, lambda_min_ratio, wall_time)
    meta = ["experiment=nongaussian", "dist=%s" % dist,
            "n_list=%s" % ",".join(map(str, n_list)), "p=%d" % p, "s=%d" % s,
            "reps=%d" % reps, "seed=%d" % seed, "criteria=%s" % ",".join(criteria),
            "wall_time=%s" % wall_time, "K=%d" % K, "gamma=%s" % gamma,
            "grid_size=%d" % grid_size,
            "lambda_min_ratio=%s" % ("auto" if lambda_min_ratio is None else lambda_min_ratio),
            "skew_normal_shape=%s" % SKEW_ALPHA, "noise_variance=%s" % NOISE_VARIANCE,
            "centered=1"]
    return _collect(groups, out, meta)


def sparsity_sweep(p, s_list, n_list, reps, seed=0, criteria=("cv",), K=5, gamma=0.5,
                   grid_size=100, dist="gaussian", out=None, threads=1,
                   lambda_min_ratio=None, wall_time=math.inf):
    """Planted-sparsity sweep; the ``family`` column reads ``sparsity_s<s>``."""
    def groups():
        for s in s_list:
            yield from _planted_groups("sparsity_s%d" % s, dist, tuple(n_list), p, s, reps,
                                       seed, criteria, K, gamma, grid_size, threads,
                                       lambda_min_ratio, wall_time)
    meta = ["experiment=sparsity_sweep", "dist=%s" % dist, "p=%d" % p,
            "s_list=%s" % ",".join(map(str, s_list)),
            "n_list=%s" % ",".join(map(str, n_list)), "reps=%d" % reps, "seed=%d" % seed,
            "criteria=%s" % ",".join(criteria), "wall_time=%s" % wall_time, "K=%d" % K,
            "gamma=%s" % gamma,
            "grid_size=%d" % grid_size,
            "lambda_min_ratio=%s" % ("auto" if lambda_min_ratio is None else lambda_min_ratio),
            "noise_variance=%s" % NOISE_VARIANCE, "centered=1"]
    return _collect(groups(), out, meta)


def _collect(groups, out, meta):
    records = []

    def it():
        for batch in groups:
            records.extend(batch)
            yield batch

    if out is None:
        for _ in it():
            pass
    else:
        _run(it(), out, meta)
    return records
