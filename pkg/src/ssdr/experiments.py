"""Monte Carlo and cross-validation benchmarking of the reduction pipelines.

A pipeline is one precision estimator plus a sweep over reduced dimensions.
For every training/test split the pipeline builds the discriminant matrix,
extracts the projection basis once, and for each r fits plain QDA on the
projected training data and records the estimated conditional error rate on
the projected test data. The full-feature QDA error is always recorded as a
baseline under the method name "qda_full".

Reproducibility contract: every work unit (replicate, repeat, tuning split)
derives its RNG stream from the master seed and the unit index via
SeedSequence spawn keys, never from execution order, so results are
identical for any parallelism degree.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import qda
from .datamodel import (
    ClassSummary,
    LabeledDataset,
    jitter,
    standardize,
    summarize,
)
from .errors import InvalidInputError, SsdrError, StratificationError, TuningError
from .estimators import PrecisionEstimatorSpec, mry
from .numerics import spd_cholesky, svd_full, symmetrize
from .qda import CerReport
from .reduction import build_discriminant_matrix, discriminant_matrix_from

# spawn-key namespaces for per-unit RNG streams
_NS_PARAMS = 0
_NS_REPLICATE = 1
_NS_CV_REPEAT = 2
_NS_JITTER = 3

_SAMPLE_SPEC = PrecisionEstimatorSpec(kind="sample_inverse")

N_POLICIES = ("p+1", "2p", "6p")


@dataclass(frozen=True)
class SimulationConfig:
    """One of the four multivariate-normal benchmark configurations."""

    config_id: int
    p: int
    means: tuple
    covs: tuple
    n_i: int
    n_policy: str
    replicates: int
    master_seed: int
    pool_size: int = 5000

    @property
    def k(self) -> int:
        return len(self.means)


def _config2_sigma3() -> np.ndarray:
    s = np.full((10, 10), 1.0)
    np.fill_diagonal(s, 2.0)
    s[2, :] = 0.0
    s[:, 2] = 0.0
    s[2, 2] = 10.0
    return s


_CONFIG3_SIGMA = np.array([
    [10, 4, 5, 4, 3, 4, 4, 5, 4, 3],
    [4, 10, 5, 2, 4, 3, 3, 5, 4, 3],
    [5, 5, 10, 5, 5, 3, 4, 4, 4, 4],
    [4, 2, 5, 10, 3, 4, 2, 3, 4, 3],
    [3, 4, 5, 3, 12, 3, 4, 5, 3, 3],
    [4, 3, 3, 4, 3, 9, 3, 4, 4, 4],
    [4, 3, 4, 2, 4, 3, 14, 2, 2, 2],
    [5, 5, 4, 3, 5, 4, 2, 12, 1, -0.5],
    [4, 4, 4, 4, 3, 4, 2, 1, 14, -1],
    [3, 3, 4, 3, 3, 4, 2, -0.5, -1, 11],
], dtype=float)

_CONFIG2_MU1 = np.array(
    [-1.43, -0.66, -0.94, 0.31, -0.19, 0.89, 0.25, -0.34, 1.25, -1.60]
)


def simulation_config(config_id: int, n_policy, replicates: int = 200,
                      master_seed: int = 0,
                      pool_size: int = 5000) -> SimulationConfig:
    """Materialize a benchmark configuration.

    Configurations: (1) two spherical classes, p=10, mean shift of one;
    (2) three classes with spherical, intra-class, and spiked covariances,
    p=10; (3) three classes, two sharing a dense covariance, one spherical,
    p=10, large mean shifts; (4) two classes, p=50, spherical vs intra-class
    covariance, second mean drawn once uniform(0, 1) from the master seed.

    n_policy is one of "p+1", "2p", "6p", or an explicit integer.
    """
    if config_id == 1:
        p = 10
        means = (np.zeros(p), np.ones(p))
        covs = (np.eye(p), np.eye(p))
    elif config_id == 2:
        p = 10
        means = (_CONFIG2_MU1.copy(), _CONFIG2_MU1 + 1.0, _CONFIG2_MU1 + 2.0)
        covs = (np.eye(p), np.eye(p) + np.ones((p, p)), _config2_sigma3())
    elif config_id == 3:
        p = 10
        means = (np.zeros(p), np.full(p, 5.0), np.full(p, 10.0))
        covs = (_CONFIG3_SIGMA.copy(), _CONFIG3_SIGMA.copy(), np.eye(p))
    elif config_id == 4:
        p = 50
        rng = np.random.default_rng(
            np.random.SeedSequence(master_seed, spawn_key=(_NS_PARAMS,))
        )
        mu2 = rng.uniform(0.0, 1.0, size=p)  # drawn once per study
        means = (np.zeros(p), mu2)
        covs = (np.eye(p), np.eye(p) + 2.0 * np.ones((p, p)))
    else:
        raise InvalidInputError(f"unknown config_id {config_id}")

    if isinstance(n_policy, str):
        if n_policy not in N_POLICIES:
            raise InvalidInputError(
                f"n_policy must be one of {N_POLICIES} or an integer"
            )
        n_i = {"p+1": p + 1, "2p": 2 * p, "6p": 6 * p}[n_policy]
        policy = n_policy
    else:
        n_i = int(n_policy)
        policy = str(n_i)
    if not 2 <= n_i < pool_size:
        raise InvalidInputError(f"n_i={n_i} must be in [2, pool_size)")
    if replicates < 1:
        raise InvalidInputError("replicates must be >= 1")
    return SimulationConfig(
        config_id=config_id, p=p,
        means=tuple(means), covs=tuple(symmetrize(c) for c in covs),
        n_i=n_i, n_policy=policy, replicates=replicates,
        master_seed=master_seed, pool_size=pool_size,
    )


@dataclass(frozen=True)
class PipelineSpec:
    """One estimator plus the dimension sweep and preprocessing flags.

    ``dims`` of None means sweep r = 1..p. For MRY estimators with
    ``tune_mry_lambda``, the penalty parameter is selected per work unit by
    grid search: the grid is geometric over
    [c_lo * e_min, c_hi * e_max], where e_min/e_max are the extreme
    eigenvalues of the class sample precision matrices (pseudo-inverse
    eigenvalues when singular).
    """

    name: str
    estimator: PrecisionEstimatorSpec
    dims: tuple | None = None
    standardize: bool = False
    jitter_sigma: float | None = None
    tune_mry_lambda: bool = True
    lambda_grid_size: int = 10
    lambda_c_lo: float = 1e-3
    lambda_c_hi: float = 1.0
    validation_fraction: float = 0.25
    inner_folds: int = 5
    # Tuning fits only need validation-grade accuracy; candidates that
    # cannot converge within this budget are dropped from the grid. The
    # final fit always runs at the estimator's own tolerance and budget.
    tuning_admm_tol: float = 1e-4
    tuning_admm_max_iters: int = 1000

    def resolved_dims(self, p: int) -> tuple:
        dims = tuple(range(1, p + 1)) if self.dims is None else tuple(self.dims)
        if not dims:
            raise InvalidInputError("dimension sweep is empty")
        if any(not 1 <= r <= p for r in dims):
            raise InvalidInputError(f"dims {dims} outside 1..{p}")
        return dims


def mvn_sample(mean, cov, n: int, seed) -> np.ndarray:
    """Draw n multivariate normal rows mean + L z, deterministic per seed."""
    mean = np.asarray(mean, dtype=float)
    chol = spd_cholesky(cov)
    rng = np.random.default_rng(seed)
    return _mvn_rows(mean, chol, n, rng)


def _mvn_rows(mean: np.ndarray, chol: np.ndarray, n: int,
              rng: np.random.Generator) -> np.ndarray:
    if n == 0:
        return np.empty((0, mean.size))
    z = rng.standard_normal((n, mean.size))
    return mean + z @ chol.T


def _full_qda_cer(train: LabeledDataset, test: LabeledDataset) -> float:
    model = qda.fit(summarize(train), _SAMPLE_SPEC)
    return qda.conditional_error_rate(model, test)


def _sweep_cers(train: LabeledDataset, test: LabeledDataset,
                u_full: np.ndarray, dims) -> dict:
    """Reduced-QDA error per r, sharing one rotation of the data.

    The projected class moments for dimension r are the leading r x r block
    of the fully rotated moments, so the sweep costs one rotation plus one
    small QDA fit per r. A singular projected covariance marks that r as
    missing (None) instead of aborting the sweep.
    """
    rot_train = train.with_features(train.features @ u_full)
    rot_test_feats = test.features @ u_full
    summaries = summarize(rot_train)
    out = {}
    for r in dims:
        subs = [
            ClassSummary(class_id=c.class_id, n_i=c.n_i, mean=c.mean[:r],
                         cov=np.array(c.cov[:r, :r]), prior=c.prior)
            for c in summaries
        ]
        try:
            model = qda.fit(subs, _SAMPLE_SPEC)
            out[r] = qda.conditional_error_rate(
                model, test.with_features(rot_test_feats[:, :r])
            )
        except SsdrError:
            out[r] = None
    return out


def _pipeline_cers(train: LabeledDataset, test: LabeledDataset,
                   spec: PrecisionEstimatorSpec, dims) -> dict:
    """Fit one resolved pipeline (no tuning) and sweep dimensions."""
    try:
        summaries = summarize(train)
        mhat = build_discriminant_matrix(summaries, spec)
        u_full, _, _ = svd_full(mhat)
    except SsdrError:
        return {r: None for r in dims}
    return _sweep_cers(train, test, u_full, dims)


def lambda_grid(summaries, grid_size: int = 10, c_lo: float = 1e-3,
                c_hi: float = 1.0) -> np.ndarray:
    """Geometric penalty grid informed by class sample precision spectra."""
    prec_min, prec_max = np.inf, 0.0
    for cs in summaries:
        evals = np.linalg.eigvalsh(np.asarray(cs.cov))
        pos = evals[evals > 1e-12 * max(evals[-1], 1e-300)]
        if pos.size == 0:
            continue
        prec_min = min(prec_min, 1.0 / pos[-1])
        prec_max = max(prec_max, 1.0 / pos[0])
    if not np.isfinite(prec_min) or prec_max <= 0:
        raise TuningError("class covariances have no positive eigenvalues")
    lo, hi = c_lo * prec_min, c_hi * prec_max
    if not lo < hi:
        return np.array([hi])
    return np.geomspace(lo, hi, grid_size)


def _holdout_split(ds: LabeledDataset, fraction: float,
                   rng: np.random.Generator):
    """Per-class holdout: ~fraction of each class to validation, rest kept."""
    val_mask = np.zeros(ds.n, dtype=bool)
    for c in range(ds.k):
        idx = np.nonzero(ds.labels == c)[0]
        idx = idx[rng.permutation(idx.size)]
        n_val = max(1, int(round(fraction * idx.size)))
        n_val = min(n_val, idx.size - 2)  # keep >= 2 rows for summaries
        if n_val < 1:
            raise StratificationError(
                f"class {c} too small ({idx.size}) for a validation split"
            )
        val_mask[idx[:n_val]] = True
    return ds.subset(~val_mask), ds.subset(val_mask)


def _stratified_fold_ids(labels: np.ndarray, folds: int,
                         rng: np.random.Generator) -> np.ndarray:
    """Fold id per row, preserving class proportions."""
    counts = np.bincount(labels)
    small = np.nonzero(counts < folds)[0]
    if small.size:
        raise StratificationError(
            f"classes {small.tolist()} have fewer than {folds} observations"
        )
    assign = np.empty(labels.size, dtype=int)
    for c in range(counts.size):
        idx = np.nonzero(labels == c)[0]
        idx = idx[rng.permutation(idx.size)]
        assign[idx] = np.arange(idx.size) % folds
    return assign


def _candidate_score(cers_by_r: dict) -> float | None:
    vals = [v for v in cers_by_r.values() if v is not None]
    return min(vals) if vals else None


def _grid_scores_one_split(sub: LabeledDataset, val: LabeledDataset,
                           pipeline: PipelineSpec, grid: np.ndarray,
                           dims) -> dict:
    """Best-over-r validation error per penalty candidate on one split.

    Candidates are solved from largest penalty down, warm-starting each
    class's ADMM from its neighbor's solution; small penalties on singular
    covariances are expensive from a cold start.
    """
    summaries = summarize(sub)
    warm = {cs.class_id: None for cs in summaries}
    base = replace(
        pipeline.estimator,
        admm_tol=max(pipeline.estimator.admm_tol, pipeline.tuning_admm_tol),
        admm_max_iters=min(pipeline.estimator.admm_max_iters,
                           pipeline.tuning_admm_max_iters),
    )
    scores = {}
    for lam in sorted(grid, reverse=True):
        spec = base.with_lambda(lam)
        try:
            omegas = []
            for cs in summaries:
                fitted = mry(cs, spec, warm_start=warm[cs.class_id])
                warm[cs.class_id] = fitted.omega
                omegas.append(fitted.omega)
            mhat = discriminant_matrix_from(summaries, omegas)
            u_full, _, _ = svd_full(mhat)
            scores[float(lam)] = _candidate_score(
                _sweep_cers(sub, val, u_full, dims))
        except SsdrError:
            scores[float(lam)] = None
    return scores


def tune_lambda(train: LabeledDataset, pipeline: PipelineSpec,
                mode: str = "holdout", rng=None, seed=None,
                dims=None) -> float:
    """Select the MRY penalty by validation error over the eigenvalue grid.

    mode "holdout" fits each candidate on a per-class training split and
    scores it by the best-over-r validation error; mode "cv" averages that
    error over ``pipeline.inner_folds`` stratified folds. Ties (and flat
    profiles) resolve toward the largest penalty, i.e. the sparsest
    estimate. Raises TuningError when every candidate fails.
    """
    if pipeline.estimator.kind != "mry":
        raise InvalidInputError("lambda tuning applies to MRY pipelines only")
    if rng is None:
        rng = np.random.default_rng(seed)
    dims = pipeline.resolved_dims(train.p) if dims is None else tuple(dims)
    grid = lambda_grid(summarize(train), pipeline.lambda_grid_size,
                       pipeline.lambda_c_lo, pipeline.lambda_c_hi)

    if mode == "holdout":
        sub_train, val = _holdout_split(ds=train,
                                        fraction=pipeline.validation_fraction,
                                        rng=rng)
        splits = [(sub_train, val)]
    elif mode == "cv":
        fold_ids = _stratified_fold_ids(train.labels, pipeline.inner_folds, rng)
        splits = [
            (train.subset(fold_ids != f), train.subset(fold_ids == f))
            for f in range(pipeline.inner_folds)
        ]
    else:
        raise InvalidInputError(f"unknown tuning mode {mode!r}")

    per_split = [
        _grid_scores_one_split(sub, val, pipeline, grid, dims)
        for sub, val in splits
    ]
    best_lam, best_score = None, np.inf
    for lam in grid:  # ascending; <= prefers larger lambda on ties
        vals = [s[float(lam)] for s in per_split]
        if any(v is None for v in vals):
            continue
        score = float(np.mean(vals))
        if score <= best_score:
            best_lam, best_score = float(lam), score
    if best_lam is None:
        raise TuningError("every penalty candidate failed estimation")
    return best_lam


def _resolve_pipeline_spec(train: LabeledDataset, pipeline: PipelineSpec,
                           mode: str, rng) -> PrecisionEstimatorSpec:
    spec = pipeline.estimator
    if spec.kind == "mry" and pipeline.tune_mry_lambda:
        lam = tune_lambda(train, pipeline, mode=mode, rng=rng)
        spec = spec.with_lambda(lam)
    return spec


def _mc_replicate_worker(args) -> dict:
    cfg, pipelines, j = args
    chols = [spd_cholesky(c) for c in cfg.covs]
    rng = np.random.default_rng(
        np.random.SeedSequence(cfg.master_seed, spawn_key=(_NS_REPLICATE, j))
    )
    feats, labels = [], []
    for i, (mu, chol) in enumerate(zip(cfg.means, chols)):
        pool = _mvn_rows(np.asarray(mu), chol, cfg.pool_size, rng)
        pool = pool[rng.permutation(cfg.pool_size)]
        feats.append(pool)
        labels.append(np.full(cfg.pool_size, i, dtype=np.int64))
    train_mask = np.zeros(cfg.pool_size * cfg.k, dtype=bool)
    for i in range(cfg.k):
        train_mask[i * cfg.pool_size:i * cfg.pool_size + cfg.n_i] = True
    allfeat = np.vstack(feats)
    alllab = np.concatenate(labels)
    train = LabeledDataset(allfeat[train_mask], alllab[train_mask])
    test = LabeledDataset(allfeat[~train_mask], alllab[~train_mask])

    out = {}
    try:
        out[("qda_full", None)] = _full_qda_cer(train, test)
    except SsdrError:
        out[("qda_full", None)] = None

    for idx, pl in enumerate(pipelines):
        dims = pl.resolved_dims(cfg.p)
        pl_rng = np.random.default_rng(
            np.random.SeedSequence(cfg.master_seed,
                                   spawn_key=(_NS_REPLICATE, j, idx))
        )
        tr, te = train, test
        try:
            if pl.standardize:
                tr, te = standardize(tr, te)
            spec = _resolve_pipeline_spec(tr, pl, "holdout", pl_rng)
            cers = _pipeline_cers(tr, te, spec, dims)
        except SsdrError:
            cers = {r: None for r in dims}
        for r in dims:
            out[(pl.name, r)] = cers[r]
    return out


def _parallel_map(fn, items, threads: int):
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * threads))))


def run_mc_study(cfg: SimulationConfig, pipelines,
                 threads: int = 1) -> CerReport:
    """Monte Carlo study: per replicate, draw per-class pools, train on the
    first n_i rows of each shuffled pool, test on the remainder, and record
    error rates for the full-feature baseline and every (pipeline, r).

    Estimator failures mark cells missing for that replicate and are counted
    in the report, never fatal.
    """
    pipelines = list(pipelines)
    names = [pl.name for pl in pipelines]
    if len(set(names)) != len(names) or "qda_full" in names:
        raise InvalidInputError("pipeline names must be unique and not 'qda_full'")
    args = [(cfg, pipelines, j) for j in range(cfg.replicates)]
    results = _parallel_map(_mc_replicate_worker, args, threads)

    report = CerReport(metadata={
        "kind": "simulate",
        "config_id": cfg.config_id,
        "p": cfg.p,
        "k": cfg.k,
        "n_i": cfg.n_i,
        "n_policy": cfg.n_policy,
        "pool_size": cfg.pool_size,
        "replicates": cfg.replicates,
        "master_seed": cfg.master_seed,
        "means": [np.asarray(m).tolist() for m in cfg.means],
        "pipelines": [pl.name for pl in pipelines],
    })
    keys = [("qda_full", None)]
    for pl in pipelines:
        keys += [(pl.name, r) for r in pl.resolved_dims(cfg.p)]
    for method, r in keys:
        cell = report.cell(method, r)
        for res in results:
            rate = res.get((method, r))
            if rate is None:
                cell.failures += 1
            else:
                cell.rates.append(rate)
    report.validate()
    return report


def _cv_repeat_worker(args) -> dict:
    ds, pipeline, folds, seed, t, dims = args
    rng = np.random.default_rng(
        np.random.SeedSequence(seed, spawn_key=(_NS_CV_REPEAT, t))
    )
    fold_ids = _stratified_fold_ids(ds.labels, folds, rng)
    keys = [("qda_full", None)] + [(pipeline.name, r) for r in dims]
    fold_cers = {key: [] for key in keys}
    for f in range(folds):
        train = ds.subset(fold_ids != f)
        test = ds.subset(fold_ids == f)
        if pipeline.standardize:
            train, test = standardize(train, test)
        try:
            fold_cers[("qda_full", None)].append(_full_qda_cer(train, test))
        except SsdrError:
            fold_cers[("qda_full", None)].append(None)
        fold_rng = np.random.default_rng(
            np.random.SeedSequence(seed, spawn_key=(_NS_CV_REPEAT, t, f))
        )
        try:
            spec = _resolve_pipeline_spec(train, pipeline, "cv", fold_rng)
            cers = _pipeline_cers(train, test, spec, dims)
        except SsdrError:
            cers = {r: None for r in dims}
        for r in dims:
            fold_cers[(pipeline.name, r)].append(cers[r])
    out = {}
    for key, vals in fold_cers.items():
        out[key] = None if any(v is None for v in vals) else float(np.mean(vals))
    return out


def repeated_kfold_cv(ds: LabeledDataset, pipeline: PipelineSpec,
                      folds: int = 10, repeats: int = 50, seed: int = 0,
                      threads: int = 1) -> CerReport:
    """Repeated stratified k-fold cross-validation.

    Per repeat: one stratified fold assignment; the recorded rate for a cell
    is the mean of its fold error rates. The report aggregates those means
    across repeats. Jitter (when configured) is applied once to the full
    dataset up front with a seed derived from the master seed;
    studentization is fitted per training fold.
    """
    if pipeline.jitter_sigma is not None:
        jitter_seed = int(np.random.SeedSequence(
            seed, spawn_key=(_NS_JITTER,)).generate_state(1)[0])
        ds = jitter(ds, pipeline.jitter_sigma, jitter_seed)
    else:
        jitter_seed = None
    dims = pipeline.resolved_dims(ds.p)
    _stratified_fold_ids(ds.labels, folds, np.random.default_rng(0))  # validate sizes
    args = [(ds, pipeline, folds, seed, t, dims) for t in range(repeats)]
    results = _parallel_map(_cv_repeat_worker, args, threads)

    report = CerReport(metadata={
        "kind": "cv",
        "n": ds.n, "p": ds.p, "k": ds.k,
        "folds": folds, "repeats": repeats, "master_seed": seed,
        "standardize": pipeline.standardize,
        "jitter_sigma": pipeline.jitter_sigma,
        "jitter_seed": jitter_seed,
        "pipelines": [pipeline.name],
    })
    keys = [("qda_full", None)] + [(pipeline.name, r) for r in dims]
    for method, r in keys:
        cell = report.cell(method, r)
        for res in results:
            rate = res.get((method, r))
            if rate is None:
                cell.failures += 1
            else:
                cell.rates.append(rate)
    report.validate()
    return report


def select_dimension(report: CerReport, method: str | None = None):
    """Best reduced dimension: argmin of the median rate, ties to smaller r.

    Returns (r_star, median_at_r_star). ``method`` may be omitted when the
    report sweeps dimensions for exactly one method.
    """
    dim_cells = [c for c in report.cells if c.r is not None and c.rates]
    if method is not None:
        dim_cells = [c for c in dim_cells if c.method == method]
    else:
        methods = {c.method for c in dim_cells}
        if len(methods) > 1:
            raise InvalidInputError(
                f"report covers methods {sorted(methods)}; pass method="
            )
    if not dim_cells:
        raise InvalidInputError("report has no dimension sweep to select from")
    best_r, best_med = None, np.inf
    for c in sorted(dim_cells, key=lambda c: c.r):
        med = float(np.median(c.rates))
        if med < best_med:  # strict < keeps the smallest r on ties
            best_r, best_med = c.r, med
    return best_r, best_med
