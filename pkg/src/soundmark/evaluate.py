"""Evaluation harness: CE metrics, leave-one-out cross-validation, SNR sweep.

One survey location is held out per fold; GPs (or the direct-regression
baseline) are refit on the remaining locations' mean features and every
held-out window is localized on its own, so a location with 30 windows
contributes 30 circular errors.  Landmark dictionaries are trained once from
isolated recordings and shared across folds (they carry no location
information).  Noise mixing applies to evaluation windows only.

The fold loop is streaming and multi-task: all methods / SNR conditions
that share a training table reuse one set of per-fold GP fits, and per-fold
state is dropped as soon as its windows are localized.
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from . import gp as gp_mod
from . import localize as loc_mod
from .features import compute_feature_table, compute_feature_tables
from .localize import imu_like_prior

LIKELIHOOD = "likelihood"
REGRESSION = "regression"
LIKELIHOOD_PRIOR = "likelihood+prior"
LOCALIZATIONS = (REGRESSION, LIKELIHOOD, LIKELIHOOD_PRIOR)

DEFAULT_SNRS = tuple(float(s) for s in range(-60, 19, 3))


def circular_error(estimate, truth):
    """2-D Euclidean distance between estimate and ground truth."""
    est = np.asarray(estimate, dtype=np.float64)
    tru = np.asarray(truth, dtype=np.float64)
    return float(np.linalg.norm(est - tru))


def ecdf_points(ces):
    """Sorted (ce, fraction) pairs of the empirical CDF, ending at 1."""
    ces = np.sort(np.asarray(ces, dtype=np.float64))
    fractions = np.arange(1, len(ces) + 1) / len(ces)
    return np.column_stack([ces, fractions])


def summarize(ces):
    """CEP (median), mean, CE95 and the eCDF of a list of circular errors.

    Percentiles interpolate linearly between closest ranks.
    """
    ces = np.asarray(ces, dtype=np.float64)
    if len(ces) == 0:
        raise ValueError("cannot summarize an empty error list")
    cep, ce95 = np.percentile(ces, [50.0, 95.0])
    return {
        "cep": float(cep),
        "mean": float(np.mean(ces)),
        "ce95": float(ce95),
        "ecdf": ecdf_points(ces),
    }


@dataclass(frozen=True)
class EvalReport:
    ces: np.ndarray
    cep: float
    mean: float
    ce95: float
    ecdf: np.ndarray
    config: dict
    fold_train_indices: tuple = field(repr=False, default=())

    def to_dict(self):
        return {
            "config": self.config,
            "n_trials": int(len(self.ces)),
            "summary": {"cep": self.cep, "mean": self.mean, "ce95": self.ce95},
            "ces": [float(c) for c in self.ces],
        }


def make_report(ces, config, fold_train_indices=()):
    stats = summarize(ces)
    return EvalReport(
        ces=np.asarray(ces, dtype=np.float64),
        cep=stats["cep"],
        mean=stats["mean"],
        ce95=stats["ce95"],
        ecdf=stats["ecdf"],
        config=config,
        fold_train_indices=tuple(fold_train_indices),
    )


def normalize_method(method):
    out = {
        "feature": method["feature"],
        "localization": method["localization"],
        "prior_drift": tuple(method.get("prior_drift", (5.0, 5.0))),
        "prior_std": float(method.get("prior_std", 5.0)),
    }
    if out["localization"] not in LOCALIZATIONS:
        raise ValueError(f"unknown localization kind {out['localization']!r}")
    return out


def grid_for_table(table, resolution, z=1.0):
    """Search grid spanning the surveyed area at the requested resolution."""
    return loc_mod.room_grid_for(table.locations, resolution, z)


def search_grid(dataset, table, resolution, z=1.0):
    """Search grid over the whole room when the manifest records it (the
    survey may be inset from the walls), else over the surveyed area."""
    if dataset.manifest.room is not None:
        rx, ry = dataset.manifest.room
        return loc_mod.RoomGrid((0.0, rx), (0.0, ry), resolution, z)
    return grid_for_table(table, resolution, z)


def _fold_training_set(table, kind, keep):
    means = table.location_means(kind)
    locs = table.locations[keep]
    targets = means[keep]
    if len(keep) < 2:
        # degenerate split: train on the remaining location's individual
        # windows (duplicate locations, jitter copes)
        targets = table.values[kind][keep].reshape(-1, means.shape[1])
        locs = np.repeat(locs, len(targets) // len(keep), axis=0)
    return locs, targets


def _fit_fold_gps(locs, targets, nodes, gp_opts, seed, window_count=1):
    """Per-dimension GP fits with grid predictions.

    Targets are means of ``window_count`` windows, so the fitted noise
    variance is the window noise divided by that count; scoring a single
    fresh window needs the full window noise back in the predictive
    variance, hence the (count - 1) * noise_var correction.
    """
    node_mean = np.empty((targets.shape[1], len(nodes)))
    node_var = np.empty_like(node_mean)
    for d in range(targets.shape[1]):
        model = gp_mod.fit(
            locs, targets[:, d],
            lr=gp_opts.get("lr", gp_mod.ADAM_LR),
            n_iter=gp_opts.get("n_iter", gp_mod.ADAM_ITERS),
            gamma_min=gp_opts.get("gamma_min", gp_mod.GAMMA_MIN_DEFAULT),
            seed=seed,
        )
        node_mean[d], node_var[d] = gp_mod.predict(model, nodes)
        node_var[d] += (window_count - 1) * model.params.noise_var
    return node_mean, node_var


def _localize_likelihood(node_mean, node_var, window_feats, grid, log_prior):
    estimates = np.empty((len(window_feats), 2))
    ny, nx = grid.shape
    base = -0.5 * np.log(2.0 * np.pi * node_var)
    for w, feat in enumerate(window_feats):
        loglik = np.sum(
            base - 0.5 * (feat[:, None] - node_mean) ** 2 / node_var, axis=0
        )
        if log_prior is not None:
            loglik = loglik + log_prior
        iy, ix = np.unravel_index(int(np.argmax(loglik.reshape(ny, nx))), (ny, nx))
        estimates[w] = (grid.xs[ix], grid.ys[iy])
    return estimates


def run_tasks(train_table, kind, grid, gp_opts, tasks, seed=0):
    """Leave-one-out over locations, evaluating several tasks in one pass.

    Each task is ``{"method": ..., "eval_table": FeatureTable, "echo": dict}``;
    all tasks share the ``kind`` features of ``train_table`` for fold
    training, so per-fold GP fits and grid predictions are computed once no
    matter how many methods or noise conditions are being scored.
    """
    tasks = [
        {**t, "method": normalize_method(t["method"])} for t in tasks
    ]
    for t in tasks:
        if t["method"]["feature"] != kind:
            raise ValueError("all tasks in one run must share the feature kind")
    n_loc = train_table.n_locations
    if n_loc < 2:
        raise ValueError("LOOCV needs at least 2 distinct locations")
    need_gps = any(t["method"]["localization"] != REGRESSION for t in tasks)
    need_reg = any(t["method"]["localization"] == REGRESSION for t in tasks)
    nodes = grid.node_coords()
    ces = [[] for _ in tasks]
    train_indices = []
    for i in range(n_loc):
        keep = [j for j in range(n_loc) if j != i]
        train_indices.append(tuple(keep))
        locs, targets = _fold_training_set(train_table, kind, keep)
        try:
            node_mean = node_var = regressor = None
            if need_gps:
                node_mean, node_var = _fit_fold_gps(locs, targets, nodes, gp_opts, seed)
            if need_reg:
                regressor = loc_mod.fit_direct_regression(
                    targets, locs,
                    lr=gp_opts.get("lr", gp_mod.ADAM_LR),
                    n_iter=gp_opts.get("n_iter", gp_mod.ADAM_ITERS),
                    seed=seed,
                )
            for t_idx, task in enumerate(tasks):
                method = task["method"]
                truth = task["eval_table"].locations[i]
                window_feats = task["eval_table"].values[kind][i]
                if method["localization"] == REGRESSION:
                    estimates = loc_mod.predict_location(regressor, window_feats)
                else:
                    log_prior = None
                    if method["localization"] == LIKELIHOOD_PRIOR:
                        prior = imu_like_prior(
                            truth, method["prior_drift"], method["prior_std"]
                        )
                        log_prior = prior.log_pdf(nodes)
                    estimates = _localize_likelihood(
                        node_mean, node_var, window_feats, grid, log_prior
                    )
                ces[t_idx].extend(circular_error(e, truth) for e in estimates)
        except Exception as exc:
            raise type(exc)(
                f"fold {i} (held-out location {tuple(train_table.locations[i])}): {exc}"
            ) from exc
    reports = []
    for t_idx, task in enumerate(tasks):
        echo = dict(task.get("echo") or {})
        echo["method"] = dict(task["method"])
        echo["method"]["prior_drift"] = list(task["method"]["prior_drift"])
        reports.append(make_report(ces[t_idx], echo, train_indices))
    return reports


def loocv(dataset, method, config, nmf_model=None, jobs=1):
    """Leave-one-location-out evaluation of one method on a dataset."""
    return loocv_many(dataset, [method], config, nmf_model=nmf_model, jobs=jobs)[0]


def loocv_many(dataset, methods, config, nmf_model=None, jobs=1):
    """LOOCV for several methods, sharing feature tables and fold fits."""
    from .model_io import train_landmark_model

    methods = [normalize_method(m) for m in methods]
    if nmf_model is None:
        nmf_model = train_landmark_model(dataset, config)
    kinds = sorted({m["feature"] for m in methods})
    tables = compute_feature_tables(
        dataset, nmf_model, kinds, seed=config.seed,
        window_seconds=config.scene.window_seconds, jobs=jobs,
    )
    table = tables[None]
    grid = search_grid(dataset, table, config.grid.resolution, config.grid.z)
    reports = [None] * len(methods)
    for kind in kinds:
        idx = [i for i, m in enumerate(methods) if m["feature"] == kind]
        tasks = [
            {"method": methods[i], "eval_table": table, "echo": config.echo()}
            for i in idx
        ]
        kind_reports = run_tasks(
            table, kind, grid, config.gp_opts(), tasks, seed=config.seed
        )
        for i, rep in zip(idx, kind_reports):
            reports[i] = rep
    return reports


def snr_sweep(dataset, noise, method, config, snrs=DEFAULT_SNRS,
              nmf_model=None, jobs=1):
    """LOOCV at each SNR; training features stay clean, eval windows get
    noise mixed in before feature extraction.  Clips are rendered once and
    per-fold GP fits are shared across all SNR points."""
    from .model_io import train_landmark_model

    method = normalize_method(method)
    if nmf_model is None:
        nmf_model = train_landmark_model(dataset, config)
    conditions = [None] + [float(s) for s in snrs]
    tables = compute_feature_tables(
        dataset, nmf_model, [method["feature"]], seed=config.seed,
        window_seconds=config.scene.window_seconds,
        conditions=conditions, noise=noise, jobs=jobs,
    )
    clean = tables[None]
    grid = search_grid(dataset, clean, config.grid.resolution, config.grid.z)
    tasks = [
        {
            "method": method,
            "eval_table": tables[float(snr)],
            "echo": {**config.echo(), "snr_db": float(snr)},
        }
        for snr in snrs
    ]
    reports = run_tasks(
        clean, method["feature"], grid, config.gp_opts(), tasks, seed=config.seed
    )
    return [
        {"snr": float(snr), "report": rep} for snr, rep in zip(snrs, reports)
    ]


def saturation_snr(snrs, ceps, fraction=0.9):
    """Highest SNR at which the CEP already reaches ``fraction`` of the CEP
    at the lowest (worst) SNR, i.e. where accuracy has degraded to chance."""
    snrs = np.asarray(snrs, dtype=np.float64)
    ceps = np.asarray(ceps, dtype=np.float64)
    order = np.argsort(snrs)
    snrs, ceps = snrs[order], ceps[order]
    floor_cep = ceps[0]
    saturated = snrs[ceps >= fraction * floor_cep]
    return float(saturated.max()) if len(saturated) else float(snrs[0])


def save_report_json(report, path):
    with open(path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)


def save_ecdf_csv(report, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["ce", "fraction"])
        for ce, frac in report.ecdf:
            writer.writerow([repr(float(ce)), repr(float(frac))])


def save_sweep_csv(results, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["snr_db", "cep", "mean", "ce95"])
        for row in results:
            rep = row["report"]
            writer.writerow([row["snr"], repr(rep.cep), repr(rep.mean), repr(rep.ce95)])
