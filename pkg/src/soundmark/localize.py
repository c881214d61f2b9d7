"""Spatial likelihood maps over a room grid, ML/MAP estimation, priors.

A map node holds the sum over sources of the GP predictive log density of
the observed feature vector.  Estimation is an exhaustive grid argmax (the
grid is fine enough that continuous refinement buys nothing); ties break
toward the smallest (y, x) so results are reproducible.
"""

import csv
import json
from dataclasses import dataclass

import numpy as np

from . import gp as gp_mod
from .util import derive_rng

LOG_FLOOR = -1e12


@dataclass(frozen=True)
class RoomGrid:
    """Regular search grid over the room, z fixed (metadata only)."""

    x_range: tuple
    y_range: tuple
    resolution: float = 0.1
    z: float = 1.0

    def __post_init__(self):
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")
        if self.x_range[1] <= self.x_range[0] or self.y_range[1] <= self.y_range[0]:
            raise ValueError("grid ranges must be non-empty")

    @property
    def xs(self):
        n = int(round((self.x_range[1] - self.x_range[0]) / self.resolution)) + 1
        return self.x_range[0] + self.resolution * np.arange(n)

    @property
    def ys(self):
        n = int(round((self.y_range[1] - self.y_range[0]) / self.resolution)) + 1
        return self.y_range[0] + self.resolution * np.arange(n)

    @property
    def shape(self):
        return len(self.ys), len(self.xs)

    def node_coords(self):
        """All nodes as an (N, 2) array, row-major: y outer, x inner."""
        gx, gy = np.meshgrid(self.xs, self.ys)
        return np.column_stack([gx.ravel(), gy.ravel()])


@dataclass(frozen=True)
class LikelihoodMap:
    grid: RoomGrid
    log_values: np.ndarray   # shape grid.shape
    kind: str                # likelihood | prior | posterior

    def __post_init__(self):
        values = np.asarray(self.log_values, dtype=np.float64)
        if values.shape != self.grid.shape:
            raise ValueError("log_values shape does not match grid")
        if self.kind not in ("likelihood", "prior", "posterior"):
            raise ValueError(f"unknown map kind {self.kind!r}")
        values = np.maximum(values, LOG_FLOOR)
        if not np.all(np.isfinite(values)):
            raise ValueError("map values must be finite after flooring")
        object.__setattr__(self, "log_values", values)


@dataclass(frozen=True)
class GaussianPrior:
    mean: np.ndarray        # (2,)
    cov: np.ndarray         # (2, 2) SPD

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).reshape(2)
        cov = np.asarray(self.cov, dtype=np.float64).reshape(2, 2)
        if not np.allclose(cov, cov.T):
            raise ValueError("prior covariance must be symmetric")
        if np.any(np.linalg.eigvalsh(cov) <= 0):
            raise ValueError("prior covariance must be positive definite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    def log_pdf(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        diff = pts - self.mean
        prec = np.linalg.inv(self.cov)
        maha = np.einsum("ni,ij,nj->n", diff, prec, diff)
        _, logdet = np.linalg.slogdet(self.cov)
        return -0.5 * (maha + logdet + 2.0 * np.log(2.0 * np.pi))


def room_grid_for(locations, resolution=0.1, z=1.0):
    """Grid spanning the bounding box of a set of survey locations."""
    locations = np.atleast_2d(np.asarray(locations, dtype=np.float64))
    mins = locations.min(axis=0)
    maxs = locations.max(axis=0)
    return RoomGrid((float(mins[0]), float(maxs[0])),
                    (float(mins[1]), float(maxs[1])), resolution, z)


def likelihood_map(features, gps, grid):
    """Per-node sum of GP predictive log densities of the feature vector."""
    if len(features) != len(gps):
        raise ValueError(
            f"feature length {len(features)} does not match {len(gps)} GPs"
        )
    nodes = grid.node_coords()
    total = np.zeros(len(nodes))
    for value, model in zip(features.values, gps):
        mean, var = gp_mod.predict(model, nodes)
        total += -0.5 * (np.log(2.0 * np.pi * var) + (value - mean) ** 2 / var)
    return LikelihoodMap(grid, total.reshape(grid.shape), kind="likelihood")


def argmax_ml(lmap):
    """Location of the maximal node; ties break to smallest (y, then x)."""
    iy, ix = np.unravel_index(int(np.argmax(lmap.log_values)), lmap.grid.shape)
    return np.array([lmap.grid.xs[ix], lmap.grid.ys[iy]])


def posterior_map(lik, prior):
    """Add the log prior to a likelihood map (MAP fusion)."""
    if lik.kind != "likelihood":
        raise ValueError("posterior_map expects a likelihood map")
    log_prior = prior.log_pdf(lik.grid.node_coords()).reshape(lik.grid.shape)
    return LikelihoodMap(lik.grid, lik.log_values + log_prior, kind="posterior")


def imu_like_prior(ground_truth, drift=(5.0, 5.0), std=5.0):
    """Drifted isotropic Gaussian prior mimicking a dead-reckoning estimate."""
    mean = np.asarray(ground_truth, dtype=np.float64) + np.asarray(drift, dtype=np.float64)
    return GaussianPrior(mean, std**2 * np.eye(2))


def prior_expected_error(prior, ground_truth, n_samples=1_000_000, seed=0):
    """Monte-Carlo localization error of the prior's expected location.

    Samples the prior, takes the sample mean as the point estimate the prior
    provides, and returns its distance from the true location.
    """
    rng = derive_rng(seed)
    samples = rng.multivariate_normal(prior.mean, prior.cov, size=n_samples)
    return float(np.linalg.norm(samples.mean(axis=0) - np.asarray(ground_truth)))


@dataclass(frozen=True)
class DirectRegressionModel:
    """Baseline: two feature-space GPs predicting x and y directly."""

    gp_x: gp_mod.GpModel
    gp_y: gp_mod.GpModel


def fit_direct_regression(features, locations, lr=gp_mod.ADAM_LR,
                          n_iter=gp_mod.ADAM_ITERS, seed=0, noise_var_init=None):
    """Fit the direct-regression baseline on (feature vector -> coordinate).

    Feature space has no meaningful meters scale, so the length-scale floor
    is dropped and the initialization uses the median pairwise feature
    distance instead of a room-scale default.
    """
    feats = np.atleast_2d(np.asarray(features, dtype=np.float64))
    locs = np.atleast_2d(np.asarray(locations, dtype=np.float64))
    if len(feats) != len(locs):
        raise ValueError("features and locations length mismatch")
    if len(feats) < 2:
        raise ValueError("need at least 2 training pairs")
    d2 = np.sum((feats[:, None, :] - feats[None, :, :]) ** 2, axis=2)
    med = float(np.median(np.sqrt(d2[np.triu_indices(len(feats), k=1)])))
    gamma0 = max(med, 1e-3)
    gamma_min = 1e-6
    models = []
    for coord in range(2):
        y = locs[:, coord]
        theta0 = max(float(np.var(y - y.mean())), 1e-6)
        noise0 = 0.1 * theta0 if noise_var_init is None else noise_var_init
        init = gp_mod.KernelParams(theta0, gamma0, noise0)
        models.append(
            gp_mod.fit(feats, y, init=init, lr=lr, n_iter=n_iter,
                       gamma_min=gamma_min, seed=seed)
        )
    return DirectRegressionModel(models[0], models[1])


def predict_location(model, features):
    """Predicted (x, y) for one feature vector or an (M, K) batch."""
    single = np.asarray(features).ndim == 1
    feats = np.atleast_2d(np.asarray(features, dtype=np.float64))
    mean_x, _ = gp_mod.predict(model.gp_x, feats)
    mean_y, _ = gp_mod.predict(model.gp_y, feats)
    out = np.column_stack([mean_x, mean_y])
    return out[0] if single else out


def probability_values(lmap):
    """Map values as normalized probabilities (for plotting/export)."""
    shifted = np.exp(lmap.log_values - lmap.log_values.max())
    return shifted / shifted.sum()


def save_map_csv(lmap, csv_path):
    """Write `x,y,log_value` rows (row-major) plus a JSON sidecar."""
    csv_path = str(csv_path)
    xs, ys = lmap.grid.xs, lmap.grid.ys
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "log_value"])
        for iy in range(len(ys)):
            for ix in range(len(xs)):
                writer.writerow([
                    f"{xs[ix]:.10g}", f"{ys[iy]:.10g}",
                    repr(float(lmap.log_values[iy, ix])),
                ])
    sidecar = {
        "kind": lmap.kind,
        "resolution": lmap.grid.resolution,
        "x_range": list(lmap.grid.x_range),
        "y_range": list(lmap.grid.y_range),
        "z": lmap.grid.z,
        "argmax": [float(v) for v in argmax_ml(lmap)],
    }
    sidecar_path = csv_path[:-4] + ".json" if csv_path.endswith(".csv") else csv_path + ".json"
    with open(sidecar_path, "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
    return sidecar_path
