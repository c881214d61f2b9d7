"""Training orchestration and model persistence.

A trained localizer bundles the landmark NMF dictionaries, one GP per
feature dimension fitted on the survey grid, and the search grid, in a
single JSON document (see docs/model_schema.md).  Serialization goes
through Python float repr, so a save/load round trip is bit-exact.
"""

import json
from dataclasses import dataclass

import numpy as np

from . import gp as gp_mod
from .config import ExperimentConfig
from .dsp import stft
from .features import compute_feature_table
from .localize import RoomGrid, room_grid_for
from .nmf import BasisMatrix, NmfConfig, NmfModel, train_basis
from .util import derive_seed

SCHEMA_VERSION = 1

_NS_TRAIN_BASIS = 20


@dataclass(frozen=True)
class LocalizerModel:
    nmf: NmfModel
    feature_kind: str
    gps: tuple          # one GpModel per feature dimension
    grid: RoomGrid


def train_landmark_model(dataset, config):
    """Train one basis per isolated recording; ids come from the manifest."""
    isolated = dataset.manifest.isolated_entries()
    if not isolated:
        raise ValueError("dataset has no isolated recordings to train on")
    bases = []
    for entry in isolated:
        spec = stft(dataset.clip(entry), config.stft.frame_size, config.stft.hop)
        basis = train_basis(
            spec, config.nmf.n_bases, n_iter=config.nmf.n_iterations,
            seed=derive_seed(config.seed, _NS_TRAIN_BASIS, entry.source_id),
        )
        bases.append(BasisMatrix(basis.w, source_id=entry.source_id))
    nmf_config = NmfConfig(
        n_bases=config.nmf.n_bases,
        n_noise_bases=config.nmf.n_noise_bases,
        n_iterations=config.nmf.n_iterations,
        seed=config.seed,
    )
    return NmfModel(
        tuple(bases), nmf_config, dataset.manifest.sample_rate,
        config.stft.frame_size, config.stft.hop,
    )


def train_localizer(dataset, config, nmf_model=None, jobs=1):
    """Full training pass: dictionaries, per-source GPs, search grid."""
    if nmf_model is None:
        nmf_model = train_landmark_model(dataset, config)
    kind = config.method.feature
    table = compute_feature_table(
        dataset, nmf_model, [kind], seed=config.seed,
        window_seconds=config.scene.window_seconds, jobs=jobs,
    )
    means = table.location_means(kind)
    gps = tuple(
        gp_mod.fit(table.locations, means[:, d], **config.gp_opts(), seed=config.seed)
        for d in range(means.shape[1])
    )
    if dataset.manifest.room is not None:
        rx, ry = dataset.manifest.room
        grid = RoomGrid((0.0, rx), (0.0, ry), config.grid.resolution, config.grid.z)
    else:
        grid = room_grid_for(table.locations, config.grid.resolution, config.grid.z)
    return LocalizerModel(nmf_model, kind, gps, grid)


def _gp_record(model, dim_id):
    return {
        "source_id": dim_id,
        "theta": model.params.theta,
        "gamma": model.params.gamma,
        "noise_var": model.params.noise_var,
        "target_mean": model.target_mean,
        "train_locations": [[float(v) for v in row] for row in model.train_locations],
        "train_targets": [float(v) for v in model.train_targets],
    }


def _gp_from_record(rec):
    params = gp_mod.KernelParams(rec["theta"], rec["gamma"], rec["noise_var"])
    x = np.array(rec["train_locations"], dtype=np.float64)
    y = np.array(rec["train_targets"], dtype=np.float64)
    c = gp_mod.kernel_matrix(x, x, params) + params.noise_var * np.eye(len(y))
    low = gp_mod._chol_with_jitter(c)
    from scipy.linalg import cho_solve

    alpha = cho_solve((low, True), y - rec["target_mean"])
    return gp_mod.GpModel(params, x, y, rec["target_mean"], low, alpha)


def model_to_dict(model):
    nmf = model.nmf
    return {
        "schema_version": SCHEMA_VERSION,
        "sample_rate": nmf.sample_rate,
        "frame_size": nmf.frame_size,
        "hop": nmf.hop,
        "K": nmf.n_sources,
        "feature_kind": model.feature_kind,
        "nmf": {
            "n_noise_bases": nmf.config.n_noise_bases,
            "n_iterations": nmf.config.n_iterations,
            "eps_floor": nmf.config.eps_floor,
            "seed": nmf.config.seed,
            "sources": [
                {
                    "source_id": b.source_id,
                    "L": b.n_bases,
                    "w": [float(v) for v in b.w.ravel(order="C")],
                }
                for b in nmf.landmark_bases
            ],
        },
        "gp": {
            "sources": [
                _gp_record(g, d + 1) for d, g in enumerate(model.gps)
            ],
        },
        "grid": {
            "x_range": list(model.grid.x_range),
            "y_range": list(model.grid.y_range),
            "resolution": model.grid.resolution,
            "z": model.grid.z,
        },
    }


def save_model(model, path):
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=2, sort_keys=True)


def load_model(path):
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported model schema version {doc.get('schema_version')}")
    n_freqs = doc["frame_size"] // 2 + 1
    bases = tuple(
        BasisMatrix(
            np.array(rec["w"], dtype=np.float64).reshape(n_freqs, rec["L"], order="C"),
            source_id=rec["source_id"],
        )
        for rec in doc["nmf"]["sources"]
    )
    first_l = doc["nmf"]["sources"][0]["L"] if doc["nmf"]["sources"] else 0
    nmf_config = NmfConfig(
        n_bases=first_l,
        n_noise_bases=doc["nmf"]["n_noise_bases"],
        n_iterations=doc["nmf"]["n_iterations"],
        eps_floor=doc["nmf"]["eps_floor"],
        seed=doc["nmf"]["seed"],
    )
    nmf_model = NmfModel(
        bases, nmf_config, doc["sample_rate"], doc["frame_size"], doc["hop"]
    )
    gps = tuple(_gp_from_record(rec) for rec in doc["gp"]["sources"])
    grid = RoomGrid(
        tuple(doc["grid"]["x_range"]), tuple(doc["grid"]["y_range"]),
        doc["grid"]["resolution"], doc["grid"]["z"],
    )
    return LocalizerModel(nmf_model, doc["feature_kind"], gps, grid)
