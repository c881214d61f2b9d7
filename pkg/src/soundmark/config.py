"""Experiment configuration: one JSON document drives the whole pipeline.

Defaults reproduce the canonical desk-scale experiment (5 landmark sources
in a 30 x 12 m room, 2 m survey spacing, 1 s windows, 30 windows per node,
5+4 NMF bases, 100 multiplicative updates, Adam lr 0.1 for 100 iterations
with a 3 m length-scale floor, 0.1 m search grid), so running
simulate -> train -> evaluate with no overrides needs no further choices.
"""

import json
from dataclasses import asdict, dataclass, field, replace

import jsonschema

from .sim import SceneConfig, SceneSource, SourceSignature, default_scene


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 2)."""


@dataclass(frozen=True)
class StftSection:
    frame_size: int = 2048
    hop: int = 1024


@dataclass(frozen=True)
class NmfSection:
    n_bases: int = 5
    n_noise_bases: int = 4
    n_iterations: int = 100


@dataclass(frozen=True)
class GpSection:
    learning_rate: float = 0.1
    n_iterations: int = 100
    gamma_min: float = 3.0


@dataclass(frozen=True)
class GridSection:
    resolution: float = 0.1
    z: float = 1.0


@dataclass(frozen=True)
class MethodSection:
    feature: str = "snmf_wf"
    localization: str = "likelihood"
    prior_drift: tuple = (5.0, 5.0)
    prior_std: float = 5.0


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    scene: SceneConfig = field(default_factory=default_scene)
    stft: StftSection = field(default_factory=StftSection)
    nmf: NmfSection = field(default_factory=NmfSection)
    gp: GpSection = field(default_factory=GpSection)
    grid: GridSection = field(default_factory=GridSection)
    method: MethodSection = field(default_factory=MethodSection)
    snrs: tuple = tuple(float(s) for s in range(-60, 19, 3))
    jobs: int = 1

    def gp_opts(self):
        return {
            "lr": self.gp.learning_rate,
            "n_iter": self.gp.n_iterations,
            "gamma_min": self.gp.gamma_min,
        }

    def method_dict(self):
        return {
            "feature": self.method.feature,
            "localization": self.method.localization,
            "prior_drift": tuple(self.method.prior_drift),
            "prior_std": self.method.prior_std,
        }

    def echo(self):
        """JSON-safe dump echoed into reports for reproducibility."""
        return self.to_dict()

    def to_dict(self):
        return {
            "seed": self.seed,
            "scene": {
                "room": list(self.scene.room),
                "grid_spacing": self.scene.grid_spacing,
                "survey_margin": self.scene.survey_margin,
                "window_seconds": self.scene.window_seconds,
                "windows_per_point": self.scene.windows_per_point,
                "isolated_seconds": self.scene.isolated_seconds,
                "sample_rate": self.scene.sample_rate,
                "ambient_rms": self.scene.ambient_rms,
                "sources": [
                    {
                        "position": list(src.position),
                        "power": src.power,
                        "bands": [list(b) for b in src.signature.bands],
                        "tones": [list(t) for t in src.signature.tones],
                        "mod_depth": src.signature.mod_depth,
                        "mod_cutoff_hz": src.signature.mod_cutoff_hz,
                    }
                    for src in self.scene.sources
                ],
            },
            "stft": asdict(self.stft),
            "nmf": asdict(self.nmf),
            "gp": asdict(self.gp),
            "grid": asdict(self.grid),
            "method": {
                "feature": self.method.feature,
                "localization": self.method.localization,
                "prior_drift": list(self.method.prior_drift),
                "prior_std": self.method.prior_std,
            },
            "snrs": list(self.snrs),
            "jobs": self.jobs,
        }


_POS_NUM = {"type": "number", "exclusiveMinimum": 0}
_POS_INT = {"type": "integer", "minimum": 1}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "seed": {"type": "integer", "minimum": 0},
        "scene": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "room": {
                    "type": "array", "items": _POS_NUM,
                    "minItems": 2, "maxItems": 2,
                },
                "grid_spacing": _POS_NUM,
                "survey_margin": {"type": "number", "minimum": 0},
                "window_seconds": _POS_NUM,
                "windows_per_point": _POS_INT,
                "isolated_seconds": _POS_NUM,
                "sample_rate": _POS_INT,
                "ambient_rms": {"type": "number", "minimum": 0},
                "sources": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["position"],
                        "properties": {
                            "position": {
                                "type": "array", "items": {"type": "number"},
                                "minItems": 2, "maxItems": 2,
                            },
                            "power": _POS_NUM,
                            "bands": {
                                "type": "array",
                                "items": {
                                    "type": "array", "items": {"type": "number"},
                                    "minItems": 3, "maxItems": 3,
                                },
                            },
                            "tones": {
                                "type": "array",
                                "items": {
                                    "type": "array", "items": {"type": "number"},
                                    "minItems": 2, "maxItems": 2,
                                },
                            },
                            "mod_depth": {"type": "number", "minimum": 0},
                            "mod_cutoff_hz": _POS_NUM,
                        },
                    },
                },
            },
        },
        "stft": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"frame_size": _POS_INT, "hop": _POS_INT},
        },
        "nmf": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_bases": _POS_INT,
                "n_noise_bases": _POS_INT,
                "n_iterations": _POS_INT,
            },
        },
        "gp": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "learning_rate": _POS_NUM,
                "n_iterations": {"type": "integer", "minimum": 0},
                "gamma_min": {"type": "number", "minimum": 0},
            },
        },
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"resolution": _POS_NUM, "z": {"type": "number"}},
        },
        "method": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "feature": {"enum": ["snmf_wf", "snmf_act", "mfcc"]},
                "localization": {
                    "enum": ["likelihood", "regression", "likelihood+prior"]
                },
                "prior_drift": {
                    "type": "array", "items": {"type": "number"},
                    "minItems": 2, "maxItems": 2,
                },
                "prior_std": _POS_NUM,
            },
        },
        "snrs": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        "jobs": _POS_INT,
    },
}


def config_from_dict(doc):
    """Build an ExperimentConfig from a (possibly partial) JSON document.

    Missing sections fall back to the experiment defaults; schema violations
    raise ConfigError with the validator diagnostics.
    """
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config schema violation at {path}: {exc.message}") from exc

    seed = doc.get("seed", 0)
    scene_doc = dict(doc.get("scene", {}))
    sources_doc = scene_doc.pop("sources", None)
    if sources_doc is None:
        scene = default_scene(seed=seed, **scene_doc)
    else:
        sources = tuple(
            SceneSource(
                position=tuple(rec["position"]),
                signature=SourceSignature(
                    bands=tuple(tuple(b) for b in rec.get("bands", [])),
                    tones=tuple(tuple(t) for t in rec.get("tones", [])),
                    mod_depth=rec.get("mod_depth", 0.8),
                    mod_cutoff_hz=rec.get("mod_cutoff_hz", 2.0),
                ),
                power=rec.get("power", 1.0),
            )
            for rec in sources_doc
        )
        try:
            scene = SceneConfig(sources=sources, seed=seed, **scene_doc)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    cfg = ExperimentConfig(
        seed=seed,
        scene=scene,
        stft=StftSection(**doc.get("stft", {})),
        nmf=NmfSection(**doc.get("nmf", {})),
        gp=GpSection(**doc.get("gp", {})),
        grid=GridSection(**doc.get("grid", {})),
        method=MethodSection(**{
            **doc.get("method", {}),
            "prior_drift": tuple(doc.get("method", {}).get("prior_drift", (5.0, 5.0))),
        }),
        snrs=tuple(doc.get("snrs", tuple(float(s) for s in range(-60, 19, 3)))),
        jobs=doc.get("jobs", 1),
    )
    if cfg.stft.hop > cfg.stft.frame_size:
        raise ConfigError("stft.hop must not exceed stft.frame_size")
    return cfg


def load_config(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON: {exc}") from exc
    return config_from_dict(doc)


def save_config(config, path):
    with open(path, "w") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
