"""Command-line interface: simulate, train, localize, evaluate, sweep.

Every command is driven by one JSON config (paper defaults pre-filled) and
a seed, and rewrites its outputs deterministically: rerunning a command
with the same inputs produces byte-identical files.

Exit codes: 0 success, 1 runtime/data error, 2 config error.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, load_config, save_config
from .dsp import read_wav, stft
from .evaluate import (
    DEFAULT_SNRS,
    loocv_many,
    save_ecdf_csv,
    save_report_json,
    save_sweep_csv,
    snr_sweep,
)
from .localize import (
    GaussianPrior,
    argmax_ml,
    likelihood_map,
    posterior_map,
    save_map_csv,
)
from .model_io import load_model, save_model, train_landmark_model, train_localizer
from .nmf import extract_activation_features, extract_features
from .sim import build_dataset, load_dataset, save_dataset

FEATURES = ("mfcc", "snmf_act", "snmf_wf")
LOCALIZATIONS = ("regression", "likelihood", "likelihood+prior")


def _load_config_arg(path):
    if path is None:
        return ExperimentConfig()
    return load_config(path)


def _parse_methods(spec_str, config):
    """Parse --methods: 'all' for the full 3x3 grid, else a comma list of
    feature:localization pairs; default is the config's single method."""
    if spec_str is None:
        return [config.method_dict()]
    if spec_str == "all":
        return [
            {
                "feature": f, "localization": l,
                "prior_drift": tuple(config.method.prior_drift),
                "prior_std": config.method.prior_std,
            }
            for f in FEATURES
            for l in LOCALIZATIONS
        ]
    methods = []
    for item in spec_str.split(","):
        try:
            feature, localization = item.split(":")
        except ValueError:
            raise ConfigError(
                f"bad method {item!r}: expected feature:localization"
            ) from None
        if feature not in FEATURES or localization not in LOCALIZATIONS:
            raise ConfigError(f"unknown method {item!r}")
        methods.append({
            "feature": feature, "localization": localization,
            "prior_drift": tuple(config.method.prior_drift),
            "prior_std": config.method.prior_std,
        })
    return methods


def _method_slug(method):
    return f"{method['feature']}_{method['localization'].replace('+', '_')}"


def cmd_simulate(args):
    config = _load_config_arg(args.config)
    dataset = build_dataset(config.scene)
    out = Path(args.out)
    save_dataset(dataset, out)
    save_config(config, out / "config.json")
    print(f"wrote {len(dataset.manifest.entries)} clips to {out}")
    return 0


def cmd_train(args):
    config = _load_config_arg(args.config)
    dataset = load_dataset(args.dataset)
    k_isolated = len(dataset.manifest.isolated_entries())
    if config.scene.sources and k_isolated != len(config.scene.sources):
        raise ValueError(
            f"dataset has {k_isolated} isolated sources but the config "
            f"declares {len(config.scene.sources)}"
        )
    model = train_localizer(dataset, config, jobs=args.jobs)
    save_model(model, args.out)
    print(f"trained {model.nmf.n_sources}-source model ({model.feature_kind}) -> {args.out}")
    return 0


def cmd_localize(args):
    model = load_model(args.model)
    clip = read_wav(args.wav)
    if clip.sample_rate != model.nmf.sample_rate:
        raise ValueError(
            f"{args.wav}: sample rate {clip.sample_rate} does not match the "
            f"model's {model.nmf.sample_rate} (resampling not supported)"
        )
    spec = stft(clip, model.nmf.frame_size, model.nmf.hop)
    if model.feature_kind == "mfcc":
        from .dsp import mfcc

        feats = mfcc(spec)
    elif model.feature_kind == "snmf_act":
        feats = extract_activation_features(spec, model.nmf, seed=args.seed)
    else:
        feats = extract_features(spec, model.nmf, seed=args.seed)
    lmap = likelihood_map(feats, model.gps, model.grid)
    result_map = lmap
    if args.prior_mean is not None:
        prior = GaussianPrior(
            np.array(args.prior_mean), args.prior_std**2 * np.eye(2)
        )
        result_map = posterior_map(lmap, prior)
    estimate = argmax_ml(result_map)
    if args.map_csv:
        save_map_csv(result_map, args.map_csv)
    print(json.dumps({
        "x": float(estimate[0]),
        "y": float(estimate[1]),
        "kind": result_map.kind,
    }))
    return 0


def _summary_row(method, report):
    return [
        method["feature"], method["localization"],
        f"{report.cep:.3f}", f"{report.mean:.3f}", f"{report.ce95:.3f}",
        str(len(report.ces)),
    ]


def cmd_evaluate(args):
    config = _load_config_arg(args.config)
    dataset = load_dataset(args.dataset)
    methods = _parse_methods(args.methods, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    nmf_model = train_landmark_model(dataset, config)
    rows = []
    reports = loocv_many(dataset, methods, config, nmf_model=nmf_model, jobs=args.jobs)
    for method, report in zip(methods, reports):
        slug = _method_slug(method)
        save_report_json(report, out / f"report_{slug}.json")
        save_ecdf_csv(report, out / f"ecdf_{slug}.csv")
        rows.append(_summary_row(method, report))
        print(f"{slug}: cep={report.cep:.3f} mean={report.mean:.3f} ce95={report.ce95:.3f}")
    with open(out / "summary.csv", "w") as fh:
        fh.write("feature,localization,cep,mean,ce95,n_trials\n")
        for row in rows:
            fh.write(",".join(row) + "\n")
    return 0


def cmd_sweep(args):
    config = _load_config_arg(args.config)
    dataset = load_dataset(args.dataset)
    noise = read_wav(args.noise)
    if noise.sample_rate != dataset.manifest.sample_rate:
        raise ValueError(
            f"{args.noise}: sample rate {noise.sample_rate} does not match the "
            f"dataset's {dataset.manifest.sample_rate} (resampling not supported)"
        )
    methods = _parse_methods(args.methods, config)
    snrs = tuple(config.snrs) if config.snrs else DEFAULT_SNRS
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    nmf_model = train_landmark_model(dataset, config)
    for method in methods:
        results = snr_sweep(
            dataset, noise, method, config, snrs=snrs,
            nmf_model=nmf_model, jobs=args.jobs,
        )
        slug = _method_slug(method)
        save_sweep_csv(results, out / f"sweep_{slug}.csv")
        for row in results:
            save_report_json(
                row["report"], out / f"report_{slug}_snr{row['snr']:+.0f}.json"
            )
        ceps = ", ".join(f"{r['snr']:+.0f}:{r['report'].cep:.2f}" for r in results)
        print(f"{slug}: cep by snr {ceps}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="soundmark",
        description="Microphone localization from environmental sound landmarks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="render a synthetic survey dataset")
    p.add_argument("--config", help="experiment config JSON (defaults if omitted)")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train dictionaries and spatial GPs")
    p.add_argument("--dataset", required=True, help="dataset directory")
    p.add_argument("--config", help="experiment config JSON")
    p.add_argument("--out", required=True, help="output model JSON path")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("localize", help="locate a microphone from one WAV")
    p.add_argument("--model", required=True, help="trained model JSON")
    p.add_argument("--wav", required=True, help="mono WAV recording")
    p.add_argument("--prior-mean", type=float, nargs=2, metavar=("X", "Y"),
                   help="Gaussian prior mean (meters)")
    p.add_argument("--prior-std", type=float, default=5.0,
                   help="prior standard deviation (meters)")
    p.add_argument("--map-csv", help="write the searched map as CSV (+ JSON sidecar)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("evaluate", help="leave-one-out evaluation")
    p.add_argument("--dataset", required=True)
    p.add_argument("--config", help="experiment config JSON")
    p.add_argument("--out", required=True, help="output report directory")
    p.add_argument("--methods", help="'all' or comma list of feature:localization")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="SNR sweep with background noise")
    p.add_argument("--dataset", required=True)
    p.add_argument("--noise", required=True, help="background noise WAV")
    p.add_argument("--config", help="experiment config JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--methods", help="'all' or comma list of feature:localization")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
