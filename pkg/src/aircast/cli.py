"""Command-line surface: synth, train, forecast, evaluate, experiment, sweep-lambda.

Exit codes: 0 success, 2 validation error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import TrainConfig
from .data import SampleWindow, interpolate_missing, load_corpus
from .errors import DataError, NumericalError, ValidationError
from .metrics import compute_horizon_metrics
from .model import (
    HORIZONS,
    apply_ablation,
    forecast,
    load_model,
    predict_windows,
    prepare,
    save_model,
    train,
    write_train_log,
)
from .report import ExperimentConfig, lambda_sweep, run_experiment
from .synth import SynthSpec, synth_generate, write_corpus


def _cmd_synth(args) -> int:
    spec = SynthSpec.from_json(args.spec) if args.spec else SynthSpec()
    corpus = synth_generate(spec, args.seed)
    write_corpus(corpus, args.out)
    print(f"wrote synthetic corpus ({spec.n_cities} cities x {spec.stations_per_city} stations, "
          f"{spec.hours} h) to {args.out}")
    return 0


def _cmd_train(args) -> int:
    cfg = TrainConfig.from_json(args.config)
    if args.ablate:
        cfg = apply_ablation(cfg, args.ablate)
    frame = interpolate_missing(load_corpus(args.data))
    result = train(cfg, frame, quiet=args.quiet)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_model(out / "checkpoint.ckpt", result.params, result.prep.norm,
               extra={"best_epoch": result.best_epoch})
    write_train_log(out / "training_log.csv", result.log)
    with open(out / "config.json", "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=1)
    if result.log:
        best = result.log[result.best_epoch]
        shown = ", ".join(
            f"{k}h={best[f'val_mae_{k}h']:.3f}" for k in HORIZONS if best.get(f"val_mae_{k}h") is not None
        )
        print(f"best epoch {result.best_epoch}: val MAE {shown}")
    print(f"checkpoint written to {out / 'checkpoint.ckpt'}")
    return 0


def _load_for_inference(checkpoint, data_dir):
    mp, norm, manifest = load_model(checkpoint)
    frame = interpolate_missing(load_corpus(data_dir))
    prep = prepare(frame, mp.cfg, norm=norm)
    return mp, prep, manifest


def _cmd_forecast(args) -> int:
    mp, prep, _ = _load_for_inference(args.checkpoint, args.data)
    t = prep.frame.row_of(args.at)
    sample = SampleWindow(prep.frame, t, mp.cfg.tau_in, mp.cfg.tau_out)
    result = forecast(mp, prep, sample)
    with open(args.out, "w") as fh:
        fh.write("station_id,timestamp,horizon,aqi_pred\n")
        for s, sid in enumerate(result.station_ids):
            for k, ts in enumerate(result.timestamps, start=1):
                fh.write(f"{sid},{ts},{k},{result.values[s, k - 1]!r}\n")
    print(f"forecast for {len(result.station_ids)} stations x {mp.cfg.tau_out} h -> {args.out}")
    return 0


def _cmd_evaluate(args) -> int:
    mp, prep, _ = _load_for_inference(args.checkpoint, args.data)
    windows = {"train": prep.train_w, "val": prep.val_w, "test": prep.test_w}[args.split]
    if not windows:
        raise DataError(f"split {args.split!r} holds no windows")
    preds = predict_windows(mp, prep, windows)
    t_all = np.array([w.t for w in windows])
    ks = np.arange(1, mp.cfg.tau_out + 1)
    truth = prep.frame.aqi[(t_all[:, None] + ks[None, :])].transpose(0, 2, 1)
    horizons = [k for k in HORIZONS if k <= mp.cfg.tau_out]
    hm = compute_horizon_metrics(
        preds, truth, horizons, prep.frame.station_city, prep.frame.cities, prep.eval_stations
    )
    with open(args.out, "w") as fh:
        fh.write("scope,horizon,mae,rmse\n")
        for k in horizons:
            fh.write(f"all,{k},{hm.mae[k]!r},{hm.rmse[k]!r}\n")
        for cid in sorted(hm.per_city):
            for k in horizons:
                m, r = hm.per_city[cid][k]
                fh.write(f"{cid},{k},{m!r},{r!r}\n")
    shown = ", ".join(f"{k}h={hm.mae[k]:.3f}" for k in horizons)
    print(f"{args.split} MAE: {shown} ({hm.count} station-windows) -> {args.out}")
    return 0


def _cmd_experiment(args) -> int:
    exp = ExperimentConfig.from_json(args.config)
    report = run_experiment(exp, args.out, quiet=args.quiet)
    summary = report.summary()
    for method in sorted(summary):
        shown = ", ".join(f"{k}h={summary[method][k][0]:.3f}" for k in report.horizons)
        print(f"{method}: {shown}")
    print(f"report written to {args.out}")
    return 0


def _parse_values(text: str) -> list[float]:
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValidationError(f"--values expects lo:hi:step, got {text!r}")
        lo, hi, step = (float(p) for p in parts)
        if step <= 0 or hi < lo:
            raise ValidationError(f"--values range is empty: {text!r}")
        return [float(v) for v in np.round(np.arange(lo, hi + step / 2, step), 10)]
    return [float(p) for p in text.split(",") if p]


def _cmd_sweep(args) -> int:
    exp = ExperimentConfig.from_json(args.config)
    values = _parse_values(args.values)
    if not values:
        raise ValidationError("--values produced an empty sweep")
    rows = lambda_sweep(exp, values, out_dir=args.out, quiet=args.quiet)
    for row in rows:
        print(f"lambda={row['lambda']:.2f}  val_mae={row['val_mae']:.4f}  "
              f"city_edges={row['city_edges']}  station_edges={row['station_edges']}")
    if args.out:
        print(f"sweep table written to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aircast",
                                     description="hierarchical graph air-quality forecasting")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--spec", help="JSON generator spec (defaults when omitted)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train", help="train a model on a corpus directory")
    p.add_argument("--config", required=True, help="JSON TrainConfig")
    p.add_argument("--data", required=True, help="corpus directory")
    p.add_argument("--out", required=True)
    p.add_argument("--ablate", action="append", default=[],
                   choices=["weather", "poi", "hierarchy", "city-lstm", "dynamic"])
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("forecast", help="forecast from a checkpoint at a timestamp")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--at", required=True, help="last observed timestamp (ISO 8601)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_forecast)

    p = sub.add_parser("evaluate", help="score a checkpoint on a split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("experiment", help="multi-seed experiment with ablations and HA")
    p.add_argument("--config", required=True, help="JSON experiment config")
    p.add_argument("--out", required=True)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("sweep-lambda", help="validation MAE and edge counts per lambda")
    p.add_argument("--config", required=True, help="JSON experiment config")
    p.add_argument("--values", default="1.0:1.5:0.1")
    p.add_argument("--out", default=None)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=_cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
