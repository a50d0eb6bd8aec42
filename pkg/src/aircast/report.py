"""Experiment orchestration: multi-seed runs, ablations, HA, and reports.

Reports are CSV tables plus one self-contained SVG chart (mean MAE per
horizon per method). Metric CSVs are formatted with repr floats so repeated
runs with identical configs produce byte-identical files.
"""

from __future__ import annotations

import json
import platform
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import TrainConfig
from .data import interpolate_missing, load_corpus
from .errors import ValidationError
from .metrics import HA_PERIOD, compute_horizon_metrics, ha_predict_windows
from .model import HORIZONS, apply_ablation, predict_windows, prepare, train, write_train_log

DEFAULT_SEEDS = [1, 2, 3, 4, 5]


@dataclass
class ExperimentConfig:
    data: str
    train: TrainConfig = field(default_factory=TrainConfig)
    seeds: list[int] = field(default_factory=lambda: list(DEFAULT_SEEDS))
    ablations: list[str] = field(default_factory=list)
    include_ha: bool = True
    ha_period: int = HA_PERIOD

    def __post_init__(self):
        if not self.seeds:
            raise ValidationError("experiment: seeds must be non-empty")
        self.ablations = [a.replace("-", "_") for a in self.ablations]
        for a in self.ablations:
            apply_ablation(self.train, [a])  # validates the flag

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            raw = json.load(fh)
        if "data" not in raw:
            raise ValidationError("experiment config: missing 'data' directory")
        train_cfg = TrainConfig.from_dict(raw.get("train", {}))
        known = {"data", "train", "seeds", "ablations", "include_ha", "ha_period"}
        unknown = set(raw) - known
        if unknown:
            raise ValidationError(f"experiment config: unknown fields {sorted(unknown)}")
        return cls(
            data=raw["data"],
            train=train_cfg,
            seeds=list(raw.get("seeds", DEFAULT_SEEDS)),
            ablations=list(raw.get("ablations", [])),
            include_ha=bool(raw.get("include_ha", True)),
            ha_period=int(raw.get("ha_period", HA_PERIOD)),
        )


@dataclass
class MethodRun:
    method: str
    seed: int
    metrics: dict[int, tuple[float, float]]  # horizon -> (mae, rmse)
    log: list[dict] | None = None


@dataclass
class ExperimentReport:
    config: dict
    horizons: list[int]
    runs: list[MethodRun]
    environment: dict

    def summary(self) -> dict[str, dict[int, tuple[float, float]]]:
        """Per method: horizon -> (mean mae, mean rmse) across seeds."""
        methods: dict[str, list[MethodRun]] = {}
        for run in self.runs:
            methods.setdefault(run.method, []).append(run)
        out = {}
        for method, runs in methods.items():
            out[method] = {
                k: (
                    float(np.mean([r.metrics[k][0] for r in runs])),
                    float(np.mean([r.metrics[k][1] for r in runs])),
                )
                for k in self.horizons
            }
        return out


def _test_truth(prep) -> np.ndarray:
    t_all = np.array([w.t for w in prep.test_w])
    ks = np.arange(1, prep.cfg.tau_out + 1)
    return prep.frame.aqi[(t_all[:, None] + ks[None, :])].transpose(0, 2, 1)


def _score(prep, preds) -> dict[int, tuple[float, float]]:
    horizons = [k for k in HORIZONS if k <= prep.cfg.tau_out]
    hm = compute_horizon_metrics(
        preds,
        _test_truth(prep),
        horizons,
        prep.frame.station_city,
        prep.frame.cities,
        prep.eval_stations,
    )
    return {k: (hm.mae[k], hm.rmse[k]) for k in horizons}


def run_experiment(exp: ExperimentConfig, out_dir, quiet: bool = True) -> ExperimentReport:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    frame = interpolate_missing(load_corpus(exp.data))

    methods = [("model", [])] + [(f"wo_{a}", [a]) for a in exp.ablations]
    runs: list[MethodRun] = []
    horizons = [k for k in HORIZONS if k <= exp.train.tau_out]
    ha_prep = prepare(frame, exp.train) if exp.include_ha else None
    for seed in exp.seeds:
        for name, flags in methods:
            cfg = apply_ablation(exp.train, flags)
            cfg = TrainConfig.from_dict({**cfg.to_dict(), "seed": seed})
            result = train(cfg, frame, quiet=quiet)
            preds = predict_windows(result.params, result.prep, result.prep.test_w)
            runs.append(MethodRun(name, seed, _score(result.prep, preds), result.log))
            write_train_log(out / f"training_log_{name}_seed{seed}.csv", result.log)
        if ha_prep is not None:
            train_end = ha_prep.train_w[-1].target_end_row + 1
            t_all = np.array([w.t for w in ha_prep.test_w])
            preds = ha_predict_windows(
                frame.aqi, train_end, t_all, exp.train.tau_out, exp.ha_period
            )
            runs.append(MethodRun("ha", seed, _score(ha_prep, preds)))

    report = ExperimentReport(
        config={
            "data": exp.data,
            "train": exp.train.to_dict(),
            "seeds": exp.seeds,
            "ablations": exp.ablations,
            "include_ha": exp.include_ha,
            "ha_period": exp.ha_period,
        },
        horizons=horizons,
        runs=runs,
        environment={
            "python": platform.python_version(),
            "numpy": np.__version__,
            "machine": platform.machine(),
        },
    )
    write_report(report, out)
    return report


def write_report(report: ExperimentReport, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "metrics.csv", "w") as fh:
        fh.write("method,seed,horizon,mae,rmse\n")
        for run in sorted(report.runs, key=lambda r: (r.method, r.seed)):
            for k in report.horizons:
                m, r = run.metrics[k]
                fh.write(f"{run.method},{run.seed},{k},{m!r},{r!r}\n")
    summary = report.summary()
    with open(out / "summary.csv", "w") as fh:
        fh.write("method,horizon,mean_mae,mean_rmse\n")
        for method in sorted(summary):
            for k in report.horizons:
                m, r = summary[method][k]
                fh.write(f"{method},{k},{m!r},{r!r}\n")
    series = {
        method: [(k, summary[method][k][0]) for k in report.horizons] for method in sorted(summary)
    }
    with open(out / "chart.svg", "w") as fh:
        fh.write(svg_line_chart(series, "mean test MAE by horizon", "horizon (h)", "MAE"))
    with open(out / "report.json", "w") as fh:
        json.dump(
            {
                "config": report.config,
                "horizons": report.horizons,
                "environment": report.environment,
                "summary": {
                    m: {str(k): list(v) for k, v in hs.items()} for m, hs in summary.items()
                },
            },
            fh,
            indent=1,
        )


# ---------------------------------------------------------------------------
# lambda sweep


def lambda_sweep(exp: ExperimentConfig, values: list[float], out_dir=None, quiet: bool = True) -> list[dict]:
    frame = interpolate_missing(load_corpus(exp.data))
    rows = []
    for lam in values:
        cfg = TrainConfig.from_dict({**exp.train.to_dict(), "lambda": lam})
        result = train(cfg, frame, quiet=quiet)
        prep = result.prep
        best = result.log[result.best_epoch] if result.log else None
        horizons = [k for k in HORIZONS if k <= cfg.tau_out]
        val_mae = (
            float(np.mean([best[f"val_mae_{k}h"] for k in horizons])) if best else float("nan")
        )
        row = {
            "lambda": lam,
            "val_mae": val_mae,
            "city_edges": int(prep.topo_city.n_edges),
            "station_edges": int(len(prep.sta_src)),
        }
        for ci, cid in enumerate(frame.cities):
            row[f"edges_{cid}"] = int(prep.station_topos[ci].n_edges)
        rows.append(row)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        cols = list(rows[0].keys())
        with open(out / "lambda_sweep.csv", "w") as fh:
            fh.write(",".join(cols) + "\n")
            for row in rows:
                fh.write(",".join(repr(row[c]) if isinstance(row[c], float) else str(row[c]) for c in cols) + "\n")
        series = {"val_mae": [(row["lambda"], row["val_mae"]) for row in rows]}
        with open(out / "lambda_sweep.svg", "w") as fh:
            fh.write(svg_line_chart(series, "validation MAE by lambda", "lambda", "MAE"))
    return rows


# ---------------------------------------------------------------------------
# chart


_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"]


def svg_line_chart(series: dict[str, list[tuple[float, float]]], title: str, xlabel: str, ylabel: str) -> str:
    """Minimal multi-line chart emitted as standalone SVG markup."""
    width, height = 640, 420
    left, right, top, bottom = 70, 160, 50, 50
    xs = [x for pts in series.values() for x, _ in pts]
    ys = [y for pts in series.values() for _, y in pts]
    if not xs:
        raise ValidationError("svg_line_chart: no data")
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    if x_hi == x_lo:
        x_hi = x_lo + 1
    if y_hi == y_lo:
        y_hi = y_lo + 1
    y_lo, y_hi = y_lo - 0.05 * (y_hi - y_lo), y_hi + 0.05 * (y_hi - y_lo)

    def px(x):
        return left + (x - x_lo) / (x_hi - x_lo) * (width - left - right)

    def py(y):
        return height - bottom - (y - y_lo) / (y_hi - y_lo) * (height - top - bottom)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="sans-serif" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.0f}" y="24" text-anchor="middle" font-size="15">{title}</text>',
        f'<line x1="{left}" y1="{height - bottom}" x2="{width - right}" y2="{height - bottom}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{height - bottom}" stroke="black"/>',
        f'<text x="{(width - right + left) / 2:.0f}" y="{height - 12}" text-anchor="middle">{xlabel}</text>',
        f'<text x="18" y="{(height - bottom + top) / 2:.0f}" text-anchor="middle" '
        f'transform="rotate(-90 18 {(height - bottom + top) / 2:.0f})">{ylabel}</text>',
    ]
    for i in range(5):
        yv = y_lo + (y_hi - y_lo) * i / 4
        parts.append(
            f'<line x1="{left - 4}" y1="{py(yv):.1f}" x2="{left}" y2="{py(yv):.1f}" stroke="black"/>'
            f'<text x="{left - 8}" y="{py(yv) + 4:.1f}" text-anchor="end">{yv:.2f}</text>'
        )
    for xv in sorted({x for pts in series.values() for x, _ in pts}):
        parts.append(
            f'<line x1="{px(xv):.1f}" y1="{height - bottom}" x2="{px(xv):.1f}" '
            f'y2="{height - bottom + 4}" stroke="black"/>'
            f'<text x="{px(xv):.1f}" y="{height - bottom + 18}" text-anchor="middle">{xv:g}</text>'
        )
    for i, (name, pts) in enumerate(series.items()):
        color = _PALETTE[i % len(_PALETTE)]
        coords = " ".join(f"{px(x):.1f},{py(y):.1f}" for x, y in sorted(pts))
        parts.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="2"/>')
        for x, y in pts:
            parts.append(f'<circle cx="{px(x):.1f}" cy="{py(y):.1f}" r="3" fill="{color}"/>')
        ly = top + 16 * i
        parts.append(
            f'<line x1="{width - right + 12}" y1="{ly}" x2="{width - right + 34}" y2="{ly}" '
            f'stroke="{color}" stroke-width="2"/>'
            f'<text x="{width - right + 40}" y="{ly + 4}">{name}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts)
