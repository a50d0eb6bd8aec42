"""Training configuration, JSON round-trip, and ablation flags."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields

from .errors import ValidationError

ABLATIONS = ("weather", "poi", "hierarchy", "city_lstm", "dynamic")


@dataclass
class TrainConfig:
    tau_in: int = 24
    tau_out: int = 12
    lam: float = 1.2  # serialized as "lambda"
    gnn_hidden: int = 32
    lstm_hidden: int = 64
    lu_dim: int | None = None  # defaults to gnn_hidden
    batch_size: int = 128
    epochs: int = 300
    learning_rate: float = 1e-3
    seed: int = 0
    split: tuple[float, float, float] = (0.7, 0.1, 0.2)
    ablate: list[str] = field(default_factory=list)
    eval_cities: list[str] | None = None  # None = score every city
    loss_scope: str = "all"  # "all" | "eval": which stations enter the loss

    def __post_init__(self):
        self.split = tuple(float(v) for v in self.split)
        self.ablate = [a.replace("-", "_") for a in self.ablate]
        if self.lu_dim is None:
            self.lu_dim = self.gnn_hidden
        self.validate()

    def validate(self) -> None:
        if self.tau_in <= 0 or self.tau_out <= 0:
            raise ValidationError("tau_in and tau_out must be positive")
        if len(self.split) != 3 or abs(sum(self.split) - 1.0) > 1e-9:
            raise ValidationError(f"split must be 3 fractions summing to 1, got {self.split}")
        if self.lam < 1.0:
            raise ValidationError(f"lambda must be >= 1, got {self.lam}")
        if self.batch_size <= 0 or self.epochs < 0:
            raise ValidationError("batch_size must be positive and epochs non-negative")
        if min(self.gnn_hidden, self.lstm_hidden, self.lu_dim) <= 0:
            raise ValidationError("hidden sizes must be positive")
        for a in self.ablate:
            if a not in ABLATIONS:
                raise ValidationError(f"unknown ablation {a!r}; choose from {ABLATIONS}")
        if len(set(self.ablate)) != len(self.ablate):
            raise ValidationError("duplicate ablation flags")
        if "hierarchy" in self.ablate and "city_lstm" in self.ablate:
            raise ValidationError(
                "contradictory ablations: 'hierarchy' already removes the city level "
                "that 'city_lstm' modifies"
            )
        if self.loss_scope not in ("all", "eval"):
            raise ValidationError(f"loss_scope must be 'all' or 'eval', got {self.loss_scope!r}")

    def without(self, name: str) -> bool:
        """True when the named component is ablated away."""
        return name in self.ablate

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            key = "lambda" if f.name == "lam" else f.name
            val = getattr(self, f.name)
            out[key] = list(val) if isinstance(val, tuple) else val
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "TrainConfig":
        raw = dict(raw)
        if "lambda" in raw:
            raw["lam"] = raw.pop("lambda")
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValidationError(f"config: unknown fields {sorted(unknown)}")
        return cls(**raw)

    @classmethod
    def from_json(cls, path) -> "TrainConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))
