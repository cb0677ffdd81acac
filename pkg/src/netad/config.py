"""Run configuration: flat dotted keys, defaults derived from the model
config dataclasses (single source of truth), file + CLI overrides with
precedence CLI > file > defaults. Unknown keys are rejected."""

from __future__ import annotations

import hashlib
from dataclasses import fields
from pathlib import Path

from .deep import AeConfig, CnnLstmConfig, GanConfig
from .ensemble import EnsembleConfig
from .errors import ConfigError
from .preprocess import LABEL, ONEHOT, Preprocessor
from .shallow import ForestConfig

MODEL_KINDS = ("ae", "gan", "knn", "rf", "cnnlstm", "ensemble")

# dataclass fields that are not user-facing flat-config knobs
_EXCLUDED_FIELDS = {"seed", "n_classes", "hidden"}


def _dataclass_defaults(prefix: str, cls) -> dict[str, object]:
    out = {}
    for f in fields(cls):
        if f.name in _EXCLUDED_FIELDS:
            continue
        key = f"{prefix}.{'lambda' if (prefix, f.name) == ('gan', 'lam') else f.name}"
        out[key] = f.default
    return out


def _base_defaults() -> dict[str, object]:
    d: dict[str, object] = {
        "data": "",
        "model": "ensemble",
        "seed": 0,
        "subsample": 1.0,
        "split.train_fraction": 0.8,
        "preprocess.encoding": "auto",      # label | onehot | auto (per model)
        "preprocess.l2_normalize": "auto",  # true | false | auto (per model)
        "preprocess.strict": True,
        "knn.k": 5,
        "knn.max_reference_rows": 20000,
    }
    d.update(_dataclass_defaults("forest", ForestConfig))
    d.update(_dataclass_defaults("cnnlstm", CnnLstmConfig))
    d.update(_dataclass_defaults("ae", AeConfig))
    d.update(_dataclass_defaults("gan", GanConfig))
    # 0 means "auto: ceil(sqrt(d))"
    d["forest.features_per_split"] = 0
    return d


DEFAULTS = _base_defaults()

# Desk-scale preset: stratified 5% subsample; epochs unchanged.
DESK_SCALE_OVERRIDES = {"subsample": 0.05, "knn.max_reference_rows": 20000}


def _coerce(key: str, raw: str) -> object:
    default = DEFAULTS[key]
    if isinstance(default, bool):
        if raw.lower() not in ("true", "false"):
            raise ConfigError(f"{key}: expected true/false, got {raw!r}")
        return raw.lower() == "true"
    if isinstance(default, int) and not isinstance(default, bool):
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{key}: expected integer, got {raw!r}") from None
    if isinstance(default, float):
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{key}: expected number, got {raw!r}") from None
    return raw


class RunConfig:
    """Resolved flat configuration for one run."""

    def __init__(self, values: dict[str, object] | None = None):
        self.values = dict(DEFAULTS)
        for key, val in (values or {}).items():
            self.set(key, val)

    def set(self, key: str, value: object) -> None:
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        self.values[key] = _coerce(key, value) if isinstance(value, str) \
            and not isinstance(DEFAULTS[key], str) else value

    def get(self, key: str):
        return self.values[key]

    def update_from_file(self, path: str | Path) -> None:
        for line_no, raw in enumerate(Path(path).read_text().splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{line_no}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            self.set(key.strip(), value.strip())

    # -- reproducibility ------------------------------------------------------

    def canonical_text(self) -> str:
        lines = []
        for key in sorted(self.values):
            v = self.values[key]
            if isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{key} = {v}")
        return "\n".join(lines) + "\n"

    def config_hash(self) -> str:
        """Hash over everything that affects artifact bytes (paths excluded;
        dataset identity is tracked by its checksum)."""
        lines = [
            f"{k}={self.values[k]}" for k in sorted(self.values) if k not in ("data",)
        ]
        return hashlib.sha256("\n".join(lines).encode()).hexdigest()

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.canonical_text())

    # -- model builders --------------------------------------------------------

    def resolve_encoding(self, model_kind: str) -> str:
        enc = self.values["preprocess.encoding"]
        if enc == "auto":
            return ONEHOT if model_kind == "ae" else LABEL
        if enc not in (LABEL, ONEHOT):
            raise ConfigError(f"preprocess.encoding must be label/onehot/auto, got {enc!r}")
        return enc

    def resolve_l2(self, model_kind: str) -> bool:
        l2 = self.values["preprocess.l2_normalize"]
        if l2 == "auto":
            return model_kind in ("ae", "gan")
        if isinstance(l2, bool):
            return l2
        if l2 in ("true", "false"):
            return l2 == "true"
        raise ConfigError(f"preprocess.l2_normalize must be true/false/auto, got {l2!r}")

    def build_preprocessor(self, model_kind: str) -> Preprocessor:
        return Preprocessor(
            kind=self.resolve_encoding(model_kind),
            l2_normalize=self.resolve_l2(model_kind),
            strict=bool(self.values["preprocess.strict"]),
        )

    def _collect(self, prefix: str, cls, **extra):
        kwargs = dict(extra)
        for f in fields(cls):
            if f.name in _EXCLUDED_FIELDS or f.name in kwargs:
                continue
            key = f"{prefix}.{'lambda' if (prefix, f.name) == ('gan', 'lam') else f.name}"
            if key in self.values:
                kwargs[f.name] = self.values[key]
        return cls(**kwargs)

    def ae_config(self) -> AeConfig:
        return self._collect("ae", AeConfig, seed=self.seed)

    def gan_config(self) -> GanConfig:
        return self._collect("gan", GanConfig, seed=self.seed)

    def cnnlstm_config(self) -> CnnLstmConfig:
        return self._collect("cnnlstm", CnnLstmConfig, seed=self.seed)

    def forest_config(self) -> ForestConfig:
        fps = self.values["forest.features_per_split"] or None
        return self._collect("forest", ForestConfig, seed=self.seed,
                             features_per_split=fps)

    def ensemble_config(self) -> EnsembleConfig:
        return EnsembleConfig(
            knn_k=self.values["knn.k"],
            knn_max_reference_rows=self.values["knn.max_reference_rows"] or None,
            cnnlstm=self.cnnlstm_config(),
            forest=self.forest_config(),
            seed=self.seed,
        )

    @property
    def seed(self) -> int:
        return int(self.values["seed"])

    @property
    def model_kind(self) -> str:
        kind = self.values["model"]
        if kind not in MODEL_KINDS:
            raise ConfigError(f"model must be one of {MODEL_KINDS}, got {kind!r}")
        return kind
