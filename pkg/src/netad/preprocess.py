"""Fit-on-train / apply-anywhere encoding and scaling.

Pipeline order: encode categoricals -> min-max scale -> optional L2 row
normalization. Column layout of the produced matrix: the 38 numeric
features in record order, then the categorical groups (protocol_type,
service, flag) appended -- one code column each under label encoding,
one indicator column per vocabulary token under one-hot.

Everything downstream of this module runs in float32: that is the
precision the model-bundle tensor format stores, and scoring a reloaded
bundle must reproduce training-time outputs bitwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import UnseenCategory
from .kdd import CATEGORICAL_NAMES, NUMERIC_NAMES, Dataset

LABEL = "label"
ONEHOT = "onehot"


@dataclass
class CategoricalEncoder:
    """Per-column vocabularies (sorted) with label or one-hot encoding."""

    kind: str
    vocabularies: dict[str, list[str]]

    def __post_init__(self):
        if self.kind not in (LABEL, ONEHOT):
            raise ValueError(f"unknown encoder kind {self.kind!r}")
        for name, vocab in self.vocabularies.items():
            if sorted(set(vocab)) != vocab:
                raise ValueError(f"vocabulary for {name!r} must be sorted and duplicate-free")

    @classmethod
    def fit(cls, train: Dataset, kind: str) -> "CategoricalEncoder":
        if len(train) == 0:
            raise ValueError("cannot fit an encoder on an empty dataset")
        vocabs = {
            name: sorted(set(train.categoricals[i]))
            for i, name in enumerate(CATEGORICAL_NAMES)
        }
        return cls(kind=kind, vocabularies=vocabs)

    def codes(self, column: str, tokens: list[str], strict: bool = True) -> np.ndarray:
        """Token codes for one column; unseen tokens are -1 in lenient mode."""
        vocab = self.vocabularies[column]
        code_of = {tok: i for i, tok in enumerate(vocab)}
        out = np.empty(len(tokens), dtype=np.int64)
        for i, tok in enumerate(tokens):
            code = code_of.get(tok, -1)
            if code < 0 and strict:
                raise UnseenCategory(f"token {tok!r} not in training vocabulary of {column!r}")
            out[i] = code
        return out

    def decode(self, column: str, code: int) -> str:
        return self.vocabularies[column][code]

    def width(self, column: str) -> int:
        return 1 if self.kind == LABEL else len(self.vocabularies[column])


def fit_label_encoder(train: Dataset) -> CategoricalEncoder:
    return CategoricalEncoder.fit(train, LABEL)


def fit_one_hot_encoder(train: Dataset) -> CategoricalEncoder:
    return CategoricalEncoder.fit(train, ONEHOT)


@dataclass
class MinMaxScaler:
    """Per-feature min/max fitted on the train split only (float32)."""

    col_min: np.ndarray
    col_max: np.ndarray

    @classmethod
    def fit(cls, values: np.ndarray) -> "MinMaxScaler":
        v = np.asarray(values, dtype=np.float32)
        return cls(col_min=v.min(axis=0), col_max=v.max(axis=0))

    def transform(self, values: np.ndarray) -> np.ndarray:
        v = np.asarray(values, dtype=np.float32)
        span = self.col_max - self.col_min
        safe = np.where(span == 0.0, np.float32(1.0), span)
        out = (v - self.col_min) / safe
        out[:, span == 0.0] = 0.0  # constant train columns map to 0 by convention
        return out


@dataclass
class FeatureMatrix:
    """Dense real matrix of encoded/scaled records plus aligned labels."""

    values: np.ndarray            # (n, d) float32, no NaN/Inf
    labels: np.ndarray            # (n,) int64 class codes 0..4
    columns: list[str] = field(default_factory=list)
    indices: np.ndarray | None = None  # original file positions, when known

    def __post_init__(self):
        if self.values.shape[0] != self.labels.shape[0]:
            raise ValueError("labels length must equal row count")
        if not np.isfinite(self.values).all():
            raise ValueError("feature matrix contains NaN/Inf")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    def binary_labels(self) -> np.ndarray:
        """Normal=0, any attack=1 (a view over the 5-class codes)."""
        return (self.labels != 0).astype(np.int64)


def l2_normalize_rows(m: FeatureMatrix) -> FeatureMatrix:
    """Divide each nonzero row by its Euclidean norm; zero rows unchanged."""
    return FeatureMatrix(
        values=_l2_rows(m.values),
        labels=m.labels,
        columns=m.columns,
        indices=m.indices,
    )


def _l2_rows(values: np.ndarray) -> np.ndarray:
    # norms accumulate in float64: squares of small f32 values underflow
    v = values.astype(np.float64)
    norms = np.sqrt((v * v).sum(axis=1, keepdims=True))
    safe = np.where(norms == 0.0, 1.0, norms)
    return (v / safe).astype(np.float32)


class Preprocessor:
    """Encoder + scaler pair with fixed pipeline order and serializable state."""

    def __init__(self, kind: str = LABEL, l2_normalize: bool = False, strict: bool = True):
        self.kind = kind
        self.l2_normalize = l2_normalize
        self.strict = strict
        self.encoder: CategoricalEncoder | None = None
        self.scaler: MinMaxScaler | None = None
        self.columns: list[str] = []

    def fit(self, train: Dataset) -> "Preprocessor":
        self.encoder = CategoricalEncoder.fit(train, self.kind)
        scalable = self._scalable_block(train, strict=True)
        self.scaler = MinMaxScaler.fit(scalable)
        self.columns = self._column_names()
        return self

    def _column_names(self) -> list[str]:
        cols = list(NUMERIC_NAMES)
        assert self.encoder is not None
        for name in CATEGORICAL_NAMES:
            if self.kind == LABEL:
                cols.append(f"{name}#code")
            else:
                cols += [f"{name}={tok}" for tok in self.encoder.vocabularies[name]]
        return cols

    def _scalable_block(self, dataset: Dataset, strict: bool) -> np.ndarray:
        """Numeric features, plus label-code columns under label encoding."""
        numerics = dataset.numerics.astype(np.float32)
        if self.kind == ONEHOT:
            return numerics
        assert self.encoder is not None
        codes = [
            self.encoder.codes(name, dataset.categoricals[i], strict=strict)
            for i, name in enumerate(CATEGORICAL_NAMES)
        ]
        return np.hstack([numerics] + [c.astype(np.float32).reshape(-1, 1) for c in codes])

    def transform(self, dataset: Dataset) -> FeatureMatrix:
        if self.encoder is None or self.scaler is None:
            raise RuntimeError("Preprocessor.transform called before fit")
        if self.kind == LABEL:
            block = self._scalable_block(dataset, strict=self.strict)
            unseen = block[:, len(NUMERIC_NAMES):] == -1.0
            values = self.scaler.transform(block)
            # lenient mode: unseen tokens become 0 in the scaled code column
            values[:, len(NUMERIC_NAMES):][unseen] = 0.0
        else:
            scaled = self.scaler.transform(dataset.numerics.astype(np.float32))
            groups = [scaled]
            for i, name in enumerate(CATEGORICAL_NAMES):
                codes = self.encoder.codes(name, dataset.categoricals[i], strict=self.strict)
                width = len(self.encoder.vocabularies[name])
                onehot = np.zeros((len(codes), width), dtype=np.float32)
                seen = codes >= 0
                onehot[np.flatnonzero(seen), codes[seen]] = 1.0
                groups.append(onehot)
            values = np.hstack(groups)
        if self.l2_normalize:
            values = _l2_rows(values)
        return FeatureMatrix(
            values=values,
            labels=dataset.categories.astype(np.int64),
            columns=list(self.columns),
            indices=dataset.indices.copy(),
        )

    def find_unseen(self, dataset: Dataset) -> dict[int, tuple[str, str]]:
        """Rows carrying tokens outside the training vocabulary.

        Maps row position -> (column name, token) for the first offending
        column of each affected row; used for per-record error reporting.
        """
        assert self.encoder is not None
        out: dict[int, tuple[str, str]] = {}
        for i, name in enumerate(CATEGORICAL_NAMES):
            codes = self.encoder.codes(name, dataset.categoricals[i], strict=False)
            for row in np.flatnonzero(codes == -1):
                out.setdefault(int(row), (name, dataset.categoricals[i][row]))
        return out

    # -- bundle (de)serialization ------------------------------------------

    def to_state(self) -> dict:
        assert self.encoder is not None and self.scaler is not None
        return {
            "kind": self.kind,
            "l2_normalize": self.l2_normalize,
            "strict": self.strict,
            "vocabularies": self.encoder.vocabularies,
            "columns": self.columns,
        }

    @classmethod
    def from_state(cls, state: dict, col_min: np.ndarray, col_max: np.ndarray) -> "Preprocessor":
        p = cls(kind=state["kind"], l2_normalize=state["l2_normalize"], strict=state["strict"])
        p.encoder = CategoricalEncoder(kind=state["kind"], vocabularies=state["vocabularies"])
        p.scaler = MinMaxScaler(
            col_min=np.asarray(col_min, dtype=np.float32),
            col_max=np.asarray(col_max, dtype=np.float32),
        )
        p.columns = list(state["columns"])
        return p
