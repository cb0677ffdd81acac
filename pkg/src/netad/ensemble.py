"""Three-layer ensemble: KNN and CNN+LSTM predictions are compared, and
rows where they disagree are routed to a Random Forest that was trained on
exactly the train-split rows the first two layers disagreed on."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .deep import CnnLstmClassifier, CnnLstmConfig
from .errors import DimensionMismatch
from .preprocess import FeatureMatrix
from .shallow import ForestClassifier, ForestConfig, KnnClassifier

logger = logging.getLogger(__name__)

# Below this many conflicted rows a forest is noise; fall back to layer 2.
MIN_CONFLICTS = 10


@dataclass
class EnsembleConfig:
    knn_k: int = 5
    knn_max_reference_rows: int | None = 20000
    cnnlstm: CnnLstmConfig = None  # type: ignore[assignment]
    forest: ForestConfig = None    # type: ignore[assignment]
    seed: int = 0

    def __post_init__(self):
        if self.cnnlstm is None:
            self.cnnlstm = CnnLstmConfig(seed=self.seed)
        if self.forest is None:
            self.forest = ForestConfig(seed=self.seed)


class EnsembleModel:
    """Trained layers plus routing metadata. layer3 is None when the train
    split produced too few conflicts to fit a forest (fallback = layer 2)."""

    def __init__(self, layer1, layer2, layer3, conflict_count: int):
        self.layer1 = layer1
        self.layer2 = layer2
        self.layer3 = layer3
        self.conflict_count = conflict_count

    @property
    def fallback(self) -> str:
        return "Layer2"

    def predict(self, queries) -> np.ndarray:
        return ensemble_predict(self, queries)

    def predict_detailed(self, queries) -> dict[str, np.ndarray]:
        """Predictions plus per-layer outputs and the conflict-routing mask."""
        values = queries.values if isinstance(queries, FeatureMatrix) else np.asarray(queries)
        p1 = np.asarray(self.layer1.predict(values))
        p2 = np.asarray(self.layer2.predict(values))
        if p1.shape != p2.shape:
            raise DimensionMismatch(
                f"layer outputs disagree in shape: {p1.shape} vs {p2.shape}")
        routed = p1 != p2
        out = p1.copy()
        if routed.any():
            if self.layer3 is not None:
                out[routed] = np.asarray(self.layer3.predict(values[routed]))
            else:
                out[routed] = p2[routed]
        return {"prediction": out, "layer1": p1, "layer2": p2, "routed": routed}


def ensemble_train(train: FeatureMatrix, config: EnsembleConfig | None = None,
                   layer1=None, layer2=None, forest_factory=None) -> EnsembleModel:
    """Fit layers 1 and 2 on the full train split, collect their train-split
    disagreements, and fit the layer-3 forest on those conflicted rows.

    `layer1`/`layer2`/`forest_factory` accept pre-built (or stub) models for
    tests; by default the standard KNN / CNN+LSTM / forest are constructed.
    """
    cfg = config or EnsembleConfig()
    if layer1 is None:
        layer1 = KnnClassifier(k=cfg.knn_k, max_reference_rows=cfg.knn_max_reference_rows,
                               seed=cfg.seed).fit(train)
    if layer2 is None:
        layer2 = CnnLstmClassifier(cfg.cnnlstm).fit(train)

    p1 = np.asarray(layer1.predict(train.values))
    p2 = np.asarray(layer2.predict(train.values))
    conflicts = np.flatnonzero(p1 != p2)
    conflict_count = int(conflicts.size)
    logger.info("ensemble: %d/%d train rows conflicted", conflict_count, train.n_rows)

    layer3 = None
    if conflict_count >= MIN_CONFLICTS:
        conflict_matrix = FeatureMatrix(
            values=train.values[conflicts],
            labels=train.labels[conflicts],
            columns=train.columns,
            indices=None if train.indices is None else train.indices[conflicts],
        )
        if forest_factory is None:
            layer3 = ForestClassifier(cfg.forest).fit(conflict_matrix)
        else:
            layer3 = forest_factory(conflict_matrix)
    else:
        logger.warning(
            "ensemble: only %d conflicted rows (< %d); layer 3 disabled, "
            "falling back to layer 2 on disagreements", conflict_count, MIN_CONFLICTS)
    return EnsembleModel(layer1, layer2, layer3, conflict_count)


def ensemble_predict(model: EnsembleModel, queries) -> np.ndarray:
    """Agreed class where layers 1 and 2 match; layer 3 (or the fallback)
    elsewhere. Layer 3 sees exactly the conflicted rows."""
    return model.predict_detailed(queries)["prediction"]
