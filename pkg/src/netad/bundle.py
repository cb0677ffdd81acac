"""Model bundles: a manifest.json plus a tensors.bin blob in a directory.

Blob format, trivially parseable from any language: per tensor, in
manifest-listed order --

    u64 LE  name length in bytes
    ...     name (UTF-8)
    u64 LE  rank
    u64 LE  dims[rank]
    f32 LE  data (row-major)

The manifest lists every tensor's byte offset and shape. All numeric model
state lives in f32 tensors (integer tables are stored as exactly
representable floats), so a reloaded bundle reproduces training-time
outputs bitwise. The manifest's created_at field is the only
non-deterministic byte in a bundle.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .deep import (
    AeConfig, AutoencoderDetector, CnnLstmClassifier, CnnLstmConfig,
    GanConfig, GanDetector,
)
from .ensemble import EnsembleModel
from .errors import BundleError
from .preprocess import Preprocessor
from .shallow import ForestClassifier, ForestConfig, KnnClassifier, Tree

FORMAT_VERSION = 1

MANIFEST_NAME = "manifest.json"
TENSORS_NAME = "tensors.bin"


def write_blob(tensors: dict[str, np.ndarray]) -> tuple[bytes, dict[str, dict]]:
    """Concatenated tensor records (sorted by name) plus the offset index."""
    chunks: list[bytes] = []
    index: dict[str, dict] = {}
    offset = 0
    for name in sorted(tensors):
        t = np.ascontiguousarray(tensors[name], dtype=np.float32)
        name_b = name.encode("utf-8")
        rec = (
            struct.pack("<Q", len(name_b)) + name_b
            + struct.pack("<Q", t.ndim)
            + struct.pack(f"<{t.ndim}Q", *t.shape)
            + t.astype("<f4").tobytes()
        )
        index[name] = {"offset": offset, "shape": list(t.shape)}
        offset += len(rec)
        chunks.append(rec)
    return b"".join(chunks), index


def read_blob(data: bytes) -> dict[str, np.ndarray]:
    tensors: dict[str, np.ndarray] = {}
    pos = 0
    while pos < len(data):
        (name_len,) = struct.unpack_from("<Q", data, pos)
        pos += 8
        name = data[pos:pos + name_len].decode("utf-8")
        pos += name_len
        (rank,) = struct.unpack_from("<Q", data, pos)
        pos += 8
        shape = struct.unpack_from(f"<{rank}Q", data, pos)
        pos += 8 * rank
        count = int(np.prod(shape)) if rank else 1
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=pos).reshape(shape)
        pos += 4 * count
        tensors[name] = arr.copy()
    return tensors


class ModelBundle:
    """Serialized parameters + preprocessing state + thresholds for one model."""

    def __init__(self, manifest: dict, tensors: dict[str, np.ndarray]):
        self.manifest = manifest
        self.tensors = tensors

    @property
    def model_kind(self) -> str:
        return self.manifest["model_kind"]

    def save(self, out_dir: str | Path) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        blob, index = write_blob(self.tensors)
        manifest = dict(self.manifest)
        manifest["format_version"] = FORMAT_VERSION
        manifest["tensors"] = index
        manifest["tensors_sha256"] = hashlib.sha256(blob).hexdigest()
        (out / TENSORS_NAME).write_bytes(blob)
        (out / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True))
        return out

    @classmethod
    def load(cls, bundle_dir: str | Path) -> "ModelBundle":
        d = Path(bundle_dir)
        manifest_path = d / MANIFEST_NAME
        blob_path = d / TENSORS_NAME
        if not manifest_path.is_file() or not blob_path.is_file():
            raise BundleError(f"no bundle at {d} (need {MANIFEST_NAME} + {TENSORS_NAME})")
        manifest = json.loads(manifest_path.read_text())
        if manifest.get("format_version") != FORMAT_VERSION:
            raise BundleError(f"unsupported bundle format {manifest.get('format_version')}")
        blob = blob_path.read_bytes()
        if hashlib.sha256(blob).hexdigest() != manifest.get("tensors_sha256"):
            raise BundleError("tensor blob does not match its manifest checksum")
        tensors = read_blob(blob)
        listed = set(manifest.get("tensors", {}))
        if listed != set(tensors):
            raise BundleError("manifest tensor index disagrees with the blob")
        return cls(manifest, tensors)


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat()


# ---------------------------------------------------------------------------
# model <-> tensor maps
# ---------------------------------------------------------------------------

def _pack_preprocessor(pre: Preprocessor, tensors: dict) -> dict:
    assert pre.scaler is not None
    tensors["preproc.col_min"] = pre.scaler.col_min
    tensors["preproc.col_max"] = pre.scaler.col_max
    return pre.to_state()


def _unpack_preprocessor(manifest: dict, tensors: dict) -> Preprocessor:
    return Preprocessor.from_state(
        manifest["preprocessing"], tensors["preproc.col_min"], tensors["preproc.col_max"])


def _pack_network(net, prefix: str, tensors: dict) -> None:
    tensors.update(net.state_tensors(prefix))


def _pack_knn(model: KnnClassifier, tensors: dict, prefix: str = "knn") -> dict:
    assert model.references is not None and model.labels is not None
    tensors[f"{prefix}.references"] = model.references
    tensors[f"{prefix}.labels"] = model.labels.astype(np.float32)
    return {
        "k": model.k,
        "n_classes": model.n_classes,
        "max_reference_rows": model.max_reference_rows,
        "seed": model.seed,
        "reference_capped": model.reference_capped,
    }


def _unpack_knn(meta: dict, tensors: dict, prefix: str = "knn") -> KnnClassifier:
    m = KnnClassifier(k=meta["k"], max_reference_rows=meta["max_reference_rows"],
                      seed=meta["seed"], n_classes=meta["n_classes"])
    m.references = np.ascontiguousarray(tensors[f"{prefix}.references"], dtype=np.float32)
    m.labels = tensors[f"{prefix}.labels"].astype(np.int64)
    m.reference_capped = meta["reference_capped"]
    return m


def _pack_forest(model: ForestClassifier, tensors: dict, prefix: str = "forest") -> dict:
    for i, tree in enumerate(model.trees):
        tensors[f"{prefix}.t{i}.feature"] = tree.feature.astype(np.float32)
        tensors[f"{prefix}.t{i}.threshold"] = tree.threshold
        tensors[f"{prefix}.t{i}.left"] = tree.left.astype(np.float32)
        tensors[f"{prefix}.t{i}.right"] = tree.right.astype(np.float32)
        tensors[f"{prefix}.t{i}.hist"] = tree.hist.astype(np.float32)
    return {"config": model.config.__dict__, "n_trees_fitted": len(model.trees)}


def _unpack_forest(meta: dict, tensors: dict, prefix: str = "forest") -> ForestClassifier:
    model = ForestClassifier(ForestConfig(**meta["config"]))
    model.trees = []
    for i in range(meta["n_trees_fitted"]):
        model.trees.append(Tree(
            feature=tensors[f"{prefix}.t{i}.feature"].astype(np.int32),
            threshold=np.ascontiguousarray(tensors[f"{prefix}.t{i}.threshold"],
                                           dtype=np.float32),
            left=tensors[f"{prefix}.t{i}.left"].astype(np.int32),
            right=tensors[f"{prefix}.t{i}.right"].astype(np.int32),
            hist=tensors[f"{prefix}.t{i}.hist"].astype(np.int64),
        ))
    return model


def _pack_cnnlstm(model: CnnLstmClassifier, tensors: dict, prefix: str = "cnnlstm") -> dict:
    assert model.network is not None
    _pack_network(model.network, prefix, tensors)
    return {
        "config": model.config.__dict__,
        "input_dim": model.input_dim,
        "best_val_accuracy": model.best_val_accuracy,
    }


def _unpack_cnnlstm(meta: dict, tensors: dict, prefix: str = "cnnlstm") -> CnnLstmClassifier:
    model = CnnLstmClassifier(CnnLstmConfig(**meta["config"]))
    model.input_dim = meta["input_dim"]
    model.best_val_accuracy = meta["best_val_accuracy"]
    model.network = model._build(model.input_dim, np.random.default_rng(0))
    model.network.load_state_tensors(prefix, tensors)
    return model


def _pack_ae(model: AutoencoderDetector, tensors: dict) -> dict:
    assert model.network is not None
    _pack_network(model.network, "ae", tensors)
    return {
        "config": model.config.__dict__,
        "input_dim": model.input_dim,
        "threshold": model.threshold,
    }


def _unpack_ae(meta: dict, tensors: dict) -> AutoencoderDetector:
    cfg = dict(meta["config"])
    cfg["hidden"] = tuple(cfg["hidden"])
    model = AutoencoderDetector(AeConfig(**cfg))
    model.input_dim = meta["input_dim"]
    model.threshold = meta["threshold"]
    model.network = model._build(model.input_dim, np.random.default_rng(0))
    model.network.load_state_tensors("ae", tensors)
    return model


def _pack_gan(model: GanDetector, tensors: dict) -> dict:
    assert model.generator is not None and model.discriminator is not None
    _pack_network(model.generator, "gan.g", tensors)
    _pack_network(model.discriminator, "gan.d", tensors)
    if model.encoder is not None:
        _pack_network(model.encoder, "gan.e", tensors)
    return {
        "config": model.config.__dict__,
        "input_dim": model.input_dim,
        "threshold": model.threshold,
        "has_encoder": model.encoder is not None,
    }


def _unpack_gan(meta: dict, tensors: dict) -> GanDetector:
    model = GanDetector(GanConfig(**meta["config"]))
    model.input_dim = meta["input_dim"]
    model.threshold = meta["threshold"]
    rng = np.random.default_rng(0)
    model.generator = model._build_generator(model.input_dim, rng)
    model.generator.load_state_tensors("gan.g", tensors)
    model.discriminator = model._build_discriminator(model.input_dim, rng, rng)
    model.discriminator.load_state_tensors("gan.d", tensors)
    if meta["has_encoder"]:
        model.encoder = model._build_encoder(model.input_dim, rng)
        model.encoder.load_state_tensors("gan.e", tensors)
    return model


def _pack_ensemble(model: EnsembleModel, tensors: dict) -> dict:
    meta = {
        "conflict_count": model.conflict_count,
        "has_layer3": model.layer3 is not None,
        "layer1": _pack_knn(model.layer1, tensors, prefix="l1.knn"),
        "layer2": _pack_cnnlstm(model.layer2, tensors, prefix="l2.cnnlstm"),
    }
    if model.layer3 is not None:
        meta["layer3"] = _pack_forest(model.layer3, tensors, prefix="l3.forest")
    return meta


def _unpack_ensemble(meta: dict, tensors: dict) -> EnsembleModel:
    layer1 = _unpack_knn(meta["layer1"], tensors, prefix="l1.knn")
    layer2 = _unpack_cnnlstm(meta["layer2"], tensors, prefix="l2.cnnlstm")
    layer3 = _unpack_forest(meta["layer3"], tensors, prefix="l3.forest") \
        if meta["has_layer3"] else None
    return EnsembleModel(layer1, layer2, layer3, meta["conflict_count"])


_PACKERS = {
    "knn": _pack_knn,
    "rf": _pack_forest,
    "cnnlstm": _pack_cnnlstm,
    "ae": lambda m, t: _pack_ae(m, t),
    "gan": lambda m, t: _pack_gan(m, t),
    "ensemble": lambda m, t: _pack_ensemble(m, t),
}

_UNPACKERS = {
    "knn": _unpack_knn,
    "rf": _unpack_forest,
    "cnnlstm": _unpack_cnnlstm,
    "ae": _unpack_ae,
    "gan": _unpack_gan,
    "ensemble": _unpack_ensemble,
}


def pack_model(model_kind: str, model, preprocessor: Preprocessor,
               run_metadata: dict) -> ModelBundle:
    """Bundle a trained model with its preprocessing state and run metadata."""
    if model_kind not in _PACKERS:
        raise BundleError(f"unknown model kind {model_kind!r}")
    tensors: dict[str, np.ndarray] = {}
    model_meta = _PACKERS[model_kind](model, tensors)
    manifest = {
        "model_kind": model_kind,
        "model": model_meta,
        "preprocessing": _pack_preprocessor(preprocessor, tensors),
        "created_at": _now(),
        **run_metadata,
    }
    return ModelBundle(manifest, tensors)


def unpack_model(bundle: ModelBundle):
    """Returns (model, preprocessor) reconstructed from a loaded bundle."""
    kind = bundle.model_kind
    if kind not in _UNPACKERS:
        raise BundleError(f"unknown model kind {kind!r}")
    model = _UNPACKERS[kind](bundle.manifest["model"], bundle.tensors)
    pre = _unpack_preprocessor(bundle.manifest, bundle.tensors)
    return model, pre
