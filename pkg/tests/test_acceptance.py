"""Acceptance suite: one test per criterion, each at its stated tolerance.

A summary table (one line per criterion) is printed in the terminal summary.
Criteria that require the public KDD Cup 99 10% file run against it when it
is available (NETAD_KDD10 env var or data/; see README) and otherwise run
the identical machinery on the synthetic desk-scale mirror corpus; the
ingestion-fidelity criterion has no synthetic substitute and is skipped
without the real file.
"""

from __future__ import annotations

import json
import time

import numpy as np
import pytest

from acceptance_report import record, record_skip
from conftest import real_kdd10_path
from gradcheck import check_layer, numeric_grad, relative_error
from netad.cli import main
from netad.deep import (
    AeConfig, AutoencoderDetector, GanConfig, GanDetector, anomaly_counts,
    nearest_rank_percentile,
)
from netad.ensemble import EnsembleModel, ensemble_predict
from netad.evaluation import BINARY, MACRO, WEIGHTED, binary_collapse, metrics
from netad.kdd import Category, SplitSpec, load_dataset, split_train_test, \
    stratified_subsample
from netad.nn import Conv1D, Dense, Dropout, Lstm, MaxPool1D, \
    loss_bce, loss_mse, loss_sparse_ce
from netad.preprocess import FeatureMatrix, Preprocessor
from netad.shallow import KnnClassifier

GRAD_TOL = 1e-4
PUBLIC_10PC_TOTALS = {
    Category.NORMAL: 97278,
    Category.DOS: 391458,
    Category.PROBE: 4107,
    Category.R2L: 1126,
    Category.U2R: 52,
}


@pytest.fixture(scope="module")
def desk_data(mirror_corpus):
    """Desk-scale dataset: 5% subsample of the real 10% file when present,
    otherwise the synthetic mirror corpus (already desk-sized)."""
    real = real_kdd10_path()
    if real is not None:
        ds = stratified_subsample(load_dataset(real), 0.05, seed=0)
        source = "real-kdd10-5pct"
    else:
        ds = load_dataset(mirror_corpus)
        source = "synthetic-mirror"
    train, test = split_train_test(ds, SplitSpec(train_fraction=0.8, seed=0))
    return {"train": train, "test": test, "source": source}


@pytest.fixture(scope="module")
def desk_onehot(desk_data):
    pre = Preprocessor(kind="onehot", l2_normalize=True, strict=False) \
        .fit(desk_data["train"])
    return pre.transform(desk_data["train"]), pre.transform(desk_data["test"])


@pytest.fixture(scope="module")
def desk_label_l2(desk_data):
    pre = Preprocessor(kind="label", l2_normalize=True, strict=False) \
        .fit(desk_data["train"])
    return pre.transform(desk_data["train"]), pre.transform(desk_data["test"])


# ---------------------------------------------------------------------------
# 1. ingestion fidelity (public 10% file)
# ---------------------------------------------------------------------------

def test_c01_ingestion_fidelity():
    path = real_kdd10_path()
    if path is None:
        record_skip("ingestion fidelity (494,021 records, exact category totals, <15s)",
                    "public 10% file not available in this environment")
        pytest.skip("public KDD 10% file not available; set NETAD_KDD10")
    t0 = time.time()
    ds = load_dataset(path)
    elapsed = time.time() - t0
    counts = ds.category_counts()
    ok = (len(ds) == 494021 and counts == PUBLIC_10PC_TOTALS and elapsed < 15.0)
    record("ingestion fidelity (494,021 records, exact category totals, <15s)", ok,
           f"records={len(ds)} elapsed={elapsed:.1f}s counts={counts}")


# ---------------------------------------------------------------------------
# 2. gradient suite: >=20 random small configs per op, 64-bit, <2 min
# ---------------------------------------------------------------------------

def test_c02_gradient_suite():
    t0 = time.time()
    worst: dict[str, float] = {}
    rng_master = np.random.default_rng(2024)

    def seeds():
        return [int(s) for s in rng_master.integers(0, 2**31, size=20)]

    for seed in seeds():
        rng = np.random.default_rng(seed)
        d, u, n = rng.integers(2, 7), rng.integers(1, 6), rng.integers(1, 6)
        layer = Dense(int(d), int(u), rng, dtype=np.float64)
        err = check_layer(layer, rng.standard_normal((int(n), int(d))), rng=rng)
        worst["dense"] = max(worst.get("dense", 0), err)

    for seed in seeds():
        rng = np.random.default_rng(seed)
        c_in, c_out, n = rng.integers(1, 4), rng.integers(1, 4), rng.integers(1, 4)
        length = int(rng.integers(3, 9))
        k = int(rng.integers(1, length + 1))
        layer = Conv1D(int(c_in), int(c_out), k, rng, dtype=np.float64)
        err = check_layer(layer, rng.standard_normal((int(n), length, int(c_in))), rng=rng)
        worst["conv1d"] = max(worst.get("conv1d", 0), err)

    for seed in seeds():
        rng = np.random.default_rng(seed)
        n, length, c = rng.integers(1, 4), rng.integers(2, 10), rng.integers(1, 4)
        layer = MaxPool1D(int(rng.integers(1, 4)))
        err = check_layer(layer, rng.standard_normal((int(n), int(length), int(c))), rng=rng)
        worst["max_pool"] = max(worst.get("max_pool", 0), err)

    for seed in seeds():
        rng = np.random.default_rng(seed)
        d, u = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        n, steps = int(rng.integers(1, 4)), int(rng.integers(1, 6))
        layer = Lstm(d, u, rng, dtype=np.float64)
        err = check_layer(layer, rng.standard_normal((n, steps, d)), rng=rng)
        worst["lstm"] = max(worst.get("lstm", 0), err)

    for seed in seeds():
        rng = np.random.default_rng(seed)
        layer = Dropout(0.0)
        err = check_layer(layer, rng.standard_normal((int(rng.integers(1, 5)),
                                                      int(rng.integers(1, 7)))),
                          train=True, rng=rng)
        worst["dropout_rate0"] = max(worst.get("dropout_rate0", 0), err)

    for seed in seeds():
        rng = np.random.default_rng(seed)
        n, classes = int(rng.integers(2, 7)), int(rng.integers(2, 6))
        logits = rng.standard_normal((n, classes))
        target = rng.integers(0, classes, size=n)
        _, grad = loss_sparse_ce(logits, target)
        num = numeric_grad(lambda: loss_sparse_ce(logits, target)[0], logits)
        worst["softmax_sparse_ce"] = max(worst.get("softmax_sparse_ce", 0),
                                         relative_error(grad, num))

    for seed in seeds():
        rng = np.random.default_rng(seed)
        n, w = int(rng.integers(2, 7)), int(rng.integers(1, 4))
        pred = rng.uniform(0.05, 0.95, size=(n, w))
        target = (rng.random((n, w)) > 0.5).astype(np.float64)
        _, grad = loss_bce(pred, target)
        num = numeric_grad(lambda: loss_bce(pred, target)[0], pred)
        worst["bce"] = max(worst.get("bce", 0), relative_error(grad, num))

    for seed in seeds():
        rng = np.random.default_rng(seed)
        shape = (int(rng.integers(1, 5)), int(rng.integers(1, 6)))
        pred = rng.standard_normal(shape)
        target = rng.standard_normal(shape)
        _, grad = loss_mse(pred, target)
        num = numeric_grad(lambda: loss_mse(pred, target)[0], pred)
        worst["mse"] = max(worst.get("mse", 0), relative_error(grad, num))

    elapsed = time.time() - t0
    ok = all(err < GRAD_TOL for err in worst.values()) and elapsed < 120.0
    detail = " ".join(f"{k}={v:.2e}" for k, v in worst.items())
    record("gradient suite (8 ops x 20 configs, rel err < 1e-4, <2 min)", ok,
           f"elapsed={elapsed:.1f}s {detail}")


# ---------------------------------------------------------------------------
# 3. oracle equivalence
# ---------------------------------------------------------------------------

def _knn_full_sort_oracle(refs, labels, queries, k, n_classes):
    out = np.empty(queries.shape[0], dtype=np.int64)
    refs64 = refs.astype(np.float64)
    for qi in range(queries.shape[0]):
        d = ((refs64 - queries[qi].astype(np.float64)) ** 2).sum(axis=1)
        order = np.lexsort((np.arange(d.shape[0]), d))  # full sort, ties by index
        votes = np.bincount(labels[order[:k]], minlength=n_classes)
        out[qi] = votes.argmax()
    return out


def _conv_nested_loop_oracle(x, w, b):
    n, length, c_in = x.shape
    k, _, c_out = w.shape
    out = np.zeros((n, length - k + 1, c_out))
    for i in range(n):
        for pos in range(length - k + 1):
            for f in range(c_out):
                acc = b[f]
                for j in range(k):
                    for c in range(c_in):
                        acc += x[i, pos + j, c] * w[j, c, f]
                out[i, pos, f] = acc
    return out


def test_c03_oracle_equivalence():
    rng = np.random.default_rng(303)
    # KNN: 1,000 random queries x 5,000 references, exact match
    refs = rng.standard_normal((5000, 12)).astype(np.float32)
    labels = rng.integers(0, 5, size=5000)
    queries = rng.standard_normal((1000, 12)).astype(np.float32)
    model = KnnClassifier(k=5, max_reference_rows=None).fit(
        FeatureMatrix(values=refs, labels=labels))
    got = model.predict(queries)
    want = _knn_full_sort_oracle(refs, labels, queries, k=5, n_classes=5)
    knn_ok = bool((got == want).all())

    # conv1d: 200 random cases within 1e-6
    conv_worst = 0.0
    for _ in range(200):
        n, length = int(rng.integers(1, 4)), int(rng.integers(2, 9))
        c_in, c_out = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        k = int(rng.integers(1, length + 1))
        layer = Conv1D(c_in, c_out, k, rng, dtype=np.float64)
        x = rng.standard_normal((n, length, c_in))
        diff = np.abs(layer.forward(x)
                      - _conv_nested_loop_oracle(x, layer.params[0], layer.params[1]))
        conv_worst = max(conv_worst, float(diff.max()))
    conv_ok = conv_worst < 1e-6

    # ensemble routing vs an independent reimplementation on stubs
    class Stub:
        def __init__(self, preds):
            self.preds = np.asarray(preds)

        def predict(self, values):
            return self.preds[values[:, 0].astype(int)]

    n = 500
    p1, p2, p3 = (rng.integers(0, 5, size=n) for _ in range(3))
    queries_stub = np.zeros((n, 2), dtype=np.float32)
    queries_stub[:, 0] = np.arange(n)
    ens = EnsembleModel(Stub(p1), Stub(p2), Stub(p3), conflict_count=0)
    got_route = ensemble_predict(ens, queries_stub)
    want_route = np.where(p1 == p2, p1, p3)  # independent routing rule
    route_ok = bool((got_route == want_route).all())

    record("oracle equivalence (KNN full-sort, conv nested-loop, routing)",
           knn_ok and conv_ok and route_ok,
           f"knn_exact={knn_ok} conv_max_diff={conv_worst:.2e} routing={route_ok}")


# ---------------------------------------------------------------------------
# 4. ensemble headline at desk scale (via the CLI, bundles included)
# ---------------------------------------------------------------------------

def test_c04_ensemble_headline_desk_scale(desk_data, mirror_corpus, tmp_path):
    t0 = time.time()
    real = real_kdd10_path()
    if real is not None:
        data_arg, extra = str(real), ["--desk-scale"]
    else:
        data_arg, extra = str(mirror_corpus), []  # mirror is already desk-sized
    out = tmp_path / "ens"
    rc = main(["train", "--data", data_arg, "--model", "ensemble", "--seed", "0",
               "--out", str(out), "--lenient-categories", *extra])
    assert rc == 0
    rc = main(["evaluate", "--bundle", str(out), "--data", data_arg,
               "--out", str(tmp_path / "eval")])
    assert rc == 0
    report = json.loads((tmp_path / "eval" / "report.json").read_text())
    accuracy = report["metrics"]["binary"]["accuracy"]
    elapsed = time.time() - t0
    inter = report["metadata"]["intermediate_accuracy"]
    ok = accuracy >= 0.955 and elapsed < 1800
    record("ensemble headline (binary accuracy >= 95.5% at desk scale, <30 min)",
           ok,
           f"source={desk_data['source']} accuracy={accuracy:.4f} "
           f"knn={inter['knn']:.4f} cnnlstm={inter['cnnlstm']:.4f} "
           f"elapsed={elapsed:.0f}s")


# ---------------------------------------------------------------------------
# 5. autoencoder at desk scale, default threshold percentile
# ---------------------------------------------------------------------------

def test_c05_autoencoder_desk_scale(desk_data, desk_onehot):
    train, test = desk_onehot
    model = AutoencoderDetector(AeConfig(seed=0)).fit(train)  # percentile 95 default
    verdicts = model.classify(test.values).astype(np.int64)
    accuracy = float((verdicts == test.binary_labels()).mean())
    record("autoencoder (binary accuracy >= 94% at desk scale, p95 threshold)",
           accuracy >= 0.94,
           f"source={desk_data['source']} accuracy={accuracy:.4f} "
           f"threshold={model.threshold:.5f}")


# ---------------------------------------------------------------------------
# 6. GAN property-based criterion
# ---------------------------------------------------------------------------

def test_c06_gan_properties(desk_data, desk_label_l2):
    train, test = desk_label_l2
    binary = test.binary_labels()
    x_train_normal = train.values[train.labels == 0]
    best = {"accuracy": -1.0, "direction": False, "seed": None}
    finite_all = True
    for seed in (0, 1, 2):
        model = GanDetector(GanConfig(seed=seed)).fit(train)
        finite = len(model.epoch_log) == 10 and all(
            np.isfinite(e["d_loss"]) and np.isfinite(e["g_loss"])
            for e in model.epoch_log)
        finite_all = finite_all and finite
        scores = model.scores(test.values)
        direction = scores[binary == 1].mean() > scores[binary == 0].mean()
        train_scores = model.scores(x_train_normal)
        acc = max(
            float((((scores > nearest_rank_percentile(train_scores, p))
                    .astype(np.int64)) == binary).mean())
            for p in range(1, 100))
        if acc > best["accuracy"]:
            best = {"accuracy": acc, "direction": direction, "seed": seed}
    ok = finite_all and best["direction"] and best["accuracy"] >= 0.80
    record("GAN (10 finite epochs; attack scores above normal; >=80% best-of-3)",
           ok,
           f"source={desk_data['source']} best_seed={best['seed']} "
           f"accuracy={best['accuracy']:.4f} direction={best['direction']}")


# ---------------------------------------------------------------------------
# 7. metric identities on 1,000 random confusion matrices
# ---------------------------------------------------------------------------

def test_c07_metric_identities():
    rng = np.random.default_rng(707)
    worst_gap = 0.0
    for _ in range(1000):
        size = int(rng.integers(2, 7))
        cm = rng.integers(0, 500, size=(size, size)).astype(np.int64)
        if cm.sum() == 0:
            cm[0, 0] = 1
        mw = metrics(cm, WEIGHTED)
        worst_gap = max(worst_gap, abs(mw.recall - mw.accuracy))
        assert binary_collapse(cm).sum() == cm.sum()
        for ms in (metrics(cm, BINARY), metrics(cm, MACRO)):
            for pc in ms.per_class:
                p, r, f = pc["precision"], pc["recall"], pc["f1"]
                if p > 0 and r > 0:
                    assert min(p, r) - 1e-12 <= f <= max(p, r) + 1e-12
                else:
                    assert f == 0.0
    record("metric identities (1,000 matrices, exact to 1e-12)",
           worst_gap < 1e-12, f"max |weighted recall - accuracy| = {worst_gap:.2e}")


# ---------------------------------------------------------------------------
# 8. end-to-end determinism via the CLI
# ---------------------------------------------------------------------------

def test_c08_determinism(quick_corpus, tmp_path):
    cfg = tmp_path / "train.cfg"
    cfg.write_text("cnnlstm.epochs = 3\ngan.epochs = 1\nforest.n_trees = 5\n")
    artifacts = []
    for name in ("one", "two"):
        out = tmp_path / name
        rc = main(["train", "--data", str(quick_corpus), "--model", "ensemble",
                   "--seed", "11", "--config", str(cfg), "--out", str(out),
                   "--lenient-categories"])
        assert rc == 0
        rc = main(["evaluate", "--bundle", str(out), "--data", str(quick_corpus),
                   "--out", str(out / "eval")])
        assert rc == 0
        manifest = json.loads((out / "manifest.json").read_text())
        manifest.pop("created_at")
        artifacts.append({
            "tensors": (out / "tensors.bin").read_bytes(),
            "manifest": manifest,
            "report": (out / "eval" / "report.json").read_bytes(),
            "log": (out / "training_log.json").read_bytes(),
        })
    same_tensors = artifacts[0]["tensors"] == artifacts[1]["tensors"]
    same_manifest = artifacts[0]["manifest"] == artifacts[1]["manifest"]
    same_report = artifacts[0]["report"] == artifacts[1]["report"]
    same_log = artifacts[0]["log"] == artifacts[1]["log"]
    record("determinism (byte-identical bundles and reports, same seed/config)",
           same_tensors and same_manifest and same_report and same_log,
           f"tensors={same_tensors} manifest={same_manifest} "
           f"report={same_report} log={same_log}")


# ---------------------------------------------------------------------------
# 9. threshold monotonicity for both anomaly scorers
# ---------------------------------------------------------------------------

def test_c09_threshold_monotonicity(desk_onehot, desk_label_l2):
    ae_train, ae_test = desk_onehot
    gan_train, gan_test = desk_label_l2
    ae = AutoencoderDetector(AeConfig(seed=3, epochs=5)).fit(ae_train)
    gan = GanDetector(GanConfig(seed=3, epochs=2, encoder_epochs=2)).fit(gan_train)
    ok = True
    details = []
    for name, scores in (("ae", ae.scores(ae_test.values)),
                         ("gan", gan.scores(gan_test.values))):
        grid = np.linspace(scores.min() - 1e-9, scores.max() + 1e-9, 50)
        counts = anomaly_counts(scores, grid)
        monotone = bool((np.diff(counts) <= 0).all())
        ok = ok and monotone
        details.append(f"{name}: {counts[0]}->{counts[-1]} monotone={monotone}")
    record("threshold monotonicity (50-point sweep, non-increasing verdicts)",
           ok, "; ".join(details))
