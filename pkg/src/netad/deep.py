"""Deep detectors: autoencoder, GAN, and the CNN+LSTM sequence classifier.

The two anomaly scorers share one convention: HIGHER score means MORE
anomalous, and classify(x) = anomalous iff score(x) > threshold. The GAN
score combines encoder reconstruction error with the discriminator term
-log D(x); thresholds come from a nearest-rank percentile of the scores
the trained model assigns to its own (normal-only) training rows.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DivergenceDetected, EmptyTrainingSet
from .nn import (
    Conv1D, Dense, Dropout, Lstm, MaxPool1D, Relu, Sigmoid, Tanh,
    loss_bce, loss_mse, loss_sparse_ce, softmax,
    Network, Sgd,
)
from .preprocess import FeatureMatrix

_D_CLAMP = 1e-7  # discriminator output clamp before the log


def nearest_rank_percentile(sample: np.ndarray, p: float) -> float:
    """Value at rank ceil(p/100 * n) of the sorted sample, 1-based."""
    if not (0.0 < p < 100.0):
        raise ValueError(f"percentile must be in (0,100), got {p}")
    s = np.sort(np.asarray(sample))
    if s.size == 0:
        raise ValueError("cannot take a percentile of an empty sample")
    rank = int(np.ceil(p / 100.0 * s.size))
    return float(s[max(rank, 1) - 1])


def anomaly_counts(scores: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    """Number of rows classified anomalous (score > theta) per threshold."""
    return np.array([(scores > t).sum() for t in thresholds], dtype=np.int64)


def _normal_rows(train: FeatureMatrix, what: str) -> np.ndarray:
    values = train.values[train.labels == 0]
    if values.shape[0] == 0:
        raise EmptyTrainingSet(f"{what} training needs at least one normal row")
    return np.ascontiguousarray(values, dtype=np.float32)


def _epoch_batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def _guard_finite(loss: float, what: str) -> float:
    if not np.isfinite(loss):
        raise DivergenceDetected(f"{what} loss became non-finite ({loss})")
    return loss


# ---------------------------------------------------------------------------
# Autoencoder
# ---------------------------------------------------------------------------

@dataclass
class AeConfig:
    hidden: tuple[int, int, int] = (64, 32, 64)  # tanh / relu / tanh
    # plain SGD at 1e-3 cannot fit the reconstruction in 20 epochs at desk
    # scale (scores come out inverted); 0.05 trains clean and stays stable
    lr: float = 0.05
    epochs: int = 20
    batch_size: int = 256
    threshold_percentile: float = 95.0
    seed: int = 0


class AutoencoderDetector:
    """Dense autoencoder trained on normal rows; scores by reconstruction MSE."""

    def __init__(self, config: AeConfig | None = None, **overrides):
        cfg = config or AeConfig()
        if overrides:
            cfg = replace(cfg, **overrides)
        self.config = cfg
        self.network: Network | None = None
        self.threshold: float = 0.0
        self.input_dim = 0
        self.epoch_log: list[dict] = []

    def _build(self, d: int, rng: np.random.Generator) -> Network:
        h1, h2, h3 = self.config.hidden
        return Network([
            Dense(d, h1, rng), Tanh(),
            Dense(h1, h2, rng), Relu(),
            Dense(h2, h3, rng), Tanh(),
            Dense(h3, d, rng),  # linear reconstruction head
        ])

    def fit(self, train: FeatureMatrix) -> "AutoencoderDetector":
        x = _normal_rows(train, "autoencoder")
        cfg = self.config
        rng = np.random.default_rng(cfg.seed)
        self.input_dim = x.shape[1]
        net = self._build(x.shape[1], rng)
        opt = Sgd(cfg.lr)
        self.epoch_log = []
        for epoch in range(cfg.epochs):
            total, seen = 0.0, 0
            for batch in _epoch_batches(x.shape[0], cfg.batch_size, rng):
                xb = x[batch]
                recon = net.forward(xb, train=True)
                loss, grad = loss_mse(recon, xb)
                _guard_finite(loss, "autoencoder")
                opt.step(net, net.backward(grad))
                total += loss * xb.shape[0]
                seen += xb.shape[0]
            self.epoch_log.append({"epoch": epoch, "train_mse": total / seen})
        self.network = net
        self.threshold = nearest_rank_percentile(
            self.scores(x), cfg.threshold_percentile)
        return self

    def scores(self, queries) -> np.ndarray:
        """Per-row mean squared reconstruction error (non-negative)."""
        if self.network is None:
            raise EmptyTrainingSet("autoencoder scores before fit")
        x = queries.values if isinstance(queries, FeatureMatrix) else np.asarray(queries)
        x = x.astype(np.float32)
        recon = self.network.forward(x, train=False)
        return ((recon - x) ** 2).mean(axis=1).astype(np.float64)

    def classify(self, queries) -> np.ndarray:
        return self.scores(queries) > self.threshold


# ---------------------------------------------------------------------------
# GAN
# ---------------------------------------------------------------------------

@dataclass
class GanConfig:
    latent_dim: int = 114
    gen_layers: int = 6
    gen_width: int = 128
    disc_layers: int = 6
    disc_width: int = 128
    dropout: float = 0.2
    lr: float = 1e-5          # both G and D, per the training recipe
    epochs: int = 10
    batch_size: int = 512
    use_encoder: bool = True
    encoder_width: int = 128
    encoder_epochs: int = 5
    encoder_lr: float = 0.05  # E must actually converge for the reconstruction term to carry signal
    encoder_batch_size: int = 256
    lam: float = 0.9          # weight of the reconstruction term in the score
    threshold_percentile: float = 95.0
    seed: int = 0


class GanDetector:
    """GAN on normal rows; anomaly score mixes reconstruction and -log D(x)."""

    def __init__(self, config: GanConfig | None = None, **overrides):
        cfg = config or GanConfig()
        if overrides:
            cfg = replace(cfg, **overrides)
        if not (0.0 <= cfg.lam <= 1.0):
            raise ValueError(f"lambda must be in [0,1], got {cfg.lam}")
        self.config = cfg
        self.generator: Network | None = None
        self.discriminator: Network | None = None
        self.encoder: Network | None = None
        self.threshold: float = 0.0
        self.input_dim = 0
        self.epoch_log: list[dict] = []

    # -- architecture -------------------------------------------------------

    def _build_generator(self, d: int, rng) -> Network:
        cfg = self.config
        layers: list = []
        width_in = cfg.latent_dim
        for _ in range(cfg.gen_layers):
            layers += [Dense(width_in, cfg.gen_width, rng), Tanh()]
            width_in = cfg.gen_width
        layers.append(Dense(width_in, d, rng))  # linear output
        return Network(layers)

    def _build_discriminator(self, d: int, rng, drop_rng) -> Network:
        cfg = self.config
        layers: list = []
        width_in = d
        for _ in range(cfg.disc_layers):
            layers += [Dense(width_in, cfg.disc_width, rng), Relu(),
                       Dropout(cfg.dropout, rng=drop_rng)]
            width_in = cfg.disc_width
        layers += [Dense(width_in, 1, rng), Sigmoid()]
        return Network(layers)

    def _build_encoder(self, d: int, rng) -> Network:
        cfg = self.config
        return Network([
            Dense(d, cfg.encoder_width, rng), Relu(),
            Dense(cfg.encoder_width, cfg.encoder_width, rng), Relu(),
            Dense(cfg.encoder_width, cfg.latent_dim, rng),
        ])

    # -- training ------------------------------------------------------------

    def fit(self, train: FeatureMatrix) -> "GanDetector":
        x = _normal_rows(train, "GAN")
        cfg = self.config
        rng = np.random.default_rng(cfg.seed)
        drop_rng = np.random.default_rng([cfg.seed, 0xD])
        self.input_dim = x.shape[1]
        gen = self._build_generator(x.shape[1], rng)
        disc = self._build_discriminator(x.shape[1], rng, drop_rng)
        opt_g, opt_d = Sgd(cfg.lr), Sgd(cfg.lr)
        self.epoch_log = []

        for epoch in range(cfg.epochs):
            d_loss_sum = g_loss_sum = 0.0
            d_correct = d_total = 0
            n_batches = 0
            for batch in _epoch_batches(x.shape[0], cfg.batch_size, rng):
                real = x[batch]
                b = real.shape[0]
                # D step: real=1 vs generated=0, one update
                z = rng.standard_normal((b, cfg.latent_dim)).astype(np.float32)
                fake = gen.forward(z, train=False)
                both = np.vstack([real, fake])
                target = np.zeros((2 * b, 1), dtype=np.float32)
                target[:b] = 1.0
                d_out = disc.forward(both, train=True)
                d_loss, d_grad = loss_bce(d_out, target)
                _guard_finite(d_loss, "discriminator")
                opt_d.step(disc, disc.backward(d_grad))
                d_correct += int(((d_out > 0.5) == (target > 0.5)).sum())
                d_total += 2 * b
                # G step: push D(G(z)) toward 1, one update
                z = rng.standard_normal((b, cfg.latent_dim)).astype(np.float32)
                fake = gen.forward(z, train=True)
                g_out = disc.forward(fake, train=True)
                g_loss, g_grad = loss_bce(g_out, np.ones((b, 1), dtype=np.float32))
                _guard_finite(g_loss, "generator")
                disc.backward(g_grad)  # D params untouched, input grad kept
                opt_g.step(gen, gen.backward(disc.input_grad))
                d_loss_sum += d_loss
                g_loss_sum += g_loss
                n_batches += 1
            self.epoch_log.append({
                "epoch": epoch,
                "d_loss": d_loss_sum / n_batches,
                "g_loss": g_loss_sum / n_batches,
                "d_accuracy": d_correct / d_total,
            })
        self.generator, self.discriminator = gen, disc

        if cfg.use_encoder:
            self._fit_encoder(x, rng)
        self.threshold = nearest_rank_percentile(
            self.scores(x), cfg.threshold_percentile)
        return self

    def _fit_encoder(self, x: np.ndarray, rng) -> None:
        """Train E to minimize ||G(E(x)) - x||^2 with G frozen."""
        cfg = self.config
        assert self.generator is not None
        enc = self._build_encoder(x.shape[1], rng)
        opt = Sgd(cfg.encoder_lr)
        for _ in range(cfg.encoder_epochs):
            for batch in _epoch_batches(x.shape[0], cfg.encoder_batch_size, rng):
                xb = x[batch]
                latent = enc.forward(xb, train=True)
                recon = self.generator.forward(latent, train=False)
                loss, grad = loss_mse(recon, xb)
                _guard_finite(loss, "GAN encoder")
                self.generator.backward(grad)  # G params untouched
                opt.step(enc, enc.backward(self.generator.input_grad))
        self.encoder = enc

    # -- scoring -------------------------------------------------------------

    def discriminator_score(self, values: np.ndarray) -> np.ndarray:
        """-log D(x), with D(x) clamped to [1e-7, 1-1e-7]."""
        assert self.discriminator is not None
        d = self.discriminator.forward(values, train=False)[:, 0]
        return -np.log(np.clip(d.astype(np.float64), _D_CLAMP, 1.0 - _D_CLAMP))

    def reconstruction_score(self, values: np.ndarray) -> np.ndarray:
        assert self.generator is not None and self.encoder is not None
        recon = self.generator.forward(self.encoder.forward(values, train=False),
                                       train=False)
        return ((recon - values) ** 2).sum(axis=1).astype(np.float64)

    def scores(self, queries) -> np.ndarray:
        if self.discriminator is None:
            raise EmptyTrainingSet("GAN scores before fit")
        x = queries.values if isinstance(queries, FeatureMatrix) else np.asarray(queries)
        x = x.astype(np.float32)
        lam = self.config.lam
        disc_term = self.discriminator_score(x)
        if self.encoder is None:
            return disc_term
        if lam == 0.0:
            return disc_term
        recon_term = self.reconstruction_score(x)
        if lam == 1.0:
            return recon_term
        return lam * recon_term + (1.0 - lam) * disc_term

    def classify(self, queries) -> np.ndarray:
        return self.scores(queries) > self.threshold


# ---------------------------------------------------------------------------
# CNN + LSTM sequence classifier (ensemble layer 2)
# ---------------------------------------------------------------------------

@dataclass
class CnnLstmConfig:
    filters: int = 64
    kernel: int = 3
    pool: int = 2
    lstm_units: int = 64
    n_classes: int = 5
    lr: float = 0.1            # 0.01 cannot escape the majority-class prior in 20 epochs
    grad_clip: float = 0.0     # optional global-norm clip, disabled by default
    epochs: int = 20
    batch_size: int = 128
    val_fraction: float = 0.1  # stratified, held out of the train split
    seed: int = 0


class CnnLstmClassifier:
    """1-D conv -> ReLU -> max-pool -> LSTM -> softmax head over class codes.

    Feature rows are treated as length-d sequences with one channel. After
    each epoch the validation accuracy is measured and the best-scoring
    parameters are kept (first epoch wins ties).
    """

    def __init__(self, config: CnnLstmConfig | None = None, **overrides):
        cfg = config or CnnLstmConfig()
        if overrides:
            cfg = replace(cfg, **overrides)
        self.config = cfg
        self.network: Network | None = None
        self.best_val_accuracy = 0.0
        self.input_dim = 0
        self.epoch_log: list[dict] = []

    def _build(self, d: int, rng) -> Network:
        cfg = self.config
        conv_out = d - cfg.kernel + 1
        pooled = conv_out // cfg.pool
        if pooled < 1:
            raise ValueError(f"input length {d} too short for kernel/pool config")
        return Network([
            Conv1D(1, cfg.filters, cfg.kernel, rng), Relu(),
            MaxPool1D(cfg.pool),
            Lstm(cfg.filters, cfg.lstm_units, rng),
            Dense(cfg.lstm_units, cfg.n_classes, rng),  # logits
        ])

    def fit(self, train: FeatureMatrix) -> "CnnLstmClassifier":
        x, y = train.values, train.labels.astype(np.int64)
        if x.shape[0] == 0:
            raise EmptyTrainingSet("CNN+LSTM needs at least one row")
        cfg = self.config
        rng = np.random.default_rng(cfg.seed)
        self.input_dim = x.shape[1]
        net = self._build(x.shape[1], rng)
        opt = Sgd(cfg.lr)

        train_idx, val_idx = _stratified_val_split(y, cfg.val_fraction, rng)
        x_fit, y_fit = x[train_idx], y[train_idx]
        x_val, y_val = x[val_idx], y[val_idx]

        best_params: list[np.ndarray] | None = None
        best_acc = -1.0
        self.epoch_log = []
        for epoch in range(cfg.epochs):
            total, seen = 0.0, 0
            for batch in _epoch_batches(x_fit.shape[0], cfg.batch_size, rng):
                xb = x_fit[batch][:, :, None]  # (b, d, 1) sequences
                logits = net.forward(xb, train=True)
                loss, grad = loss_sparse_ce(logits, y_fit[batch])
                _guard_finite(loss, "CNN+LSTM")
                tape = net.backward(grad)
                _clip_tape(tape, cfg.grad_clip)
                opt.step(net, tape)
                total += loss * xb.shape[0]
                seen += xb.shape[0]
            self.network = net
            if x_val.shape[0] > 0:
                val_acc = float((self.predict(x_val) == y_val).mean())
            else:
                val_acc = float((self.predict(x_fit) == y_fit).mean())
            self.epoch_log.append(
                {"epoch": epoch, "train_loss": total / seen, "val_accuracy": val_acc})
            if val_acc > best_acc:
                best_acc = val_acc
                best_params = [p.copy() for p in net.params()]
        assert best_params is not None
        for p, saved in zip(net.params(), best_params):
            p[...] = saved
        self.network = net
        self.best_val_accuracy = best_acc
        return self

    def predict_proba(self, queries, chunk: int = 4096) -> np.ndarray:
        if self.network is None:
            raise EmptyTrainingSet("CNN+LSTM predict before fit")
        x = queries.values if isinstance(queries, FeatureMatrix) else np.asarray(queries)
        x = x.astype(np.float32)
        out = np.empty((x.shape[0], self.config.n_classes), dtype=np.float64)
        for start in range(0, x.shape[0], chunk):
            block = x[start:start + chunk][:, :, None]
            out[start:start + chunk] = softmax(
                self.network.forward(block, train=False).astype(np.float64))
        return out

    def predict(self, queries) -> np.ndarray:
        return self.predict_proba(queries).argmax(axis=1).astype(np.int64)


def _clip_tape(tape: list[np.ndarray], max_norm: float) -> None:
    if max_norm <= 0:
        return
    total = float(np.sqrt(sum(float((g.astype(np.float64) ** 2).sum()) for g in tape)))
    if total > max_norm:
        scale = np.float32(max_norm / total)
        for i, g in enumerate(tape):
            tape[i] = g * scale


def _stratified_val_split(y: np.ndarray, fraction: float,
                          rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    if fraction <= 0.0:
        return np.arange(y.shape[0]), np.empty(0, dtype=np.int64)
    fit_parts, val_parts = [], []
    for c in np.unique(y):
        pos = np.flatnonzero(y == c)
        perm = rng.permutation(pos.size)
        n_val = int(np.floor(fraction * pos.size))
        val_parts.append(pos[perm[:n_val]])
        fit_parts.append(pos[perm[n_val:]])
    return np.sort(np.concatenate(fit_parts)), np.sort(np.concatenate(val_parts))
