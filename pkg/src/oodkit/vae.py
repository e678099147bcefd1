"""Variational autoencoder over min-max-scaled embeddings.

Encoder: ReLU MLP feeding affine mean/log-variance heads. Decoder mirrors the
encoder and ends in a sigmoid. Loss = per-dimension binary cross-entropy plus
the closed-form KL divergence of the diagonal Gaussian posterior against a
standard-normal prior. Gradients are analytic (hand-derived backprop) and
training uses Adam. Out-of-domain rows are flagged when their deterministic
reconstruction loss (z = mu) exceeds a calibrated threshold.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .dataset import EmbeddingDataset, ScalerStats, scale

# Sigmoid outputs are clamped away from {0,1} so the BCE log terms stay finite.
SIGMOID_CLAMP = 1e-7

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class VaeError(Exception):
    pass


@dataclass(frozen=True)
class VaeConfig:
    encoder_hidden: tuple[int, ...] = (512, 256, 128, 64)
    latent_dim: int = 32
    epochs: int = 100
    batch_size: int = 64
    learning_rate: float = 1e-3
    seed: int = 0
    early_stop_patience: int = 10
    # Linear KL warm-up over this many epochs counters posterior collapse on
    # weakly informative targets; 0 trains on the full loss from the start.
    # Only the training gradient is annealed; reported losses, dev selection
    # and scoring always use the full reconstruction + KL objective.
    kl_warmup_epochs: int = 0

    def __post_init__(self):
        object.__setattr__(self, "encoder_hidden", tuple(int(w) for w in self.encoder_hidden))
        if any(w < 1 for w in self.encoder_hidden):
            raise VaeError("all encoder widths must be >= 1")
        if self.latent_dim < 1:
            raise VaeError("latent_dim must be >= 1")
        if self.learning_rate <= 0:
            raise VaeError("learning_rate must be > 0")
        if self.epochs < 0 or self.batch_size < 1 or self.early_stop_patience < 0:
            raise VaeError("invalid training schedule")
        if self.kl_warmup_epochs < 0:
            raise VaeError("kl_warmup_epochs must be >= 0")


@dataclass(frozen=True)
class VaeModel:
    config: VaeConfig
    dim: int
    enc_w: tuple[np.ndarray, ...]
    enc_b: tuple[np.ndarray, ...]
    mu_w: np.ndarray
    mu_b: np.ndarray
    logvar_w: np.ndarray
    logvar_b: np.ndarray
    dec_w: tuple[np.ndarray, ...]
    dec_b: tuple[np.ndarray, ...]
    scaler: ScalerStats
    threshold: float | None = None

    def parameters(self) -> list[np.ndarray]:
        """All parameter tensors in declaration order (persistence order)."""
        ps: list[np.ndarray] = []
        for w, b in zip(self.enc_w, self.enc_b):
            ps += [w, b]
        ps += [self.mu_w, self.mu_b, self.logvar_w, self.logvar_b]
        for w, b in zip(self.dec_w, self.dec_b):
            ps += [w, b]
        return ps

    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


@dataclass(frozen=True)
class LossBreakdown:
    reconstruction: float
    kl: float
    total: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "total", self.reconstruction + self.kl)


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_total: float
    train_recon: float
    train_kl: float
    dev_total: float


def _affine_shapes(cfg: VaeConfig, dim: int) -> list[tuple[int, int]]:
    """(fan_in, fan_out) of every affine map in declaration order."""
    shapes = []
    prev = dim
    for w in cfg.encoder_hidden:
        shapes.append((prev, w))
        prev = w
    shapes.append((prev, cfg.latent_dim))  # mu head
    shapes.append((prev, cfg.latent_dim))  # logvar head
    prev = cfg.latent_dim
    for w in reversed(cfg.encoder_hidden):
        shapes.append((prev, w))
        prev = w
    shapes.append((prev, dim))  # sigmoid output
    return shapes


def init_model(cfg: VaeConfig, dim: int, scaler: ScalerStats) -> VaeModel:
    """Glorot-uniform weights, zero biases, deterministic given cfg.seed."""
    if dim < 1:
        raise VaeError("dim must be >= 1")
    if scaler.dim != dim:
        raise VaeError(f"scaler dim {scaler.dim} != data dim {dim}")
    rng = np.random.default_rng(cfg.seed)
    weights, biases = [], []
    for fan_in, fan_out in _affine_shapes(cfg, dim):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    n_enc = len(cfg.encoder_hidden)
    return VaeModel(
        config=cfg,
        dim=dim,
        enc_w=tuple(weights[:n_enc]),
        enc_b=tuple(biases[:n_enc]),
        mu_w=weights[n_enc],
        mu_b=biases[n_enc],
        logvar_w=weights[n_enc + 1],
        logvar_b=biases[n_enc + 1],
        dec_w=tuple(weights[n_enc + 2 :]),
        dec_b=tuple(biases[n_enc + 2 :]),
        scaler=scaler,
        threshold=None,
    )


def _model_with_parameters(model: VaeModel, params: list[np.ndarray]) -> VaeModel:
    n_enc = len(model.enc_w)
    n_dec = len(model.dec_w)
    assert len(params) == 2 * (n_enc + n_dec) + 4
    it = iter(params)
    enc = [(next(it), next(it)) for _ in range(n_enc)]
    mu_w, mu_b, lv_w, lv_b = next(it), next(it), next(it), next(it)
    dec = [(next(it), next(it)) for _ in range(n_dec)]
    return replace(
        model,
        enc_w=tuple(w for w, _ in enc),
        enc_b=tuple(b for _, b in enc),
        mu_w=mu_w,
        mu_b=mu_b,
        logvar_w=lv_w,
        logvar_b=lv_b,
        dec_w=tuple(w for w, _ in dec),
        dec_b=tuple(b for _, b in dec),
    )


def encode(model: VaeModel, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Forward pass to (mu, logvar). Accepts a single vector or a batch."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    h = np.atleast_2d(x)
    if h.shape[1] != model.dim:
        raise VaeError(f"input dim {h.shape[1]} != model dim {model.dim}")
    if not np.all(np.isfinite(h)):
        raise VaeError("non-finite input to encode")
    for w, b in zip(model.enc_w, model.enc_b):
        h = np.maximum(h @ w + b, 0.0)
    mu = h @ model.mu_w + model.mu_b
    logvar = h @ model.logvar_w + model.logvar_b
    if single:
        return mu[0], logvar[0]
    return mu, logvar


def reparameterize(mu: np.ndarray, logvar: np.ndarray, epsilon: np.ndarray) -> np.ndarray:
    """z = mu + exp(logvar / 2) * epsilon."""
    mu = np.asarray(mu, dtype=np.float64)
    logvar = np.asarray(logvar, dtype=np.float64)
    epsilon = np.asarray(epsilon, dtype=np.float64)
    if not (mu.shape == logvar.shape == epsilon.shape):
        raise VaeError("mu, logvar and epsilon must share a shape")
    return mu + np.exp(0.5 * logvar) * epsilon


def decode(model: VaeModel, z: np.ndarray) -> np.ndarray:
    """Forward pass from latent z to a reconstruction in (0,1)^d."""
    z = np.asarray(z, dtype=np.float64)
    single = z.ndim == 1
    g = np.atleast_2d(z)
    if g.shape[1] != model.config.latent_dim:
        raise VaeError(
            f"latent dim {g.shape[1]} != model latent dim {model.config.latent_dim}"
        )
    for w, b in zip(model.dec_w[:-1], model.dec_b[:-1]):
        g = np.maximum(g @ w + b, 0.0)
    out = g @ model.dec_w[-1] + model.dec_b[-1]
    xhat = np.clip(_sigmoid(out), SIGMOID_CLAMP, 1.0 - SIGMOID_CLAMP)
    if single:
        return xhat[0]
    return xhat


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _recon_kl(y: np.ndarray, xhat: np.ndarray, mu: np.ndarray, logvar: np.ndarray):
    """Per-row reconstruction BCE (sum over dims) and KL (sum over latent).

    expm1 keeps exp(lv) - 1 - lv nonnegative for tiny lv, where the naive
    form loses to cancellation.
    """
    recon = -(y * np.log(xhat) + (1.0 - y) * np.log1p(-xhat)).sum(axis=-1)
    kl = 0.5 * (np.expm1(logvar) - logvar + mu**2).sum(axis=-1)
    return recon, kl


def loss(y: np.ndarray, xhat: np.ndarray, mu: np.ndarray, logvar: np.ndarray) -> LossBreakdown:
    """Single-example loss: BCE reconstruction term plus closed-form KL."""
    y = np.asarray(y, dtype=np.float64)
    xhat = np.asarray(xhat, dtype=np.float64)
    if np.any(y < 0) or np.any(y > 1):
        raise VaeError("targets must lie in [0,1]")
    if np.any(xhat <= 0) or np.any(xhat >= 1):
        raise VaeError("reconstruction components must lie strictly inside (0,1)")
    recon, kl = _recon_kl(y, xhat, np.asarray(mu, float), np.asarray(logvar, float))
    return LossBreakdown(float(recon), float(kl))


def _forward_cache(params: list[np.ndarray], n_enc: int, y: np.ndarray, eps: np.ndarray):
    """Forward pass keeping every intermediate needed by the backward pass."""
    enc = [(params[2 * i], params[2 * i + 1]) for i in range(n_enc)]
    mu_w, mu_b = params[2 * n_enc], params[2 * n_enc + 1]
    lv_w, lv_b = params[2 * n_enc + 2], params[2 * n_enc + 3]
    dec = [
        (params[2 * n_enc + 4 + 2 * i], params[2 * n_enc + 4 + 2 * i + 1])
        for i in range((len(params) - 2 * n_enc - 4) // 2)
    ]
    enc_acts = [y]
    enc_pre = []
    h = y
    for w, b in enc:
        a = h @ w + b
        enc_pre.append(a)
        h = np.maximum(a, 0.0)
        enc_acts.append(h)
    mu = h @ mu_w + mu_b
    lv = h @ lv_w + lv_b
    std = np.exp(0.5 * lv)
    z = mu + std * eps
    dec_acts = [z]
    dec_pre = []
    g = z
    for w, b in dec[:-1]:
        a = g @ w + b
        dec_pre.append(a)
        g = np.maximum(a, 0.0)
        dec_acts.append(g)
    out = g @ dec[-1][0] + dec[-1][1]
    s = _sigmoid(out)
    xhat = np.clip(s, SIGMOID_CLAMP, 1.0 - SIGMOID_CLAMP)
    recon, kl = _recon_kl(y, xhat, mu, lv)
    return {
        "enc": enc, "dec": dec, "mu_w": mu_w, "lv_w": lv_w,
        "enc_acts": enc_acts, "enc_pre": enc_pre,
        "dec_acts": dec_acts, "dec_pre": dec_pre,
        "mu": mu, "lv": lv, "std": std, "s": s, "xhat": xhat,
        "recon": recon, "kl": kl,
    }


def gradients(
    model: VaeModel, batch: np.ndarray, epsilon: np.ndarray
) -> tuple[list[np.ndarray], LossBreakdown]:
    """Analytic gradient of the mean-over-batch total loss.

    Includes the pathwise term through the reparameterization. Returns the
    gradients in parameter declaration order together with the batch loss.
    """
    return _gradients_weighted(model, batch, epsilon, kl_weight=1.0)


def _gradients_weighted(
    model: VaeModel, batch: np.ndarray, epsilon: np.ndarray, kl_weight: float
) -> tuple[list[np.ndarray], LossBreakdown]:
    y = np.asarray(batch, dtype=np.float64)
    if y.ndim != 2 or y.shape[0] == 0:
        raise VaeError("batch must be a non-empty 2-D array")
    eps = np.asarray(epsilon, dtype=np.float64)
    params = model.parameters()
    n_enc = len(model.enc_w)
    c = _forward_cache(params, n_enc, y, eps)
    n = y.shape[0]
    s, xhat, mu, lv, std = c["s"], c["xhat"], c["mu"], c["lv"], c["std"]

    # d(mean loss)/d(xhat), then through the clamp and the sigmoid
    dxhat = (-(y / xhat) + (1.0 - y) / (1.0 - xhat)) / n
    clamp_mask = (s > SIGMOID_CLAMP) & (s < 1.0 - SIGMOID_CLAMP)
    dout = dxhat * clamp_mask * s * (1.0 - s)

    dec = c["dec"]
    gw_last = c["dec_acts"][-1].T @ dout
    gb_last = dout.sum(axis=0)
    dg = dout @ dec[-1][0].T
    hidden_grads = []
    for i in range(len(dec) - 2, -1, -1):
        da = dg * (c["dec_pre"][i] > 0)
        hidden_grads.append((c["dec_acts"][i].T @ da, da.sum(axis=0)))
        dg = da @ dec[i][0].T
    dz = dg

    dmu = dz + kl_weight * mu / n
    dlv = dz * (0.5 * std * eps) + kl_weight * 0.5 * (np.exp(lv) - 1.0) / n

    h_last = c["enc_acts"][-1]
    g_mu_w = h_last.T @ dmu
    g_mu_b = dmu.sum(axis=0)
    g_lv_w = h_last.T @ dlv
    g_lv_b = dlv.sum(axis=0)

    dh = dmu @ c["mu_w"].T + dlv @ c["lv_w"].T
    enc = c["enc"]
    enc_grads = []
    for i in range(n_enc - 1, -1, -1):
        da = dh * (c["enc_pre"][i] > 0)
        enc_grads.append((c["enc_acts"][i].T @ da, da.sum(axis=0)))
        dh = da @ enc[i][0].T

    grads: list[np.ndarray] = []
    for gw, gb in reversed(enc_grads):
        grads += [gw, gb]
    grads += [g_mu_w, g_mu_b, g_lv_w, g_lv_b]
    for gw, gb in reversed(hidden_grads):
        grads += [gw, gb]
    grads += [gw_last, gb_last]
    bd = LossBreakdown(float(c["recon"].mean()), float(c["kl"].mean()))
    return grads, bd


def _scores_from_params(
    params: list[np.ndarray], n_enc: int, y: np.ndarray, chunk: int = 2048
) -> np.ndarray:
    """Deterministic per-row total loss at z = mu."""
    latent = params[2 * n_enc].shape[1]
    out = np.empty(y.shape[0])
    for start in range(0, y.shape[0], chunk):
        block = y[start : start + chunk]
        c = _forward_cache(params, n_enc, block, np.zeros((block.shape[0], latent)))
        out[start : start + chunk] = c["recon"] + c["kl"]
    return out


def batch_loss(model: VaeModel, batch: np.ndarray, epsilon: np.ndarray) -> LossBreakdown:
    """Mean-over-batch loss without gradients."""
    y = np.asarray(batch, dtype=np.float64)
    c = _forward_cache(model.parameters(), len(model.enc_w), y, np.asarray(epsilon, float))
    return LossBreakdown(float(c["recon"].mean()), float(c["kl"].mean()))


def train(
    model: VaeModel,
    train_scaled: EmbeddingDataset,
    dev_scaled: EmbeddingDataset,
    cfg: VaeConfig,
) -> tuple[VaeModel, list[EpochStats]]:
    """Adam over shuffled mini-batches; returns the lowest-dev-loss snapshot.

    Both datasets must already be scaled to [0,1]. Deterministic given
    cfg.seed: batch order and the epsilon stream come from one generator.
    Stops after early_stop_patience epochs without dev improvement
    (patience 0 disables early stopping).
    """
    if train_scaled.n == 0:
        raise VaeError("training set is empty")
    if cfg.epochs > 0 and dev_scaled.n == 0:
        raise VaeError("dev set is empty; snapshot selection needs dev rows")
    y_train = train_scaled.embeddings.astype(np.float64)
    y_dev = dev_scaled.embeddings.astype(np.float64)
    n = y_train.shape[0]
    n_enc = len(model.enc_w)
    latent = model.config.latent_dim

    rng = np.random.default_rng(cfg.seed)
    params = [p.copy() for p in model.parameters()]
    m_state = [np.zeros_like(p) for p in params]
    v_state = [np.zeros_like(p) for p in params]
    step = 0

    best_dev = np.inf
    best_params: list[np.ndarray] | None = None
    since_best = 0
    history: list[EpochStats] = []

    work = _model_with_parameters(model, params)
    for epoch in range(1, cfg.epochs + 1):
        kl_weight = (
            min(1.0, epoch / cfg.kl_warmup_epochs) if cfg.kl_warmup_epochs > 0 else 1.0
        )
        perm = rng.permutation(n)
        sum_recon = 0.0
        sum_kl = 0.0
        for bi, start in enumerate(range(0, n, cfg.batch_size)):
            idx = perm[start : start + cfg.batch_size]
            batch = y_train[idx]
            eps = rng.standard_normal((batch.shape[0], latent))
            grads, bd = _gradients_weighted(work, batch, eps, kl_weight)
            if not np.isfinite(bd.total):
                raise VaeError(f"non-finite loss at epoch {epoch}, batch {bi}")
            sum_recon += bd.reconstruction * batch.shape[0]
            sum_kl += bd.kl * batch.shape[0]
            step += 1
            lr_t = cfg.learning_rate
            for p, g, m, v in zip(params, grads, m_state, v_state):
                m *= ADAM_BETA1
                m += (1 - ADAM_BETA1) * g
                v *= ADAM_BETA2
                v += (1 - ADAM_BETA2) * g * g
                mhat = m / (1 - ADAM_BETA1**step)
                vhat = v / (1 - ADAM_BETA2**step)
                p -= lr_t * mhat / (np.sqrt(vhat) + ADAM_EPS)
        dev_scores = _scores_from_params(params, n_enc, y_dev)
        dev_total = float(dev_scores.mean())
        if not np.isfinite(dev_total):
            raise VaeError(f"non-finite dev loss at epoch {epoch}")
        history.append(
            EpochStats(epoch, (sum_recon + sum_kl) / n, sum_recon / n, sum_kl / n, dev_total)
        )
        if dev_total < best_dev:
            best_dev = dev_total
            best_params = [p.copy() for p in params]
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.early_stop_patience > 0:
                break

    if best_params is None:  # epochs == 0
        return model, history
    return _model_with_parameters(model, best_params), history


def reconstruction_scores(model: VaeModel, ds: EmbeddingDataset) -> np.ndarray:
    """Deterministic per-row total loss (z = mu). Applies the model's scaler."""
    scaled = scale(ds, model.scaler)
    y = scaled.embeddings.astype(np.float64)
    return _scores_from_params(model.parameters(), len(model.enc_w), y)


def calibrate_threshold(
    model: VaeModel, dev_in_domain: EmbeddingDataset, quantile: float = 0.95
) -> VaeModel:
    """Set the OOD threshold to an empirical quantile of dev scores."""
    if dev_in_domain.n == 0:
        raise VaeError("cannot calibrate on an empty dev set")
    if not 0.0 < quantile < 1.0:
        raise VaeError("quantile must lie in (0,1)")
    scores = reconstruction_scores(model, dev_in_domain)
    t = float(np.quantile(scores, quantile))
    return replace(model, threshold=t)


def detect_ood(model: VaeModel, ds: EmbeddingDataset) -> np.ndarray:
    """Boolean per row: True iff the reconstruction score strictly exceeds t."""
    if model.threshold is None:
        raise VaeError("threshold unset; run calibrate_threshold first")
    return reconstruction_scores(model, ds) > model.threshold


def save_model(model: VaeModel, directory: str | Path) -> None:
    """model.json (config, scaler, threshold, shapes) + weights.f32 (LE float32)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    params = model.parameters()
    meta = {
        "config": {
            "encoder_hidden": list(model.config.encoder_hidden),
            "latent_dim": model.config.latent_dim,
            "epochs": model.config.epochs,
            "batch_size": model.config.batch_size,
            "learning_rate": model.config.learning_rate,
            "seed": model.config.seed,
            "early_stop_patience": model.config.early_stop_patience,
            "kl_warmup_epochs": model.config.kl_warmup_epochs,
        },
        "dim": model.dim,
        "scaler": {
            "per_dim_min": [float(v) for v in model.scaler.per_dim_min],
            "per_dim_max": [float(v) for v in model.scaler.per_dim_max],
        },
        "threshold": model.threshold,
        "shapes": [list(p.shape) for p in params],
    }
    (directory / "model.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    flat = np.concatenate([p.astype("<f4").ravel() for p in params])
    (directory / "weights.f32").write_bytes(flat.tobytes())


def load_model(directory: str | Path) -> VaeModel:
    directory = Path(directory)
    meta = json.loads((directory / "model.json").read_text(encoding="utf-8"))
    cfg = VaeConfig(
        encoder_hidden=tuple(meta["config"]["encoder_hidden"]),
        latent_dim=meta["config"]["latent_dim"],
        epochs=meta["config"]["epochs"],
        batch_size=meta["config"]["batch_size"],
        learning_rate=meta["config"]["learning_rate"],
        seed=meta["config"]["seed"],
        early_stop_patience=meta["config"]["early_stop_patience"],
        kl_warmup_epochs=meta["config"].get("kl_warmup_epochs", 0),
    )
    scaler = ScalerStats(
        np.array(meta["scaler"]["per_dim_min"], dtype=np.float32),
        np.array(meta["scaler"]["per_dim_max"], dtype=np.float32),
    )
    skeleton = init_model(cfg, meta["dim"], scaler)
    raw = np.frombuffer((directory / "weights.f32").read_bytes(), dtype="<f4")
    params = []
    offset = 0
    for shape in meta["shapes"]:
        size = int(np.prod(shape))
        params.append(raw[offset : offset + size].astype(np.float64).reshape(shape))
        offset += size
    if offset != raw.size:
        raise VaeError("weights.f32 size does not match recorded shapes")
    model = _model_with_parameters(skeleton, params)
    return replace(model, threshold=meta["threshold"])


def write_history(path: str | Path, history: list[EpochStats]) -> None:
    lines = ["epoch,train_total,train_recon,train_kl,dev_total"]
    for h in history:
        lines.append(
            f"{h.epoch},{h.train_total:.9g},{h.train_recon:.9g},{h.train_kl:.9g},{h.dev_total:.9g}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
