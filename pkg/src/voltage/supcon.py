"""Supervised contrastive training of a small conv encoder and nearest-prototype
symbol classification.

Encoder: 32x32 -> conv5x5(8) tanh avgpool -> conv5x5(16) tanh avgpool ->
fc(64) tanh = embedding -> fc(32) -> L2 normalise = projection.
Forward and backward passes are plain numpy (float64).
"""
from __future__ import annotations

import io
import logging
import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage

from .augment import AugmentConfig, augment_symbol, sample_params
from .raster import as_binary, tight_crop

log = logging.getLogger(__name__)

SIZE = 32
K = 5
C1, C2 = 8, 16
EMBED_DIM = 64
PROJ_DIM = 32
PARAM_SHAPES = {
    "W1": (C1, 1, K, K), "b1": (C1,),
    "W2": (C2, C1, K, K), "b2": (C2,),
    "W3": (EMBED_DIM, C2 * 8 * 8), "b3": (EMBED_DIM,),
    "W4": (PROJ_DIM, EMBED_DIM), "b4": (PROJ_DIM,),
}
MAGIC = b"VLTGREC\x00"
FORMAT_VERSION = 1


def init_params(seed: int = 0) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)
    p = {}
    for name, shape in PARAM_SHAPES.items():
        if name.startswith("b"):
            p[name] = np.zeros(shape)
        else:
            fan_in = int(np.prod(shape[1:]))
            p[name] = rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=shape)
    return p


# --- input preparation -------------------------------------------------------

def to_canvas(bits: np.ndarray, size: int = SIZE, margin: int = 2) -> np.ndarray:
    """Fit a binary symbol into a size x size gray canvas (aspect kept, centred)."""
    crop_, _ = tight_crop(as_binary(bits))
    canvas = np.full((size, size), 255, dtype=np.uint8)
    if crop_.size == 0:
        return canvas
    h, w = crop_.shape
    scale = (size - 2 * margin) / max(h, w)
    nh, nw = max(1, round(h * scale)), max(1, round(w * scale))
    src = crop_.astype(float)
    zoomed = ndimage.zoom(src, (nh / h, nw / w), order=1, mode="nearest", grid_mode=True)
    zoomed = zoomed[:nh, :nw]
    y0, x0 = (size - zoomed.shape[0]) // 2, (size - zoomed.shape[1]) // 2
    canvas[y0:y0 + zoomed.shape[0], x0:x0 + zoomed.shape[1]] = np.clip(
        np.rint(255 * (1 - zoomed)), 0, 255).astype(np.uint8)
    return canvas


def to_input(gray: np.ndarray) -> np.ndarray:
    """Gray canvas -> float ink intensity in [0, 1]."""
    g = np.asarray(gray, dtype=float)
    if g.shape != (SIZE, SIZE):
        raise ValueError(f"expected {SIZE}x{SIZE} input, got {g.shape}")
    return (255.0 - g) / 255.0


# --- layers -----------------------------------------------------------------------

def _conv(x, W, b):
    """'same' conv; x (B, Ci, H, W) -> (B, Co, H, W), plus the im2col matrix."""
    pad = K // 2
    B, Ci, H, Wd = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(xp, (K, K), axis=(2, 3))  # B, Ci, H, W, K, K
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(B * H * Wd, Ci * K * K)
    out = cols @ W.reshape(len(W), -1).T + b
    return out.reshape(B, H, Wd, -1).transpose(0, 3, 1, 2), cols


def _conv_back(dout, cols, W, x_shape, need_dx=True):
    B, Ci, H, Wd = x_shape
    dmat = dout.transpose(0, 2, 3, 1).reshape(B * H * Wd, -1)
    dW = (dmat.T @ cols).reshape(W.shape)
    db = dmat.sum(axis=0)
    if not need_dx:
        return None, dW, db
    pad = K // 2
    dcols = (dmat @ W.reshape(len(W), -1)).reshape(B, H, Wd, Ci, K, K)
    dxp = np.zeros((B, Ci, H + 2 * pad, Wd + 2 * pad))
    for k in range(K):
        for l in range(K):
            dxp[:, :, k:k + H, l:l + Wd] += dcols[:, :, :, :, k, l].transpose(0, 3, 1, 2)
    return dxp[:, :, pad:pad + H, pad:pad + Wd], dW, db


def _pool(x):
    B, C, H, W = x.shape
    return x.reshape(B, C, H // 2, 2, W // 2, 2).mean(axis=(3, 5))


def _unpool(d):
    return np.repeat(np.repeat(d, 2, axis=2), 2, axis=3) / 4.0


def forward(params, x: np.ndarray, keep: bool = False):
    """x (B, 32, 32) -> (embeddings (B, 64), projections (B, 32)[, cache])."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        x = x[None]
    if x.shape[1:] != (SIZE, SIZE):
        raise ValueError(f"expected (B, {SIZE}, {SIZE}) input, got {x.shape}")
    x = x[:, None]
    z1, cols1 = _conv(x, params["W1"], params["b1"])
    a1 = np.tanh(z1)
    p1 = _pool(a1)
    z2, cols2 = _conv(p1, params["W2"], params["b2"])
    a2 = np.tanh(z2)
    p2 = _pool(a2)
    flat = p2.reshape(len(x), -1)
    emb = np.tanh(flat @ params["W3"].T + params["b3"])
    z4 = emb @ params["W4"].T + params["b4"]
    norm = np.maximum(np.linalg.norm(z4, axis=1, keepdims=True), 1e-12)
    proj = z4 / norm
    if not keep:
        return emb, proj
    cache = dict(x=x, cols1=cols1, a1=a1, p1=p1, cols2=cols2, a2=a2, p2=p2, flat=flat,
                 emb=emb, proj=proj, norm=norm)
    return emb, proj, cache


def backward(params, cache, dproj: np.ndarray) -> dict[str, np.ndarray]:
    """Parameter gradients given dLoss/dprojection."""
    proj, norm, emb = cache["proj"], cache["norm"], cache["emb"]
    dz4 = (dproj - proj * (proj * dproj).sum(axis=1, keepdims=True)) / norm
    g = {"W4": dz4.T @ emb, "b4": dz4.sum(axis=0)}
    dz3 = (dz4 @ params["W4"]) * (1 - emb ** 2)
    g["W3"] = dz3.T @ cache["flat"]
    g["b3"] = dz3.sum(axis=0)
    dp2 = (dz3 @ params["W3"]).reshape(cache["p2"].shape)
    dz2 = _unpool(dp2) * (1 - cache["a2"] ** 2)
    dp1, g["W2"], g["b2"] = _conv_back(dz2, cache["cols2"], params["W2"], cache["p1"].shape)
    dz1 = _unpool(dp1) * (1 - cache["a1"] ** 2)
    _, g["W1"], g["b1"] = _conv_back(dz1, cache["cols1"], params["W1"], cache["x"].shape, need_dx=False)
    return g


def encode(params, img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    emb, proj = forward(params, np.asarray(img, dtype=float)[None] if np.ndim(img) == 2 else img)
    return emb[0], proj[0]


# --- loss ---------------------------------------------------------------------------

def supcon_loss(z: np.ndarray, labels: Sequence, tau: float = 0.1) -> tuple[float, np.ndarray]:
    """Supervised contrastive loss summed over anchors, and its gradient.

    For anchor i, positives P(i) share its label and candidates A(i) are all
    other indices: L_i = -1/|P(i)| sum_p log softmax_A(i)(z_i.z_a / tau)_p.
    """
    if tau <= 0:
        raise ValueError("temperature must be positive")
    z = np.asarray(z, dtype=float)
    lab = np.asarray(labels)
    n = len(z)
    pos = (lab[:, None] == lab[None, :]) & ~np.eye(n, dtype=bool)
    npos = pos.sum(axis=1)
    if (npos == 0).any():
        raise ValueError(f"anchors without a positive: {np.flatnonzero(npos == 0).tolist()}")
    s = z @ z.T / tau
    s_masked = np.where(np.eye(n, dtype=bool), -np.inf, s)
    m = s_masked.max(axis=1, keepdims=True)
    e = np.exp(s_masked - m)
    denom = e.sum(axis=1, keepdims=True)
    log_prob = s_masked - m - np.log(denom)
    loss = float(-(np.where(pos, log_prob, 0.0).sum(axis=1) / npos).sum())
    grad_s = e / denom - pos / npos[:, None]
    grad_z = (grad_s + grad_s.T) @ z / tau
    return loss, grad_z


# --- training -------------------------------------------------------------------------

@dataclass(frozen=True)
class LossConfig:
    temperature: float = 0.1
    learning_rate: float = 0.05
    momentum: float = 0.9
    epochs: int = 10
    batch_size: int = 32  # source symbols per batch; 2N views
    max_per_label: int = 16  # training sources per label per epoch
    seed: int = 0

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


@dataclass
class TrainedRecognizer:
    params: dict[str, np.ndarray]
    labels: list[str]
    prototypes: np.ndarray  # (L, EMBED_DIM), unit rows
    tau: float = 0.1
    zones: list[str] = field(default_factory=list)
    loss_history: list[float] = field(default_factory=list)

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        buf.write(MAGIC)
        buf.write(struct.pack("<6I", FORMAT_VERSION, SIZE, C1, C2, EMBED_DIM, PROJ_DIM))
        buf.write(struct.pack("<dI", self.tau, len(self.labels)))
        zones = self.zones or [""] * len(self.labels)
        for lab, z in zip(self.labels, zones):
            for s in (lab, z):
                raw = s.encode("utf-8")
                buf.write(struct.pack("<H", len(raw)))
                buf.write(raw)
        for name in PARAM_SHAPES:
            buf.write(self.params[name].astype("<f4").tobytes())
        buf.write(self.prototypes.astype("<f4").tobytes())
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "TrainedRecognizer":
        if not data.startswith(MAGIC):
            raise ValueError("not a recognizer file")
        off = len(MAGIC)
        version, size, c1, c2, de, dp = struct.unpack_from("<6I", data, off)
        off += 24
        if version != FORMAT_VERSION or (size, c1, c2, de, dp) != (SIZE, C1, C2, EMBED_DIM, PROJ_DIM):
            raise ValueError(f"unsupported recognizer format v{version} dims {(size, c1, c2, de, dp)}")
        tau, n = struct.unpack_from("<dI", data, off)
        off += 12
        labels, zones = [], []
        for _ in range(n):
            for dest in (labels, zones):
                (ln,) = struct.unpack_from("<H", data, off)
                off += 2
                dest.append(data[off:off + ln].decode("utf-8"))
                off += ln
        params = {}
        for name, shape in PARAM_SHAPES.items():
            count = int(np.prod(shape))
            params[name] = np.frombuffer(data, "<f4", count, off).astype(float).reshape(shape)
            off += 4 * count
        protos = np.frombuffer(data, "<f4", n * EMBED_DIM, off).astype(float).reshape(n, EMBED_DIM)
        off += 4 * n * EMBED_DIM
        if off != len(data):
            raise ValueError("trailing bytes in recognizer file")
        return cls(params, labels, protos, tau, zones if any(zones) else [])


def _round32(params):
    return {k: v.astype(np.float32).astype(float) for k, v in params.items()}


def compute_prototypes(params, canvases: np.ndarray, labels: Sequence[str], order: Sequence[str]) -> np.ndarray:
    x = np.array([to_input(c) for c in canvases])
    emb = np.concatenate([forward(params, x[i:i + 256])[0] for i in range(0, len(x), 256)])
    lab = np.asarray(labels)
    protos = []
    for name in order:
        m = emb[lab == name].mean(axis=0)
        protos.append(m / max(np.linalg.norm(m), 1e-12))
    return np.array(protos).astype(np.float32).astype(float)


def train(
    canvases: Sequence[np.ndarray],
    labels: Sequence[str],
    aug: AugmentConfig = AugmentConfig(),
    cfg: LossConfig = LossConfig(),
    zones: dict[str, str] | None = None,
    on_epoch=None,
    prototype_canvases: Sequence[np.ndarray] | None = None,
    prototype_labels: Sequence[str] | None = None,
) -> TrainedRecognizer:
    """SGD with momentum on the contrastive loss over two augmented views per source.

    ``canvases`` are 32x32 gray symbol images (see ``to_canvas``). The step
    uses the loss averaged over the 2N views. Prototypes are mean embeddings
    of ``prototype_canvases`` (default: the training canvases).
    """
    canvases = [np.asarray(c, dtype=np.uint8) for c in canvases]
    labels = [str(x) for x in labels]
    if len(canvases) != len(labels):
        raise ValueError("canvases and labels differ in length")
    order = sorted(set(labels))
    counts = {lab: labels.count(lab) for lab in order}
    if len(order) < 2 or min(counts.values()) < 1:
        raise ValueError("training needs at least two labels")
    rng = np.random.default_rng(cfg.seed)
    params = init_params(cfg.seed)
    vel = {k: np.zeros_like(v) for k, v in params.items()}
    by_label = {lab: [i for i, x in enumerate(labels) if x == lab] for lab in order}
    history = []
    for epoch in range(cfg.epochs):
        chosen = []
        for lab in order:
            idx = by_label[lab]
            if len(idx) > cfg.max_per_label:
                idx = sorted(rng.choice(idx, cfg.max_per_label, replace=False).tolist())
            chosen.extend(idx)
        chosen = [chosen[i] for i in rng.permutation(len(chosen))]
        total, nb = 0.0, 0
        for s in range(0, len(chosen), cfg.batch_size):
            batch = chosen[s:s + cfg.batch_size]
            if len(batch) < 2:
                continue
            views, vlab = [], []
            for i in batch:
                for _ in range(2):
                    views.append(to_input(augment_symbol(canvases[i], sample_params(rng, aug))))
                    vlab.append(labels[i])
            _, proj, cache = forward(params, np.array(views), keep=True)
            loss, dz = supcon_loss(proj, vlab, cfg.temperature)
            scale = 1.0 / len(views)
            grads = backward(params, cache, dz * scale)
            for k in params:
                vel[k] = cfg.momentum * vel[k] - cfg.learning_rate * grads[k]
                params[k] = params[k] + vel[k]
            total += loss * scale
            nb += 1
        history.append(total / max(nb, 1))
        log.info("epoch %d loss %.4f", epoch, history[-1])
        if on_epoch is not None:
            on_epoch(epoch, history[-1])
    params = _round32(params)
    if prototype_canvases is None:
        prototype_canvases, prototype_labels = canvases, labels
    prototype_labels = [str(x) for x in prototype_labels]
    if set(prototype_labels) != set(order):
        raise ValueError("prototype labels must cover exactly the training labels")
    protos = compute_prototypes(params, prototype_canvases, prototype_labels, order)
    zl = [zones.get(lab, "") for lab in order] if zones else []
    return TrainedRecognizer(params, order, protos, cfg.temperature, zl, history)


@dataclass(frozen=True)
class Classification:
    label: str
    score: float
    ranked: tuple[tuple[str, float], ...]


def classify_embeddings(rec: TrainedRecognizer, emb: np.ndarray, candidates=None) -> list[Classification]:
    emb = np.atleast_2d(np.asarray(emb, dtype=float))
    unit = emb / np.maximum(np.linalg.norm(emb, axis=1, keepdims=True), 1e-12)
    sims = unit @ rec.prototypes.T
    allowed = np.ones(len(rec.labels), dtype=bool)
    if candidates is not None:
        cand = set(candidates)
        allowed = np.array([lab in cand for lab in rec.labels])
        if not allowed.any():
            raise ValueError("no candidate label is known to the recognizer")
    out = []
    for row in sims:
        idx = [i for i in range(len(rec.labels)) if allowed[i]]
        # stable sort on -similarity keeps label order among ties
        idx.sort(key=lambda i: -row[i])
        ranked = tuple((rec.labels[i], float(row[i])) for i in idx)
        out.append(Classification(ranked[0][0], ranked[0][1], ranked))
    return out


def classify(rec: TrainedRecognizer, canvas: np.ndarray, candidates=None) -> Classification:
    emb, _ = encode(rec.params, to_input(canvas))
    return classify_embeddings(rec, emb, candidates)[0]


def classify_batch(rec: TrainedRecognizer, canvases, candidates_per=None) -> list[Classification]:
    if len(canvases) == 0:
        return []
    x = np.array([to_input(c) for c in canvases])
    emb = np.concatenate([forward(rec.params, x[i:i + 256])[0] for i in range(0, len(x), 256)])
    if candidates_per is None:
        return classify_embeddings(rec, emb)
    return [classify_embeddings(rec, e, c)[0] for e, c in zip(emb, candidates_per)]
