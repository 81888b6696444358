"""Transformer encoder with reconstruction and anomaly heads.

The encoder embeds interpolation-filled frames together with an
imputed-cell indicator channel, adds sinusoidal positional encoding, and
applies pre-norm residual layers of multi-head self-attention and a
feed-forward network. Two linear heads map the hidden states back to
frame space and to per-frame anomaly probabilities.
"""

from __future__ import annotations

import base64
import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import (
    ShapeError,
    Tensor,
    add,
    clip,
    concat_cols,
    layer_norm,
    log,
    matmul,
    mul,
    relu,
    scale,
    sigmoid,
    softmax,
    sub,
    sum_all,
    transpose,
)

CHECKPOINT_FORMAT = "mocapdn-checkpoint-v1"
PROB_CLAMP = 1e-12
LAYER_NORM_EPS = 1e-5


@dataclass
class ModelConfig:
    """Architecture and training hyperparameters."""

    input_dim: int
    num_layers: int = 6
    num_heads: int = 8
    embed_dim: int = 128
    ffn_dim: int = 0  # 0 means 4 * embed_dim
    anomaly_weight: float = 1.0
    joint_weights: np.ndarray | None = None
    imputed_penalty: float = 1.0
    learning_rate: float = 0.001
    epochs: int = 100
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.ffn_dim == 0:
            self.ffn_dim = 4 * self.embed_dim
        for name in ("input_dim", "num_layers", "num_heads", "embed_dim", "ffn_dim"):
            if getattr(self, name) < 1 and not (name == "num_layers" and self.num_layers == 0):
                raise ValueError(f"ModelConfig.{name} must be positive")
        if self.embed_dim % self.num_heads != 0:
            raise ValueError(
                f"embed_dim {self.embed_dim} not divisible by num_heads {self.num_heads}"
            )
        if self.anomaly_weight < 0:
            raise ValueError("anomaly_weight must be non-negative")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.joint_weights is None:
            self.joint_weights = np.ones(self.input_dim)
        else:
            self.joint_weights = np.asarray(self.joint_weights, dtype=np.float64)
            if self.joint_weights.shape != (self.input_dim,):
                raise ValueError("joint_weights length must equal input_dim")
            if np.any(self.joint_weights <= 0):
                raise ValueError("joint_weights must all be positive")

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.num_heads

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "num_layers": self.num_layers,
            "num_heads": self.num_heads,
            "embed_dim": self.embed_dim,
            "ffn_dim": self.ffn_dim,
            "anomaly_weight": self.anomaly_weight,
            "joint_weights": list(map(float, self.joint_weights)),
            "imputed_penalty": self.imputed_penalty,
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["joint_weights"] = np.asarray(d["joint_weights"], dtype=np.float64)
        return cls(**d)


def config_fingerprint(config: ModelConfig) -> str:
    """Short stable hash of the full configuration."""
    text = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:12]


@dataclass(frozen=True)
class LossReport:
    """The three loss values for one batch."""

    recon: float
    anom: float
    total: float
    lambda_used: float

    def __post_init__(self):
        if self.recon < 0 or self.anom < 0:
            raise ValueError("loss components must be non-negative")


def total_loss(recon, anom, anomaly_weight: float) -> LossReport:
    """Combine the two objectives: total = recon + weight * anom."""
    if anomaly_weight < 0:
        raise ValueError(f"anomaly weight must be non-negative, got {anomaly_weight}")
    r = recon.item() if isinstance(recon, Tensor) else float(recon)
    a = anom.item() if isinstance(anom, Tensor) else float(anom)
    return LossReport(recon=r, anom=a, total=r + anomaly_weight * a,
                      lambda_used=anomaly_weight)


# ---------------------------------------------------------------------------
# parameters

def parameter_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Name -> shape for every trainable array, in creation order."""
    d, dh, f = config.embed_dim, config.head_dim, config.ffn_dim
    din = config.input_dim
    shapes: dict[str, tuple[int, ...]] = {
        "embed.W": (2 * din, d),
        "embed.b": (d,),
    }
    for i in range(config.num_layers):
        p = f"layer{i}"
        shapes[f"{p}.ln1.gamma"] = (d,)
        shapes[f"{p}.ln1.beta"] = (d,)
        for h in range(config.num_heads):
            shapes[f"{p}.attn.Wq{h}"] = (d, dh)
            shapes[f"{p}.attn.Wk{h}"] = (d, dh)
            shapes[f"{p}.attn.Wv{h}"] = (d, dh)
        shapes[f"{p}.attn.Wo"] = (d, d)
        shapes[f"{p}.ln2.gamma"] = (d,)
        shapes[f"{p}.ln2.beta"] = (d,)
        shapes[f"{p}.ffn.W1"] = (d, f)
        shapes[f"{p}.ffn.b1"] = (f,)
        shapes[f"{p}.ffn.W2"] = (f, d)
        shapes[f"{p}.ffn.b2"] = (d,)
    shapes["recon.W"] = (d, din)
    shapes["recon.b"] = (din,)
    shapes["cls.w"] = (d, 1)
    shapes["cls.b"] = (1,)
    return shapes


def parameter_count(config: ModelConfig) -> int:
    return sum(int(np.prod(s)) for s in parameter_shapes(config).values())


def init_params(config: ModelConfig, seed: int | None = None) -> dict[str, Tensor]:
    """Scaled-uniform (fan-based) init for projections; biases zero;
    layer-norm gamma one, beta zero. Deterministic per seed.

    The two output heads use a 10x smaller bound so the model starts out
    emitting near-zero corrections and near-0.5 probabilities.
    """
    rng = np.random.default_rng(config.seed if seed is None else seed)
    params: dict[str, Tensor] = {}
    for name, shape in parameter_shapes(config).items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf == "gamma":
            data = np.ones(shape)
        elif leaf.startswith("b") or leaf == "beta":
            data = np.zeros(shape)
        else:
            bound = math.sqrt(6.0 / (shape[0] + shape[1]))
            if name.startswith(("recon.", "cls.")):
                bound *= 0.1
            data = rng.uniform(-bound, bound, size=shape)
        params[name] = Tensor(data, requires_grad=True)
    return params


class EncoderLayer:
    """View over one layer's parameters in the flat parameter dict."""

    def __init__(self, params: dict[str, Tensor], index: int, num_heads: int):
        self._params = params
        self._prefix = f"layer{index}"
        self.num_heads = num_heads

    def _get(self, suffix: str) -> Tensor:
        return self._params[f"{self._prefix}.{suffix}"]

    def wq(self, h: int) -> Tensor:
        return self._get(f"attn.Wq{h}")

    def wk(self, h: int) -> Tensor:
        return self._get(f"attn.Wk{h}")

    def wv(self, h: int) -> Tensor:
        return self._get(f"attn.Wv{h}")

    @property
    def wo(self) -> Tensor:
        return self._get("attn.Wo")

    @property
    def ln1(self) -> tuple[Tensor, Tensor]:
        return self._get("ln1.gamma"), self._get("ln1.beta")

    @property
    def ln2(self) -> tuple[Tensor, Tensor]:
        return self._get("ln2.gamma"), self._get("ln2.beta")

    @property
    def ffn(self) -> tuple[Tensor, Tensor, Tensor, Tensor]:
        return (self._get("ffn.W1"), self._get("ffn.b1"),
                self._get("ffn.W2"), self._get("ffn.b2"))


# ---------------------------------------------------------------------------
# forward pieces

def positional_encoding(num_frames: int, embed_dim: int) -> np.ndarray:
    """Sinusoidal position features: sin at even columns, cos at odd,
    with wavelength 10000^(2i/d) for column pair 2i."""
    if num_frames < 1:
        raise ValueError(f"num_frames must be >= 1, got {num_frames}")
    if embed_dim % 2 != 0:
        raise ValueError(f"embed_dim must be even, got {embed_dim}")
    pos = np.arange(num_frames, dtype=np.float64)[:, None]
    i2 = np.arange(0, embed_dim, 2, dtype=np.float64)
    angle = pos / np.power(10000.0, i2 / embed_dim)
    pe = np.empty((num_frames, embed_dim))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle)
    return pe


def embed_input(frames: np.ndarray, observed_mask: np.ndarray, weight: Tensor,
                bias: Tensor, add_positional: bool = True) -> Tensor:
    """Project [frame || imputed-indicator] rows into the embedding space.

    The indicator is 1.0 where the cell was imputed (mask False), telling
    the encoder which inputs are synthetic.
    """
    frames = np.asarray(frames, dtype=np.float64)
    observed_mask = np.asarray(observed_mask, dtype=bool)
    if frames.ndim != 2 or observed_mask.shape != frames.shape:
        raise ShapeError(
            f"embed_input: frames {frames.shape} and mask {observed_mask.shape} "
            "must be matching 2-D arrays"
        )
    if weight.shape[0] != 2 * frames.shape[1]:
        raise ShapeError(
            f"embed_input: weight rows {weight.shape[0]} != 2*D = {2 * frames.shape[1]}"
        )
    indicator = np.where(observed_mask, 0.0, 1.0)
    stacked = Tensor(np.concatenate([frames, indicator], axis=1))
    # classic sqrt(d) embedding scale keeps the projected signal comparable
    # to the O(1)-entry positional encoding
    out = add(scale(matmul(stacked, weight), math.sqrt(weight.shape[1])), bias)
    if add_positional:
        out = add(out, Tensor(positional_encoding(frames.shape[0], weight.shape[1])))
    return out


def multi_head_attention(x: Tensor, layer: EncoderLayer, num_heads: int) -> Tensor:
    """Scaled dot-product self-attention over frames, one softmax per head,
    heads concatenated then projected. No causal mask: every frame attends
    to the whole sequence."""
    inv_sqrt_dh = 1.0 / math.sqrt(x.shape[1] // num_heads)
    heads = []
    for h in range(num_heads):
        q = matmul(x, layer.wq(h))
        k = matmul(x, layer.wk(h))
        v = matmul(x, layer.wv(h))
        scores = scale(matmul(q, transpose(k)), inv_sqrt_dh)
        attn = softmax(scores, axis=1)
        heads.append(matmul(attn, v))
    return matmul(concat_cols(heads), layer.wo)


def attention_weights(x: Tensor, layer: EncoderLayer, num_heads: int) -> list[np.ndarray]:
    """The per-head softmaxed attention matrices (for inspection/tests)."""
    inv_sqrt_dh = 1.0 / math.sqrt(x.shape[1] // num_heads)
    out = []
    for h in range(num_heads):
        q = matmul(x, layer.wq(h))
        k = matmul(x, layer.wk(h))
        scores = scale(matmul(q, transpose(k)), inv_sqrt_dh)
        out.append(softmax(scores, axis=1).data)
    return out


def encoder_forward(frames: np.ndarray, observed_mask: np.ndarray,
                    params: dict[str, Tensor], config: ModelConfig,
                    add_positional: bool = True) -> Tensor:
    """Embed, then apply the pre-norm residual stack:
    x += MHA(LN(x)); x += FFN(LN(x)), repeated num_layers times."""
    x = embed_input(frames, observed_mask, params["embed.W"], params["embed.b"],
                    add_positional=add_positional)
    for i in range(config.num_layers):
        layer = EncoderLayer(params, i, config.num_heads)
        g1, b1 = layer.ln1
        x = add(x, multi_head_attention(layer_norm(x, g1, b1, LAYER_NORM_EPS),
                                        layer, config.num_heads))
        g2, b2 = layer.ln2
        w1, bb1, w2, bb2 = layer.ffn
        hidden = relu(add(matmul(layer_norm(x, g2, b2, LAYER_NORM_EPS), w1), bb1))
        x = add(x, add(matmul(hidden, w2), bb2))
    return x


def reconstruct(hidden: Tensor, params: dict[str, Tensor]) -> Tensor:
    """Affine map from hidden states back to frame coordinates."""
    return add(matmul(hidden, params["recon.W"]), params["recon.b"])


def classify_anomaly(hidden: Tensor, params: dict[str, Tensor]) -> Tensor:
    """Per-frame abnormality probability: sigmoid(w . h_t + b), shape (T, 1)."""
    return sigmoid(add(matmul(hidden, params["cls.w"]), params["cls.b"]))


def forward_sequence(frames, observed_mask, params, config,
                     add_positional: bool = True) -> tuple[Tensor, Tensor]:
    """Full forward pass: (reconstruction (T, D), probabilities (T, 1))."""
    hidden = encoder_forward(frames, observed_mask, params, config, add_positional)
    return reconstruct(hidden, params), classify_anomaly(hidden, params)


# ---------------------------------------------------------------------------
# losses

def recon_loss(target: np.ndarray, recon: Tensor, joint_weights: np.ndarray,
               imputed_mask: np.ndarray, imputed_penalty: float) -> Tensor:
    """Weighted mean-over-frames squared reconstruction error.

    (1/T) sum_t sum_j w_j * (1 + mu * imputed[t,j]) * (x[t,j] - xhat[t,j])^2
    With unit weights and mu=0 this is the plain mean squared frame norm.
    """
    target = np.asarray(target, dtype=np.float64)
    joint_weights = np.asarray(joint_weights, dtype=np.float64)
    imputed_mask = np.asarray(imputed_mask, dtype=bool)
    if recon.shape != target.shape or imputed_mask.shape != target.shape:
        raise ShapeError(
            f"recon_loss: shapes disagree: target {target.shape}, "
            f"recon {recon.shape}, imputed {imputed_mask.shape}"
        )
    if joint_weights.shape != (target.shape[1],):
        raise ShapeError(
            f"recon_loss: joint_weights shape {joint_weights.shape} "
            f"!= ({target.shape[1]},)"
        )
    if np.any(joint_weights <= 0):
        raise ValueError("recon_loss: joint_weights must all be positive")
    if imputed_penalty < 0:
        raise ValueError("recon_loss: imputed penalty must be non-negative")
    cell_w = joint_weights * (1.0 + imputed_penalty * imputed_mask)
    diff = sub(Tensor(target), recon)
    weighted = mul(mul(diff, diff), Tensor(cell_w))
    return scale(sum_all(weighted), 1.0 / target.shape[0])


def anomaly_loss(labels: np.ndarray, probs: Tensor) -> Tensor:
    """Per-frame binary cross-entropy, probabilities clamped before logs."""
    labels = np.asarray(labels, dtype=np.float64).reshape(-1)
    num = labels.shape[0]
    if probs.data.size != num:
        raise ShapeError(
            f"anomaly_loss: {num} labels vs {probs.data.size} probabilities"
        )
    if not np.all((labels == 0.0) | (labels == 1.0)):
        raise ValueError("anomaly_loss: labels must be 0 or 1")
    y = Tensor(labels.reshape(probs.shape))
    ones = Tensor(np.ones(probs.shape))
    p = clip(probs, PROB_CLAMP, 1.0 - PROB_CLAMP)
    ll = add(mul(y, log(p)), mul(sub(ones, y), log(sub(ones, p))))
    return scale(sum_all(ll), -1.0 / num)


# ---------------------------------------------------------------------------
# checkpoints

def _encode_array(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {
        "shape": list(a.shape),
        "dtype": "<f8",
        "data": base64.b64encode(a.tobytes()).decode("ascii"),
    }


def _decode_array(d: dict) -> np.ndarray:
    raw = base64.b64decode(d["data"])
    return np.frombuffer(raw, dtype=d["dtype"]).reshape(d["shape"]).copy()


def save_checkpoint(path, config: ModelConfig, params: dict[str, Tensor]) -> None:
    """Write config + named parameter arrays; round-trips bit-exactly."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "config": config.to_dict(),
        "params": {name: _encode_array(t.data) for name, t in params.items()},
    }
    with open(path, "w") as fh:
        fh.write(json.dumps(doc, sort_keys=True, separators=(",", ":")))
        fh.write("\n")


def load_checkpoint(path) -> tuple[ModelConfig, dict[str, Tensor]]:
    with open(path) as fh:
        doc = json.load(fh)
    tag = doc.get("format")
    if tag != CHECKPOINT_FORMAT:
        raise ValueError(f"unsupported checkpoint format {tag!r}")
    config = ModelConfig.from_dict(doc["config"])
    params = {
        name: Tensor(_decode_array(entry), requires_grad=True)
        for name, entry in doc["params"].items()
    }
    expected = parameter_shapes(config)
    if set(params) != set(expected):
        raise ValueError("checkpoint parameter names do not match its config")
    return config, params
