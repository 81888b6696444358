"""Training loop, data pairing, splits, and the two trainable models
(transformer and the per-frame linear baseline)."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tape, Tensor, add, backward, matmul, scale, sigmoid
from .data import MotionSequence, linear_interpolate
from .metrics import mse
from .model import (
    ModelConfig,
    anomaly_loss,
    classify_anomaly,
    config_fingerprint,
    encoder_forward,
    init_params,
    recon_loss,
    reconstruct,
)
from .optim import AdamState, adam_step


class NumericalError(RuntimeError):
    """Training produced a non-finite loss."""


def mix_seed(*parts) -> int:
    """Stable 63-bit seed derived from integer/string parts."""
    text = ":".join(str(p) for p in parts)
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "big") >> 1


@dataclass
class TrainPair:
    """One training example: interpolation-filled input plus clean target."""

    id: str
    inputs: np.ndarray     # (T, D) fully filled frames
    observed: np.ndarray   # (T, D) bool, True where the input was measured
    target: np.ndarray     # (T, D) clean ground-truth frames
    labels: np.ndarray | None  # (T,) bool abnormality labels


def make_pairs(corrupted: list[MotionSequence],
               clean: list[MotionSequence]) -> list[TrainPair]:
    clean_by_id = {s.id: s for s in clean}
    pairs = []
    for seq in corrupted:
        ref = clean_by_id.get(seq.id)
        if ref is None:
            raise ValueError(f"no clean twin for sequence {seq.id!r}")
        pairs.append(TrainPair(
            id=seq.id,
            inputs=linear_interpolate(seq),
            observed=seq.mask.copy(),
            target=ref.frames.copy(),
            labels=None if seq.labels is None else seq.labels.copy(),
        ))
    return pairs


def split_indices(n: int, fractions=(0.7, 0.15, 0.15),
                  seed: int = 0) -> tuple[list[int], list[int], list[int]]:
    """Whole-sequence train/val/test split, seeded."""
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"split fractions must sum to 1, got {fractions}")
    perm = np.random.default_rng(mix_seed(seed, "split")).permutation(n)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    train = sorted(int(i) for i in perm[:n_train])
    val = sorted(int(i) for i in perm[n_train:n_train + n_val])
    test = sorted(int(i) for i in perm[n_train + n_val:])
    return train, val, test


# ---------------------------------------------------------------------------
# models

class TransformerModel:
    """Encoder + heads bundled with their config and flat parameter dict.

    The interpolation-filled input initializes the reconstruction and the
    encoder refines it: the final output is input + reconstruct(hidden),
    so the trunk only has to model the correction (denoising, gap repair,
    anomaly repair) rather than re-emit the whole signal.
    """

    kind = "transformer"

    def __init__(self, config: ModelConfig, params: dict[str, Tensor] | None = None,
                 seed: int | None = None):
        self.config = config
        self.params = init_params(config, seed) if params is None else params

    def forward(self, inputs: np.ndarray, observed: np.ndarray):
        hidden = encoder_forward(inputs, observed, self.params, self.config)
        refined = add(Tensor(np.asarray(inputs, dtype=np.float64)),
                      reconstruct(hidden, self.params))
        return refined, classify_anomaly(hidden, self.params)

    def fingerprint(self) -> str:
        return config_fingerprint(self.config)


class LinearModel:
    """Per-frame affine baseline: [frame || imputed-indicator] -> frame,
    plus an affine-sigmoid anomaly score. Trained with the same loss and
    optimizer as the transformer; it cannot use temporal context."""

    kind = "linear"

    def __init__(self, config: ModelConfig, seed: int | None = None):
        self.config = config
        din = config.input_dim
        rng = np.random.default_rng(config.seed if seed is None else seed)
        bound = np.sqrt(6.0 / (2 * din + din))
        self.params = {
            "lin.W": Tensor(rng.uniform(-bound, bound, size=(2 * din, din)),
                            requires_grad=True),
            "lin.b": Tensor(np.zeros(din), requires_grad=True),
            "lin.cls.w": Tensor(rng.uniform(-bound, bound, size=(2 * din, 1)),
                                requires_grad=True),
            "lin.cls.b": Tensor(np.zeros(1), requires_grad=True),
        }

    def forward(self, inputs: np.ndarray, observed: np.ndarray):
        indicator = np.where(np.asarray(observed, dtype=bool), 0.0, 1.0)
        stacked = Tensor(np.concatenate([inputs, indicator], axis=1))
        correction = add(matmul(stacked, self.params["lin.W"]), self.params["lin.b"])
        recon = add(Tensor(np.asarray(inputs, dtype=np.float64)), correction)
        probs = sigmoid(add(matmul(stacked, self.params["lin.cls.w"]),
                            self.params["lin.cls.b"]))
        return recon, probs

    def fingerprint(self) -> str:
        return "linear-" + config_fingerprint(self.config)


def pair_losses(model, pair: TrainPair):
    """(total, recon, anom) loss tensors for one pair; anom is None when
    the pair carries no labels."""
    cfg = model.config
    recon, probs = model.forward(pair.inputs, pair.observed)
    rloss = recon_loss(pair.target, recon, cfg.joint_weights,
                       ~pair.observed, cfg.imputed_penalty)
    if pair.labels is None:
        return rloss, rloss, None
    aloss = anomaly_loss(pair.labels, probs)
    return add(rloss, scale(aloss, cfg.anomaly_weight)), rloss, aloss


def predict(model, pair: TrainPair) -> tuple[np.ndarray, np.ndarray]:
    """Forward with no tape: (reconstruction (T, D), frame scores (T,))."""
    recon, probs = model.forward(pair.inputs, pair.observed)
    return recon.data, probs.data.reshape(-1)


def validation_mse(model, pairs: list[TrainPair]) -> float:
    return float(np.mean([mse(p.target, predict(model, p)[0]) for p in pairs]))


@dataclass
class TrainResult:
    best_params: dict[str, Tensor]
    best_val_mse: float
    best_epoch: int
    log_rows: list[tuple]  # (epoch, recon, anom, total, val_mse)
    trained_ids: list[str] = field(default_factory=list)


def _snapshot(params: dict[str, Tensor]) -> dict[str, Tensor]:
    return {k: Tensor(p.data.copy(), requires_grad=True) for k, p in params.items()}


def train_model(model, train_pairs: list[TrainPair], val_pairs: list[TrainPair],
                epochs: int | None = None, seed: int | None = None) -> TrainResult:
    """Minimize the combined loss with Adam; keeps the best-val-MSE
    parameter snapshot. Fully deterministic for a fixed (model seed, seed).

    Raises NumericalError naming the epoch and batch if the loss goes
    non-finite.
    """
    cfg = model.config
    epochs = cfg.epochs if epochs is None else epochs
    seed = cfg.seed if seed is None else seed
    if not train_pairs:
        raise ValueError("train_model: no training pairs")
    state = AdamState(model.params)
    order_rng = np.random.default_rng(mix_seed(seed, "batch-order"))
    best_val = float("inf")
    best_epoch = -1
    best_params = _snapshot(model.params)
    log_rows = []
    for epoch in range(epochs):
        perm = order_rng.permutation(len(train_pairs))
        sums = np.zeros(3)  # recon, anom, total
        for bi, start in enumerate(range(0, len(perm), cfg.batch_size)):
            batch = [train_pairs[i] for i in perm[start:start + cfg.batch_size]]
            tape = Tape()
            with tape:
                total = None
                for pair in batch:
                    t, r, a = pair_losses(model, pair)
                    total = t if total is None else add(total, t)
                    sums += (r.item(), 0.0 if a is None else a.item(), t.item())
                total = scale(total, 1.0 / len(batch))
            if not np.isfinite(total.item()):
                raise NumericalError(
                    f"non-finite loss at epoch {epoch}, batch {bi}"
                )
            backward(total, tape)
            grads = {}
            for name, p in model.params.items():
                if p.grad is not None:
                    grads[name] = p.grad
                p.grad = None
            adam_step(model.params, grads, state, cfg.learning_rate)
        avg = sums / len(train_pairs)
        val = validation_mse(model, val_pairs) if val_pairs else avg[2]
        log_rows.append((epoch, avg[0], avg[1], avg[2], val))
        if val < best_val:
            best_val = val
            best_epoch = epoch
            best_params = _snapshot(model.params)
    return TrainResult(
        best_params=best_params,
        best_val_mse=best_val,
        best_epoch=best_epoch,
        log_rows=log_rows,
        trained_ids=[p.id for p in train_pairs] + [p.id for p in val_pairs],
    )
