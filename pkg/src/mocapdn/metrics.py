"""Evaluation primitives: MSE, rank-based AUC-ROC, paired significance
testing, Spearman correlation, and wall-clock inference timing."""

from __future__ import annotations

import math
import platform
import time
from dataclasses import dataclass

import numpy as np


class UndefinedAUCError(ValueError):
    """AUC asked for a single-class label set."""


def mse(clean: np.ndarray, reconstructed: np.ndarray) -> float:
    """Mean over frames of the squared L2 distance between frame vectors."""
    clean = np.asarray(clean, dtype=np.float64)
    reconstructed = np.asarray(reconstructed, dtype=np.float64)
    if clean.shape != reconstructed.shape or clean.ndim != 2:
        raise ValueError(
            f"mse: shapes must be equal 2-D, got {clean.shape} and "
            f"{reconstructed.shape}"
        )
    diff = clean - reconstructed
    return float((diff * diff).sum() / clean.shape[0])


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned the mean of their rank range."""
    _, inverse, counts = np.unique(values, return_inverse=True, return_counts=True)
    cum = np.concatenate(([0], np.cumsum(counts)))
    return (cum[:-1] + (counts + 1) / 2.0)[inverse]


def auc_roc(labels, scores) -> float:
    """Mann-Whitney AUC: the probability a positive outranks a negative,
    ties counted half. Equivalent to the trapezoidal ROC area."""
    labels = np.asarray(labels, dtype=bool).reshape(-1)
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    if labels.shape != scores.shape:
        raise ValueError(
            f"auc_roc: {labels.size} labels vs {scores.size} scores"
        )
    pos = int(labels.sum())
    neg = labels.size - pos
    if pos == 0 or neg == 0:
        raise UndefinedAUCError(
            f"AUC undefined: {pos} positive and {neg} negative labels"
        )
    ranks = _average_ranks(scores)
    return float((ranks[labels].sum() - pos * (pos + 1) / 2.0) / (pos * neg))


def spearman_rho(x, y) -> float:
    """Spearman rank correlation (average ranks for ties)."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.shape != y.shape or x.size < 2:
        raise ValueError("spearman_rho: need two equal-length samples of size >= 2")
    rx = _average_ranks(x)
    ry = _average_ranks(y)
    rx = rx - rx.mean()
    ry = ry - ry.mean()
    denom = math.sqrt(float((rx * rx).sum()) * float((ry * ry).sum()))
    if denom == 0.0:
        raise ValueError("spearman_rho: a sample has zero rank variance")
    return float((rx * ry).sum() / denom)


# ---------------------------------------------------------------------------
# paired t-test with a self-contained t CDF

def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 300):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-12:
            return h
    raise RuntimeError("incomplete beta continued fraction did not converge")


def _betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b), accurate to ~1e-12."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    front = math.exp(
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_two_sided_p(t: float, df: int) -> float:
    """P(|T| >= |t|) for Student's t with df degrees of freedom, via the
    incomplete beta identity p = I_{df/(df+t^2)}(df/2, 1/2)."""
    if df < 1:
        raise ValueError(f"degrees of freedom must be >= 1, got {df}")
    return _betainc(df / 2.0, 0.5, df / (df + t * t))


@dataclass(frozen=True)
class PairedTestResult:
    n: int
    mean_diff: float
    df: int
    t_stat: float | None
    p_value: float | None
    degenerate: bool = False


def paired_test(errors_a, errors_b) -> PairedTestResult:
    """Two-sided paired t-test on per-sequence error differences.

    Zero-variance differences yield a degenerate report (no finite t)
    rather than an exception.
    """
    a = np.asarray(errors_a, dtype=np.float64).reshape(-1)
    b = np.asarray(errors_b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise ValueError(f"paired_test: {a.size} vs {b.size} paired errors")
    if a.size < 2:
        raise ValueError("paired_test: need at least 2 pairs")
    d = a - b
    n = d.size
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        return PairedTestResult(n=n, mean_diff=mean, df=n - 1, t_stat=None,
                                p_value=None, degenerate=True)
    t = mean / (sd / math.sqrt(n))
    return PairedTestResult(n=n, mean_diff=mean, df=n - 1, t_stat=t,
                            p_value=student_t_two_sided_p(t, n - 1))


# ---------------------------------------------------------------------------
# timing

@dataclass(frozen=True)
class TimingResult:
    ms_per_sequence: float
    repeats: int
    hardware: str


def time_inference(infer, sequences, repeats: int = 10) -> TimingResult:
    """Median wall-clock milliseconds per sequence over `repeats` full
    passes, after one untimed warmup pass."""
    if repeats < 10:
        raise ValueError(f"time_inference: repeats must be >= 10, got {repeats}")
    sequences = list(sequences)
    if not sequences:
        raise ValueError("time_inference: empty dataset")
    for seq in sequences:  # warmup
        infer(seq)
    per_repeat = []
    for _ in range(repeats):
        start = time.perf_counter()
        for seq in sequences:
            infer(seq)
        elapsed = time.perf_counter() - start
        per_repeat.append(elapsed / len(sequences) * 1000.0)
    return TimingResult(
        ms_per_sequence=float(np.median(per_repeat)),
        repeats=repeats,
        hardware=f"{platform.machine()} {platform.processor()}".strip() or "unknown-cpu",
    )


# ---------------------------------------------------------------------------
# evaluation report

@dataclass
class EvalReport:
    """One evaluation run; mse is always the mean of per_sequence_errors."""

    mse: float
    per_sequence_errors: list[float]
    config_fingerprint: str
    auc_roc: float | None = None
    inference_ms_per_sequence: float | None = None

    @classmethod
    def from_errors(cls, errors, config_fingerprint: str, auc: float | None = None,
                    timing_ms: float | None = None) -> "EvalReport":
        errors = [float(e) for e in errors]
        if not errors:
            raise ValueError("EvalReport: no per-sequence errors")
        return cls(
            mse=float(np.mean(errors)),
            per_sequence_errors=errors,
            config_fingerprint=config_fingerprint,
            auc_roc=auc,
            inference_ms_per_sequence=timing_ms,
        )

    def to_kv_text(self) -> str:
        def fmt(v):
            return "n/a" if v is None else repr(float(v))

        lines = [
            f"mse={fmt(self.mse)}",
            f"auc_roc={fmt(self.auc_roc)}",
            f"inference_ms_per_sequence={fmt(self.inference_ms_per_sequence)}",
            f"config_fingerprint={self.config_fingerprint}",
            "per_sequence_errors=" + " ".join(repr(e) for e in self.per_sequence_errors),
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_kv_text(cls, text: str) -> "EvalReport":
        kv = {}
        for line in text.splitlines():
            if line.strip():
                key, _, value = line.partition("=")
                kv[key] = value
        def opt(v):
            return None if v == "n/a" else float(v)
        return cls(
            mse=float(kv["mse"]),
            per_sequence_errors=[float(v) for v in kv["per_sequence_errors"].split()],
            config_fingerprint=kv["config_fingerprint"],
            auc_roc=opt(kv["auc_roc"]),
            inference_ms_per_sequence=opt(kv["inference_ms_per_sequence"]),
        )
