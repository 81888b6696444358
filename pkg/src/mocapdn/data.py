"""Synthetic motion sequences, corruption injection, imputation, file I/O.

Sequences are (T, D) frame matrices with D = 3 * joint_count coordinates,
a boolean observed-cell mask, and optional per-frame abnormality labels.
Generation and corruption are pure functions of (spec, seed); per-sequence
streams are derived as default_rng([seed, index]) so datasets can be
produced in any order or in parallel.

File format (line-delimited JSON, one sequence per line after a header):

    {"format": "mocapdn-dataset-v1"}
    {"id": ..., "joint_count": ..., "frames": [...], "mask": [...],
     "labels": [...] or null}

frames and mask are row-major; unobserved frame cells are serialized as
null (the underlying value is not stored; ground truth lives in the clean
copy of the dataset). On load, unobserved cells are filled with 0.0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

DATASET_FORMAT = "mocapdn-dataset-v1"

# Clean trajectories are band-limited: consecutive-frame deltas never
# exceed this (sum of amplitude * angular frequency over <= 4 sinusoids,
# plus the drift slope).
SMOOTHNESS_DELTA_BOUND = 1.2

OCCLUSION_RUN_MEAN = 5  # geometric run length, mean frames per run


class DataFormatError(ValueError):
    """Malformed or inconsistent dataset file content."""


@dataclass
class MotionSequence:
    """One capture: frames (T, D), observed mask, optional frame labels."""

    id: str
    joint_count: int
    frames: np.ndarray
    mask: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.frames.ndim != 2:
            raise ValueError(f"frames must be 2-D, got shape {self.frames.shape}")
        if self.frames.shape[1] != 3 * self.joint_count:
            raise ValueError(
                f"frame width {self.frames.shape[1]} != 3 * joint_count "
                f"({self.joint_count})"
            )
        if self.mask.shape != self.frames.shape:
            raise ValueError("mask shape must match frames")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=bool)
            if self.labels.shape != (self.frames.shape[0],):
                raise ValueError("labels length must equal frame count")

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]


def sequences_equal(a: MotionSequence, b: MotionSequence) -> bool:
    """Equality on the serializable content: ids, masks, labels, and frame
    values at observed cells (values under the mask are not persisted)."""
    if a.id != b.id or a.joint_count != b.joint_count:
        return False
    if a.frames.shape != b.frames.shape or not np.array_equal(a.mask, b.mask):
        return False
    if (a.labels is None) != (b.labels is None):
        return False
    if a.labels is not None and not np.array_equal(a.labels, b.labels):
        return False
    return np.array_equal(a.frames[a.mask], b.frames[b.mask])


@dataclass(frozen=True)
class CorruptionSpec:
    """How to corrupt clean sequences; all fractions in [0, 1]."""

    noise_fraction: float = 0.2
    noise_sigma: float = 0.3
    occlusion_fraction: float = 0.1
    anomaly_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("noise_fraction", "occlusion_fraction", "anomaly_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")


@dataclass(frozen=True)
class DatasetProfile:
    name: str
    num_sequences: int
    joint_count: int
    sequence_length: int
    corruption: CorruptionSpec


def _profiles() -> dict[str, DatasetProfile]:
    rows = {
        # name: (sequences, joints, noise, occlusion)
        "stroke": (2000, 10, 0.20, 0.10),
        "orthopedic": (1000, 8, 0.20, 0.10),
        "neurological": (1000, 12, 0.15, 0.10),
        "post-surgery": (1000, 8, 0.20, 0.15),
    }
    out = {}
    for name, (n, joints, noise, occl) in rows.items():
        out[name] = DatasetProfile(
            name=name, num_sequences=n, joint_count=joints, sequence_length=30,
            corruption=CorruptionSpec(noise_fraction=noise, occlusion_fraction=occl,
                                      anomaly_fraction=0.5),
        )
        # desk variants: same corruption ratios, workstation-sized data
        out[f"{name}-desk"] = DatasetProfile(
            name=f"{name}-desk", num_sequences=100, joint_count=joints,
            sequence_length=100,
            corruption=CorruptionSpec(noise_fraction=noise, occlusion_fraction=occl,
                                      anomaly_fraction=0.5),
        )
    return out


PROFILES = _profiles()


def get_profile(name: str) -> DatasetProfile:
    try:
        return PROFILES[name]
    except KeyError:
        known = ", ".join(sorted(PROFILES))
        raise DataFormatError(f"unknown profile {name!r} (known: {known})") from None


# ---------------------------------------------------------------------------
# generation

def _sequence_rng(seed: int, index: int, salt: int = 0) -> np.random.Generator:
    return np.random.default_rng([seed, salt, index])


def generate_clean(profile: DatasetProfile, seed: int) -> list[MotionSequence]:
    """Smooth quasi-periodic trajectories: per coordinate, 2-4 random-phase
    sinusoids plus a slow drift, fully observed, all frames normal."""
    t = np.arange(profile.sequence_length, dtype=np.float64)
    out = []
    for i in range(profile.num_sequences):
        rng = _sequence_rng(seed, i)
        dim = 3 * profile.joint_count
        frames = np.empty((profile.sequence_length, dim))
        for j in range(dim):
            offset = rng.uniform(-2.0, 2.0)
            drift = rng.uniform(-2.0, 2.0) / profile.sequence_length
            x = offset + drift * t
            for _ in range(int(rng.integers(2, 5))):
                amp = rng.uniform(0.4, 1.8)
                omega = rng.uniform(0.02, 0.15)
                phase = rng.uniform(0.0, 2.0 * np.pi)
                x = x + amp * np.sin(omega * t + phase)
            frames[:, j] = x
        out.append(MotionSequence(
            id=f"{profile.name}-{i:05d}",
            joint_count=profile.joint_count,
            frames=frames,
            mask=np.ones_like(frames, dtype=bool),
        ))
    return out


# ---------------------------------------------------------------------------
# corruption

def inject_noise(seq: MotionSequence, spec: CorruptionSpec,
                 rng: np.random.Generator | None = None) -> MotionSequence:
    """Add Gaussian noise to an exact fraction of observed cells, sampled
    without replacement; std is noise_sigma times the coordinate's own std."""
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    frames = seq.frames.copy()
    observed = np.flatnonzero(seq.mask.reshape(-1))
    count = int(round(spec.noise_fraction * observed.size))
    if count > 0:
        chosen = rng.choice(observed, size=count, replace=False)
        rows, cols = np.unravel_index(chosen, seq.frames.shape)
        stds = seq.frames.std(axis=0)
        frames[rows, cols] += rng.standard_normal(count) * spec.noise_sigma * stds[cols]
    return replace(seq, frames=frames, mask=seq.mask.copy(),
                   labels=None if seq.labels is None else seq.labels.copy())


def inject_occlusion(seq: MotionSequence, spec: CorruptionSpec,
                     rng: np.random.Generator | None = None) -> MotionSequence:
    """Mark contiguous per-coordinate runs unobserved until the target cell
    count is reached (the last run is truncated, so the count is exact).

    Frames 0 and T-1 are never occluded, anchoring interpolation. Frame
    values are preserved underneath for in-memory ground-truth use; they
    are not serialized.
    """
    num_frames, dim = seq.frames.shape
    mask = seq.mask.copy()
    target = int(round(spec.occlusion_fraction * mask.size))
    interior = max(num_frames - 2, 0)
    maskable = int(mask[1:num_frames - 1].sum()) if interior > 0 else 0
    target = min(target, maskable)
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    masked = 0
    stall = 0
    while masked < target:
        j = int(rng.integers(dim))
        length = int(rng.geometric(1.0 / OCCLUSION_RUN_MEAN))
        start = int(rng.integers(1, num_frames - 1))
        end = min(start + length, num_frames - 1)
        progressed = False
        for t in range(start, end):
            if mask[t, j]:
                mask[t, j] = False
                masked += 1
                progressed = True
                if masked == target:
                    break
        if progressed:
            stall = 0
        else:
            stall += 1
            if stall > 1000:  # fully-overlapped draws; finish deterministically
                rows, cols = np.nonzero(mask[1:num_frames - 1])
                need = target - masked
                mask[rows[:need] + 1, cols[:need]] = False
                masked = target
    return replace(seq, frames=seq.frames.copy(), mask=mask,
                   labels=None if seq.labels is None else seq.labels.copy())


def inject_anomaly(seq: MotionSequence, spec: CorruptionSpec,
                   rng: np.random.Generator | None = None) -> MotionSequence:
    """With probability anomaly_fraction, add one anomaly episode and label
    its frames abnormal; labels are attached either way.

    Episode archetypes:
      hyperextension - one coordinate offset beyond its min/max envelope
        by 2-4 envelope widths for 5-10 frames;
      tremor - high-frequency oscillation (well above the clean band
        limit) added to one coordinate for 10-20 frames.
    """
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    frames = seq.frames.copy()
    labels = np.zeros(seq.num_frames, dtype=bool)
    if rng.random() < spec.anomaly_fraction:
        j = int(rng.integers(seq.dim))
        if rng.random() < 0.5:  # hyperextension
            length = int(rng.integers(5, 11))
            length = min(length, seq.num_frames)
            start = int(rng.integers(0, seq.num_frames - length + 1))
            col = seq.frames[:, j]
            width = max(col.max() - col.min(), 1.0)
            push = rng.uniform(2.0, 4.0) * width
            sign = 1.0 if rng.random() < 0.5 else -1.0
            frames[start:start + length, j] += sign * push
        else:  # tremor
            length = int(rng.integers(10, 21))
            length = min(length, seq.num_frames)
            start = int(rng.integers(0, seq.num_frames - length + 1))
            amp = rng.uniform(1.5, 2.5) * max(seq.frames[:, j].std(), 0.5)
            omega = rng.uniform(2.2, 3.0)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            frames[start:start + length, j] += amp * np.sin(
                omega * np.arange(length) + phase
            )
        labels[start:start + length] = True
    return replace(seq, frames=frames, mask=seq.mask.copy(), labels=labels)


def corrupt_sequence(seq: MotionSequence, spec: CorruptionSpec,
                     rng: np.random.Generator) -> MotionSequence:
    """Anomaly episode, then noise, then occlusion, from one stream."""
    seq = inject_anomaly(seq, spec, rng)
    seq = inject_noise(seq, spec, rng)
    return inject_occlusion(seq, spec, rng)


def corrupt_dataset(seqs: list[MotionSequence],
                    spec: CorruptionSpec) -> list[MotionSequence]:
    """Corrupt every sequence with an independent per-index stream."""
    return [
        corrupt_sequence(seq, spec, _sequence_rng(spec.seed, i, salt=1))
        for i, seq in enumerate(seqs)
    ]


# ---------------------------------------------------------------------------
# imputation

def linear_interpolate(seq: MotionSequence) -> np.ndarray:
    """Fill unobserved cells by per-coordinate linear interpolation in time;
    leading/trailing gaps extend the nearest observed value. Observed cells
    are returned untouched."""
    filled = seq.frames.copy()
    t = np.arange(seq.num_frames, dtype=np.float64)
    for j in range(seq.dim):
        col_mask = seq.mask[:, j]
        if col_mask.all():
            continue
        obs = np.flatnonzero(col_mask)
        if obs.size == 0:
            raise DataFormatError(
                f"sequence {seq.id!r}: coordinate {j} has no observed cells"
            )
        gaps = np.flatnonzero(~col_mask)
        filled[gaps, j] = np.interp(t[gaps], t[obs], seq.frames[obs, j])
    return filled


# ---------------------------------------------------------------------------
# file I/O

def save_sequences(seqs: list[MotionSequence], path) -> None:
    with open(path, "w") as fh:
        fh.write(json.dumps({"format": DATASET_FORMAT}, separators=(",", ":")))
        fh.write("\n")
        for seq in seqs:
            flat = seq.frames.reshape(-1)
            flat_mask = seq.mask.reshape(-1)
            record = {
                "id": seq.id,
                "joint_count": seq.joint_count,
                "frames": [float(v) if m else None for v, m in zip(flat, flat_mask)],
                "mask": [int(m) for m in flat_mask],
                "labels": None if seq.labels is None
                else [int(v) for v in seq.labels],
            }
            fh.write(json.dumps(record, separators=(",", ":")))
            fh.write("\n")


def _parse_record(obj: dict, lineno: int) -> MotionSequence:
    try:
        joint_count = int(obj["joint_count"])
        dim = 3 * joint_count
        frames_flat = obj["frames"]
        mask_flat = obj["mask"]
        if len(frames_flat) != len(mask_flat) or len(frames_flat) % dim != 0:
            raise DataFormatError(
                f"line {lineno}: frames/mask lengths inconsistent with "
                f"joint_count {joint_count}"
            )
        num_frames = len(frames_flat) // dim
        frames = np.zeros(len(frames_flat))
        for k, (v, m) in enumerate(zip(frames_flat, mask_flat)):
            if (v is None) != (m == 0):
                raise DataFormatError(
                    f"line {lineno}: null cells must match mask zeros (cell {k})"
                )
            if v is not None:
                frames[k] = float(v)
        labels = obj["labels"]
        return MotionSequence(
            id=str(obj["id"]),
            joint_count=joint_count,
            frames=frames.reshape(num_frames, dim),
            mask=np.asarray(mask_flat, dtype=bool).reshape(num_frames, dim),
            labels=None if labels is None else np.asarray(labels, dtype=bool),
        )
    except DataFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"line {lineno}: malformed record: {exc}") from exc


def load_sequences(path) -> list[MotionSequence]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"line {lineno}: invalid JSON: {exc}") from exc
            if lineno == 1:
                tag = obj.get("format")
                if tag != DATASET_FORMAT:
                    raise DataFormatError(
                        f"line 1: unsupported dataset format {tag!r}"
                    )
                continue
            out.append(_parse_record(obj, lineno))
    return out


# ---------------------------------------------------------------------------
# audit statistics

def dataset_stats(clean: list[MotionSequence],
                  corrupted: list[MotionSequence]) -> dict[str, float]:
    """Measured corruption fractions, for auditing against the spec values.

    Noise is counted on observed cells of frames not labeled abnormal (the
    anomaly episode also changes values); occlusion over all cells.
    """
    by_id = {s.id: s for s in clean}
    total_cells = 0
    masked_cells = 0
    noise_cells = 0
    noise_denom = 0
    anom_frames = 0
    frame_count = 0
    anom_seqs = 0
    for cor in corrupted:
        ref = by_id.get(cor.id)
        if ref is None:
            raise DataFormatError(f"corrupted sequence {cor.id!r} has no clean twin")
        total_cells += cor.mask.size
        masked_cells += int((~cor.mask).sum())
        normal_rows = (np.ones(cor.num_frames, dtype=bool)
                       if cor.labels is None else ~cor.labels)
        consider = cor.mask & normal_rows[:, None]
        noise_denom += int(consider.sum())
        noise_cells += int((cor.frames[consider] != ref.frames[consider]).sum())
        if cor.labels is not None:
            anom_frames += int(cor.labels.sum())
            if cor.labels.any():
                anom_seqs += 1
        frame_count += cor.num_frames
    return {
        "num_sequences": len(corrupted),
        "occlusion_fraction": masked_cells / total_cells if total_cells else 0.0,
        "noise_fraction": noise_cells / noise_denom if noise_denom else 0.0,
        "anomaly_sequence_fraction": anom_seqs / len(corrupted) if corrupted else 0.0,
        "anomaly_frame_fraction": anom_frames / frame_count if frame_count else 0.0,
    }
