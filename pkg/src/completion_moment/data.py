"""Sequences, completion annotations, on-disk formats, splits and synthetic data.

Completion moments are 1-based frame indices. An incomplete sequence of
length ``T`` carries the sentinel ``tau = T + 1`` everywhere in the package.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .seeding import rng_for

FEATURE_MAGIC = b"CMV1"
FEATURE_SUFFIX = ".cmv"
_HEADER = struct.Struct("<4sII")

PRE = 0
POST = 1


class DataError(ValueError):
    """Malformed or inconsistent dataset input."""

    def __init__(self, sequence_id: str | None, message: str):
        self.sequence_id = sequence_id
        prefix = f"{sequence_id}: " if sequence_id is not None else ""
        super().__init__(prefix + message)


class MissingAnnotationError(DataError):
    pass


class DimensionMismatchError(DataError):
    pass


class NonFiniteValueError(DataError):
    pass


class TauOutOfRangeError(DataError):
    pass


class MissingSubjectError(DataError):
    pass


@dataclass(frozen=True, eq=False)
class FeatureSequence:
    """Per-frame feature vectors of one sequence, shape ``(T, d)``, float32."""

    id: str
    frames: np.ndarray
    subject: str | None = None

    def __post_init__(self) -> None:
        frames = np.ascontiguousarray(self.frames, dtype=np.float32)
        if frames.ndim != 2:
            raise DimensionMismatchError(self.id, "frames must be a 2-d array (T, d)")
        if frames.shape[0] < 2 or frames.shape[1] < 1:
            raise DimensionMismatchError(
                self.id, f"need T >= 2 and d >= 1, got shape {frames.shape}"
            )
        if not np.all(np.isfinite(frames)):
            raise NonFiniteValueError(self.id, "non-finite value in features")
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)

    @property
    def T(self) -> int:
        return int(self.frames.shape[0])

    @property
    def d(self) -> int:
        return int(self.frames.shape[1])


@dataclass(frozen=True)
class CompletionAnnotation:
    sequence_id: str
    T: int
    tau: int

    def __post_init__(self) -> None:
        if not 1 <= self.tau <= self.T + 1:
            raise TauOutOfRangeError(
                self.sequence_id, f"tau out of range: tau={self.tau}, T={self.T}"
            )

    @classmethod
    def complete(cls, sequence_id: str, T: int, tau: int) -> "CompletionAnnotation":
        if not 1 <= tau <= T:
            raise TauOutOfRangeError(sequence_id, f"tau out of range: tau={tau}, T={T}")
        return cls(sequence_id, T, tau)

    @classmethod
    def incomplete(cls, sequence_id: str, T: int) -> "CompletionAnnotation":
        return cls(sequence_id, T, T + 1)

    @property
    def is_complete(self) -> bool:
        return self.tau <= self.T


@dataclass(frozen=True)
class FrameLabel:
    t: int
    y: int
    r: float | None


@dataclass(frozen=True)
class DatasetSplit:
    train_ids: tuple[str, ...]
    test_ids: tuple[str, ...]
    policy: str
    subject: str | None = None

    def __post_init__(self) -> None:
        overlap = set(self.train_ids) & set(self.test_ids)
        if overlap:
            raise DataError(sorted(overlap)[0], "id appears in both train and test")


def frame_labels(annotation: CompletionAnnotation, T: int) -> list[FrameLabel]:
    """Per-frame class and relative-time targets.

    Frames ``t >= tau`` are post-completion. The regression target is
    ``(t - tau) / tau`` and is left out (``None``) for incomplete sequences,
    whose frames are trained by the classification loss only.
    """
    if annotation.T != T:
        raise DimensionMismatchError(
            annotation.sequence_id, f"annotation T={annotation.T} but sequence T={T}"
        )
    tau = annotation.tau
    if not annotation.is_complete:
        return [FrameLabel(t, PRE, None) for t in range(1, T + 1)]
    return [
        FrameLabel(t, POST if t >= tau else PRE, (t - tau) / tau) for t in range(1, T + 1)
    ]


def label_arrays(labels: Sequence[FrameLabel]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(y, r, has_r)`` as float64 arrays; missing targets are stored as 0."""
    y = np.array([lab.y for lab in labels], dtype=np.float64)
    has_r = np.array([lab.r is not None for lab in labels], dtype=bool)
    r = np.array([lab.r if lab.r is not None else 0.0 for lab in labels], dtype=np.float64)
    return y, r, has_r


# ---------------------------------------------------------------------------
# on-disk formats


def write_sequence(path: str | Path, seq: FeatureSequence) -> None:
    body = np.ascontiguousarray(seq.frames, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(FEATURE_MAGIC, seq.T, seq.d))
        fh.write(body.tobytes(order="C"))


def read_sequence(path: str | Path, sequence_id: str | None = None,
                  subject: str | None = None) -> FeatureSequence:
    path = Path(path)
    sid = sequence_id if sequence_id is not None else path.stem
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise DataError(sid, f"truncated feature file {path}")
    magic, T, d = _HEADER.unpack_from(raw)
    if magic != FEATURE_MAGIC:
        raise DataError(sid, f"bad magic {magic!r} in {path}")
    expected = _HEADER.size + 4 * T * d
    if len(raw) != expected:
        raise DataError(sid, f"feature file {path} has {len(raw)} bytes, expected {expected}")
    frames = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(T, d)
    return FeatureSequence(sid, frames.astype(np.float32), subject)


def annotation_record(ann: CompletionAnnotation, subject: str | None = None) -> dict:
    rec = {"id": ann.sequence_id, "T": ann.T, "tau": ann.tau if ann.is_complete else None}
    if subject is not None:
        rec["subject"] = subject
    return rec


def write_annotations(path: str | Path, annotations: Iterable[CompletionAnnotation],
                      subjects: Mapping[str, str | None] | None = None) -> None:
    subjects = subjects or {}
    with open(path, "w", encoding="utf-8") as fh:
        for ann in annotations:
            rec = annotation_record(ann, subjects.get(ann.sequence_id))
            fh.write(json.dumps(rec) + "\n")


def read_annotations(path: str | Path) -> list[tuple[CompletionAnnotation, str | None]]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                sid, T, tau = str(rec["id"]), int(rec["T"]), rec["tau"]
            except (ValueError, KeyError, TypeError) as exc:
                raise DataError(None, f"{path}:{lineno}: malformed annotation ({exc})") from exc
            if tau is None:
                ann = CompletionAnnotation.incomplete(sid, T)
            else:
                ann = CompletionAnnotation.complete(sid, T, int(tau))
            out.append((ann, rec.get("subject")))
    return out


def load_dataset(features_path: str | Path, annotations_path: str | Path
                 ) -> tuple[list[FeatureSequence], list[CompletionAnnotation]]:
    """Load every ``<id>.cmv`` under ``features_path`` with its annotation.

    Sequences are returned sorted by id, annotations in the same order.
    """
    features_path = Path(features_path)
    annotations_path = Path(annotations_path)
    if not features_path.is_dir():
        raise FileNotFoundError(f"feature directory not found: {features_path}")
    if not annotations_path.is_file():
        raise FileNotFoundError(f"annotation file not found: {annotations_path}")

    by_id: dict[str, tuple[CompletionAnnotation, str | None]] = {}
    for ann, subject in read_annotations(annotations_path):
        if ann.sequence_id in by_id:
            raise DataError(ann.sequence_id, "duplicate annotation")
        by_id[ann.sequence_id] = (ann, subject)

    sequences, annotations = [], []
    dim = None
    for path in sorted(features_path.glob("*" + FEATURE_SUFFIX)):
        sid = path.stem
        if sid not in by_id:
            raise MissingAnnotationError(sid, "missing annotation")
        ann, subject = by_id[sid]
        seq = read_sequence(path, sid, subject)
        if seq.T != ann.T:
            raise DimensionMismatchError(sid, f"annotation T={ann.T} but file has T={seq.T}")
        if dim is None:
            dim = seq.d
        elif seq.d != dim:
            raise DimensionMismatchError(sid, f"feature dimension {seq.d} != dataset dimension {dim}")
        sequences.append(seq)
        annotations.append(ann)
    missing = sorted(set(by_id) - {s.id for s in sequences})
    if missing:
        raise DataError(missing[0], "annotation without a feature file")
    return sequences, annotations


def save_dataset(root: str | Path, sequences: Sequence[FeatureSequence],
                 annotations: Sequence[CompletionAnnotation]) -> tuple[Path, Path]:
    """Write ``root/features/<id>.cmv`` and ``root/annotations.jsonl``."""
    root = Path(root)
    feat_dir = root / "features"
    feat_dir.mkdir(parents=True, exist_ok=True)
    for seq in sequences:
        write_sequence(feat_dir / f"{seq.id}{FEATURE_SUFFIX}", seq)
    ann_path = root / "annotations.jsonl"
    write_annotations(ann_path, annotations, {s.id: s.subject for s in sequences})
    return feat_dir, ann_path


# ---------------------------------------------------------------------------
# splits


def read_split_file(path: str | Path) -> dict[str, str]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"split file not found: {path}")
    roles = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            rec = json.loads(line)
            if rec.get("role") not in ("train", "test"):
                raise DataError(rec.get("id"), f"{path}:{lineno}: role must be train or test")
            roles[str(rec["id"])] = rec["role"]
    return roles


def write_split_file(path: str | Path, split: DatasetSplit) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sid in split.train_ids:
            fh.write(json.dumps({"id": sid, "role": "train"}) + "\n")
        for sid in split.test_ids:
            fh.write(json.dumps({"id": sid, "role": "test"}) + "\n")


def make_split(sequences: Sequence[FeatureSequence], policy: str,
               roles: Mapping[str, str] | None = None) -> DatasetSplit | list[DatasetSplit]:
    """Build a fixed split from ``roles`` or one split per subject.

    ``policy`` is ``"fixed"`` (``roles`` maps id -> "train"/"test") or
    ``"leave-one-person-out"``, which needs ``subject`` on every sequence.
    """
    ids = [s.id for s in sequences]
    if policy == "fixed":
        if roles is None:
            raise ValueError("fixed split needs a role for every id")
        known = set(ids)
        for sid in roles:
            if sid not in known:
                raise MissingAnnotationError(sid, "split lists an unknown sequence")
        train = tuple(i for i in ids if roles.get(i) == "train")
        test = tuple(i for i in ids if roles.get(i) == "test")
        return DatasetSplit(train, test, "fixed")
    if policy == "leave-one-person-out":
        for s in sequences:
            if s.subject is None:
                raise MissingSubjectError(s.id, "missing subject metadata for leave-one-person-out")
        splits = []
        for subject in sorted({s.subject for s in sequences}):
            test = tuple(s.id for s in sequences if s.subject == subject)
            train = tuple(s.id for s in sequences if s.subject != subject)
            splits.append(DatasetSplit(train, test, policy, subject))
        return splits
    raise ValueError(f"unknown split policy {policy!r}")


# ---------------------------------------------------------------------------
# synthetic data


@dataclass(frozen=True)
class SynthConfig:
    """Shape of a synthetic completion dataset.

    Feature 0 carries a monotone progress signal that reaches 1.0 exactly at
    the completion frame; before completion its curvature is random per
    sequence, afterwards it grows as ``t / tau``. Incomplete sequences plateau
    below ``inc_peak[1]``. Every coordinate gets isotropic Gaussian noise.
    """

    n_sequences: int = 100
    d: int = 8
    t_min: int = 20
    t_max: int = 60
    p_inc: float = 0.5
    noise: float = 0.05
    tau_frac: tuple[float, float] = (0.3, 0.8)
    warp: tuple[float, float] = (0.5, 2.0)
    inc_peak: tuple[float, float] = (0.3, 0.75)
    n_subjects: int = 5
    threshold: float = 1.0

    def validate(self) -> None:
        if self.n_sequences < 1:
            raise ValueError("n_sequences must be >= 1")
        if self.d < 2:
            raise ValueError("d must be >= 2")
        if not 2 <= self.t_min <= self.t_max:
            raise ValueError("need 2 <= t_min <= t_max")
        if not 0.0 <= self.p_inc <= 1.0:
            raise ValueError("p_inc must lie in [0, 1]")
        if not (math.isfinite(self.noise) and self.noise >= 0):
            raise ValueError("noise must be finite and >= 0")
        lo, hi = self.tau_frac
        if not 0.0 < lo <= hi <= 1.0:
            raise ValueError("tau_frac must satisfy 0 < lo <= hi <= 1")
        if not 0.0 < self.warp[0] <= self.warp[1]:
            raise ValueError("warp must satisfy 0 < lo <= hi")
        if not 0.0 <= self.inc_peak[0] <= self.inc_peak[1] < self.threshold:
            raise ValueError("inc_peak must stay below the threshold")
        if self.n_subjects < 1:
            raise ValueError("n_subjects must be >= 1")


def _progress(T: int, tau: int | None, rng: np.random.Generator, cfg: SynthConfig) -> np.ndarray:
    t = np.arange(1, T + 1, dtype=np.float64)
    gamma = rng.uniform(*cfg.warp)
    if tau is None:
        peak = rng.uniform(*cfg.inc_peak)
        return peak * (t / T) ** gamma
    pre = (t / tau) ** gamma
    post = t / tau
    return np.where(t < tau, pre, post) * cfg.threshold


def synthesize_dataset(config: SynthConfig, seed: int
                       ) -> tuple[list[FeatureSequence], list[CompletionAnnotation]]:
    config.validate()
    rng = rng_for(seed, "synth")
    sequences, annotations = [], []
    width = max(4, len(str(config.n_sequences - 1)))
    for i in range(config.n_sequences):
        sid = f"seq{i:0{width}d}"
        T = int(rng.integers(config.t_min, config.t_max + 1))
        incomplete = bool(rng.random() < config.p_inc)
        if incomplete:
            tau = None
        else:
            lo = max(1, math.ceil(config.tau_frac[0] * T))
            hi = max(lo, min(T, math.floor(config.tau_frac[1] * T)))
            tau = int(rng.integers(lo, hi + 1))
        frames = rng.normal(0.0, config.noise, size=(T, config.d))
        frames[:, 0] += _progress(T, tau, rng, config)
        subject = f"s{i % config.n_subjects}"
        sequences.append(FeatureSequence(sid, frames.astype(np.float32), subject))
        annotations.append(
            CompletionAnnotation.incomplete(sid, T) if tau is None
            else CompletionAnnotation.complete(sid, T, tau)
        )
    return sequences, annotations
