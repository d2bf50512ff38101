"""Forward a trained node over test sequences and score every scheme."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .aggregation import ALL_SCHEMES, Scheme, accumulate, predict
from .data import CompletionAnnotation, FeatureSequence
from .evaluation import EvaluationReport, SequenceRecord, aggregate
from .network import FrameOutput, ModelParams, forward_sequence
from .voting import VoteParams


@dataclass(frozen=True)
class Prediction:
    id: str
    scheme: str
    tau_p: int
    is_complete: bool
    tau_g: int

    def to_dict(self) -> dict:
        return {"id": self.id, "scheme": self.scheme, "tau_p": self.tau_p,
                "is_complete": self.is_complete, "tau_g": self.tau_g}


def predict_all(outputs: Sequence[FrameOutput], T: int, schemes: Sequence[Scheme],
                vote_params: VoteParams) -> dict[Scheme, int]:
    return {s: predict(outputs, T, s, vote_params).tau_p for s in schemes}


def evaluate(params: ModelParams, sequences: Sequence[FeatureSequence],
             annotations: Sequence[CompletionAnnotation],
             schemes: Sequence[Scheme] = ALL_SCHEMES,
             vote_params: VoteParams = VoteParams(),
             action: str = "action", workers: int = 1
             ) -> tuple[EvaluationReport, list[Prediction]]:
    """Predict every scheme on every sequence; ``workers > 1`` forwards in threads."""
    schemes = [Scheme(s) for s in schemes]
    for seq, ann in zip(sequences, annotations):
        if seq.id != ann.sequence_id:
            raise ValueError(f"sequence {seq.id} paired with annotation {ann.sequence_id}")
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            all_outputs = list(pool.map(lambda s: forward_sequence(params, s), sequences))
    else:
        all_outputs = [forward_sequence(params, s) for s in sequences]

    records: dict[str, list[SequenceRecord]] = {s.value: [] for s in schemes}
    preds = []
    for seq, ann, outputs in zip(sequences, annotations, all_outputs):
        for s, tau_p in predict_all(outputs, seq.T, schemes, vote_params).items():
            records[s.value].append(SequenceRecord(seq.id, seq.T, tau_p, ann.tau))
            preds.append(Prediction(seq.id, s.value, tau_p, tau_p <= seq.T, ann.tau))
    report = aggregate(records, annotations, action=action, schemes=[s.value for s in schemes])
    return report, preds


def vote_vector(params: ModelParams, seq: FeatureSequence, scheme: Scheme,
                vote_params: VoteParams = VoteParams()) -> np.ndarray:
    return accumulate(forward_sequence(params, seq), seq.T, Scheme(scheme), vote_params)
