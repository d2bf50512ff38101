"""Sequence-level vote accumulation and completion-moment prediction."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .data import POST, PRE
from .network import FrameOutput
from .voting import VoteParams, classification_vote, regression_vote


class Scheme(str, Enum):
    """Which vote each frame casts: ``<pre-frame vote>-<post-frame vote>``."""

    CC = "C-C"
    RR = "R-R"
    RC = "R-C"
    CR = "C-R"
    PRE_V = "Pre-V"
    LAST_R = "LastR"

    @classmethod
    def parse(cls, name: str) -> "Scheme":
        for s in cls:
            if s.value.lower() == name.strip().lower():
                return s
        if name.strip() in ("V_R^T", "VRT"):
            return cls.LAST_R
        raise ValueError(f"unknown scheme {name!r}; expected one of {[s.value for s in cls]}")

    @property
    def is_voting(self) -> bool:
        return self in VOTING_SCHEMES

    @property
    def label(self) -> str:
        return "V_R^T" if self is Scheme.LAST_R else self.value


VOTING_SCHEMES = (Scheme.CC, Scheme.RR, Scheme.RC, Scheme.CR)
ALL_SCHEMES = (Scheme.PRE_V, Scheme.LAST_R, *VOTING_SCHEMES)

# (vote for pre-classified frames, vote for post-classified frames)
_ROUTES = {
    Scheme.CC: ("C", "C"),
    Scheme.RR: ("R", "R"),
    Scheme.RC: ("R", "C"),
    Scheme.CR: ("C", "R"),
}


@dataclass(frozen=True)
class MomentPrediction:
    tau_p: int
    T: int
    vote_vector: np.ndarray | None = None

    @property
    def is_complete(self) -> bool:
        return self.tau_p <= self.T


def frame_vote(t: int, out: FrameOutput, T: int, scheme: Scheme,
               params: VoteParams = VoteParams()) -> np.ndarray:
    """The vote frame ``t`` (1-based) casts under ``scheme``."""
    pre_kind, post_kind = _ROUTES[Scheme(scheme)]
    kind = post_kind if out.cls == POST else pre_kind
    if kind == "C":
        return classification_vote(t, out.cls, T)
    return regression_vote(t, out.R, T, params)


def accumulate(outputs: Sequence[FrameOutput], T: int, scheme: Scheme,
               params: VoteParams = VoteParams()) -> np.ndarray:
    scheme = Scheme(scheme)
    if not scheme.is_voting:
        raise ValueError(f"{scheme.value} is not an accumulation scheme")
    if len(outputs) != T:
        raise ValueError(f"{len(outputs)} frame outputs for T={T}")
    total = np.zeros(T + 1)
    for t, out in enumerate(outputs, 1):
        total += frame_vote(t, out, T, scheme, params)
    return total


def predict_moment(vote: np.ndarray) -> MomentPrediction:
    """Bin with the largest accumulated vote; ties go to the earliest bin."""
    vote = np.asarray(vote, dtype=np.float64)
    if vote.ndim != 1 or vote.size < 2:
        raise ValueError("vote vector must be 1-d with length T+1 >= 2")
    tau_p = int(np.argmax(vote)) + 1  # argmax returns the first maximum
    return MomentPrediction(tau_p, vote.size - 1, vote)


def baseline_pre_voting(outputs: Sequence[FrameOutput], T: int) -> MomentPrediction:
    """First frame classified post-completion, or ``T+1`` if there is none."""
    if len(outputs) != T:
        raise ValueError(f"{len(outputs)} frame outputs for T={T}")
    for t, out in enumerate(outputs, 1):
        if out.cls == POST:
            return MomentPrediction(t, T)
    return MomentPrediction(T + 1, T)


def baseline_last_frame_regression(outputs: Sequence[FrameOutput], T: int,
                                   params: VoteParams = VoteParams()) -> MomentPrediction:
    if len(outputs) != T:
        raise ValueError(f"{len(outputs)} frame outputs for T={T}")
    return predict_moment(regression_vote(T, outputs[-1].R, T, params))


def predict(outputs: Sequence[FrameOutput], T: int, scheme: Scheme,
            params: VoteParams = VoteParams()) -> MomentPrediction:
    """Prediction under any scheme, baselines included."""
    scheme = Scheme(scheme)
    if scheme is Scheme.PRE_V:
        return baseline_pre_voting(outputs, T)
    if scheme is Scheme.LAST_R:
        return baseline_last_frame_regression(outputs, T, params)
    return predict_moment(accumulate(outputs, T, scheme, params))
