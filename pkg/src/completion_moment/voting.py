"""Per-frame votes over candidate completion positions ``j = 1 .. T+1``.

Vote vectors are numpy arrays of length ``T + 1``; array index ``k`` holds
bin ``j = k + 1`` and the last bin means "incomplete".
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import POST, PRE

SINGULAR_DELTA = 1e-5


@dataclass(frozen=True)
class VoteParams:
    """Regression vote shape: Gaussian width, amplitude and window fraction."""

    sigma: float = 30.0
    beta: float = 0.5
    alpha: float = 0.1

    def validate(self) -> None:
        if not self.sigma > 0:
            raise ValueError("sigma must be > 0")
        if not self.beta > 0:
            raise ValueError("beta must be > 0")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")


def _check_frame(t: int, T: int) -> None:
    if not 1 <= t <= T:
        raise ValueError(f"frame index t={t} outside [1, {T}]")


def classification_vote(t: int, cls: int, T: int) -> np.ndarray:
    """Uniform unit vote over the split believed to hold the completion moment.

    A pre-completion frame votes for ``t+1 .. T+1``, a post-completion frame
    for ``1 .. t``.
    """
    _check_frame(t, T)
    vote = np.zeros(T + 1)
    if cls == PRE:
        vote[t:] = 1.0 / (T - t + 1)
    elif cls == POST:
        vote[:t] = 1.0 / t
    else:
        raise ValueError(f"unknown class {cls!r}")
    return vote


def predicted_moment(t: int, R: float, T: int | None = None) -> float:
    """Completion position implied by relative time ``R`` at frame ``t``: ``t / (R + 1)``.

    For ``R <= -1 + SINGULAR_DELTA`` the moment is unbounded and ``inf`` is
    returned. With ``T`` given the result is clamped to ``[1, T + 1]``.
    """
    if R > -1.0 + SINGULAR_DELTA:
        f = t / (R + 1.0)
    else:
        f = math.inf
    if T is not None:
        f = min(max(f, 1.0), float(T + 1))
    return f


def regression_window(mu: float, T: int, alpha: float) -> tuple[int, int]:
    """Inclusive integer bin range ``[lo, hi]`` of the vote window around ``mu``.

    A window narrower than one bin still keeps the bin nearest ``mu``
    (the earlier one on a tie), so a vote is never empty.
    """
    half = alpha * T / 2.0
    lo = max(1, math.ceil(mu - half))
    hi = min(T + 1, math.floor(mu + half))
    if lo > hi:
        lo = hi = min(T + 1, max(1, math.ceil(mu - 0.5)))
    return lo, hi


def regression_vote(t: int, R: float, T: int, params: VoteParams = VoteParams()) -> np.ndarray:
    _check_frame(t, T)
    mu = predicted_moment(t, R, T)
    vote = np.zeros(T + 1)
    lo, hi = regression_window(mu, T, params.alpha)
    if lo <= hi:
        j = np.arange(lo, hi + 1, dtype=np.float64)
        vote[lo - 1:hi] = params.beta * np.exp(-((j - mu) ** 2) / (2.0 * params.sigma ** 2))
    return vote
