import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from completion_moment.data import POST, PRE
from completion_moment.voting import (
    VoteParams, classification_vote, predicted_moment, regression_vote, regression_window,
)
from oracles import brute_classification_vote, brute_regression_vote


class TestClassificationVote:
    def test_pre(self):
        assert classification_vote(2, PRE, 4) == pytest.approx([0, 0, 1 / 3, 1 / 3, 1 / 3])

    def test_post(self):
        assert classification_vote(3, POST, 4) == pytest.approx([1 / 3, 1 / 3, 1 / 3, 0, 0])

    def test_last_frame_pre_votes_incomplete(self):
        assert np.array_equal(classification_vote(4, PRE, 4), [0, 0, 0, 0, 1])

    def test_frame_out_of_range(self):
        with pytest.raises(ValueError):
            classification_vote(0, PRE, 4)

    @given(T=st.integers(1, 60), data=st.data())
    def test_unit_mass_on_one_side(self, T, data):
        t = data.draw(st.integers(1, T))
        cls = data.draw(st.sampled_from([PRE, POST]))
        v = classification_vote(t, cls, T)
        assert len(v) == T + 1
        assert abs(v.sum() - 1.0) < 1e-9
        if cls == PRE:
            assert np.all(v[:t] == 0)
        else:
            assert np.all(v[t:] == 0)


class TestPredictedMoment:
    def test_arithmetic(self):
        assert predicted_moment(6, 0.2) == pytest.approx(5.0)

    def test_zero_offset(self):
        assert predicted_moment(7, 0.0) == 7.0

    def test_singular_clamps_to_incomplete(self):
        assert predicted_moment(4, -0.999999, T=10) == 11.0
        assert math.isinf(predicted_moment(4, -0.999999))
        assert predicted_moment(4, -3.0, T=10) == 11.0

    def test_clamped_below(self):
        assert predicted_moment(1, 100.0, T=10) == 1.0

    @given(t=st.integers(1, 100), a=st.floats(-0.999, 1e6), b=st.floats(-0.999, 1e6))
    def test_decreasing_in_R(self, t, a, b):
        lo, hi = sorted((a, b))
        assert predicted_moment(t, lo) >= predicted_moment(t, hi)


class TestRegressionVote:
    def test_centre_bin(self):
        # t=5, R=0 puts the centre on bin 5
        v = regression_vote(5, 0.0, 100, VoteParams(30.0, 0.5, 0.1))
        assert v[4] == 0.5

    def test_three_frames_off_centre(self):
        v = regression_vote(5, 0.0, 100, VoteParams(30.0, 0.5, 0.1))
        assert v[7] == pytest.approx(0.5 * math.exp(-9 / 1800), rel=1e-15)
        assert v[7] == pytest.approx(0.4975062395963412, rel=1e-12)

    def test_window_width(self):
        # T=20, alpha=0.1: window [mu-1, mu+1] holds 3 bins at an integer centre, 2 otherwise
        assert np.count_nonzero(regression_vote(10, 0.0, 20)) == 3
        assert np.count_nonzero(regression_vote(10, 0.05, 20)) == 2
        assert regression_window(10.0, 20, 0.1) == (9, 11)

    def test_narrow_window_keeps_nearest_bin(self):
        v = regression_vote(2, 0.0, 4)
        assert np.flatnonzero(v).tolist() == [1]

    @given(T=st.integers(1, 40), R=st.sampled_from([-0.9999, 1e6, -5.0, 0.0, 3.0]) | st.floats(-2, 50),
           data=st.data())
    def test_shape_and_bounds(self, T, R, data):
        t = data.draw(st.integers(1, T))
        params = VoteParams()
        v = regression_vote(t, R, T, params)
        assert len(v) == T + 1
        assert np.all(np.isfinite(v)) and np.all(v >= 0)
        assert v.max() <= params.beta
        mu = predicted_moment(t, R, T)
        nz = np.flatnonzero(v) + 1
        assert nz.size >= 1
        # non-increasing away from the centre
        order = np.argsort(np.abs(nz - mu), kind="stable")
        vals = v[nz[order] - 1]
        assert np.all(np.diff(vals) <= 1e-15)
        peak = nz[np.argmax(v[nz - 1])]
        assert abs(peak - mu) <= min(abs(j - mu) for j in nz) + 1e-12


def test_vote_params_validation():
    for bad in (VoteParams(sigma=0), VoteParams(beta=0), VoteParams(alpha=0), VoteParams(alpha=1.5)):
        with pytest.raises(ValueError):
            bad.validate()
    VoteParams().validate()


@given(T=st.integers(1, 12), data=st.data())
def test_votes_match_brute_force(T, data):
    t = data.draw(st.integers(1, T))
    is_post = data.draw(st.booleans())
    R = data.draw(st.floats(-1.5, 20))
    got_c = classification_vote(t, POST if is_post else PRE, T)
    assert np.max(np.abs(got_c - brute_classification_vote(t, is_post, T))) <= 1e-9
    got_r = regression_vote(t, R, T)
    assert np.max(np.abs(got_r - brute_regression_vote(t, R, T))) <= 1e-9
