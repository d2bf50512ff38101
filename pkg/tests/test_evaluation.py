import pytest
from hypothesis import given
from hypothesis import strategies as st

from completion_moment.data import CompletionAnnotation
from completion_moment.evaluation import (
    EvaluationReport, SequenceRecord, aggregate, render_report, sequence_accuracy, sequence_rd,
    threshold_curve,
)
from oracles import count_accuracy, count_rd


@st.composite
def triples(draw):
    T = draw(st.integers(1, 200))
    return draw(st.integers(1, T + 1)), draw(st.integers(1, T + 1)), T


class TestMetrics:
    def test_perfect(self):
        assert sequence_accuracy(4, 4, 9) == 1.0
        assert sequence_rd(4, 4, 9) == 0.0

    def test_worked_case(self):
        assert sequence_accuracy(7, 5, 10) == pytest.approx(0.8)
        assert sequence_rd(7, 5, 10) == pytest.approx(0.2)

    def test_incomplete_truth(self):
        assert sequence_accuracy(1, 11, 10) == 0.0
        assert sequence_rd(1, 5, 4) == 1.0

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            sequence_accuracy(0, 3, 5)
        with pytest.raises(ValueError):
            sequence_rd(3, 7, 5)

    @given(triples())
    def test_match_frame_counting(self, case):
        tau_p, tau_g, T = case
        assert sequence_accuracy(tau_p, tau_g, T) == count_accuracy(tau_p, tau_g, T)
        assert sequence_rd(tau_p, tau_g, T) == count_rd(tau_p, tau_g, T)

    @given(triples())
    def test_accuracy_one_iff_equal(self, case):
        tau_p, tau_g, T = case
        assert (sequence_accuracy(tau_p, tau_g, T) == 1.0) == (tau_p == tau_g)
        assert 0.0 <= sequence_accuracy(tau_p, tau_g, T) <= 1.0

    @given(st.integers(1, 100), st.data())
    def test_rd_triangle(self, T, data):
        a, b, c = (data.draw(st.integers(1, T + 1)) for _ in range(3))
        assert sequence_rd(a, c, T) <= sequence_rd(a, b, T) + sequence_rd(b, c, T) + 1e-15


def _rec(i, T, tau_p, tau_g):
    return SequenceRecord(f"s{i}", T, tau_p, tau_g)


class TestAggregate:
    def test_mean_accuracy(self):
        recs = [_rec(0, 10, 5, 5), _rec(1, 10, 1, 5)]
        rep = aggregate({"C-R": recs})
        assert rep.groups["C-R"]["total"].accuracy == pytest.approx(0.8)
        assert "80.0" in render_report(rep)

    def test_exact_predictions_curve(self):
        rep = aggregate({"C-C": [_rec(0, 8, 3, 3), _rec(1, 8, 9, 9)]})
        assert rep.curves["C-C"][0] == (0, 1.0)

    def test_curve_sweep(self):
        recs = [_rec(0, 50, 10, 10), _rec(1, 50, 12, 10), _rec(2, 50, 50, 10)]
        curve = dict(threshold_curve(recs))
        assert curve[0] == pytest.approx(1 / 3)
        assert curve[1] == pytest.approx(1 / 3)
        assert curve[2] == pytest.approx(2 / 3)
        assert curve[39] == pytest.approx(2 / 3)
        assert curve[40] == 1.0
        assert max(curve) == 50

    @given(st.lists(triples(), min_size=1, max_size=30))
    def test_curve_monotone_to_one(self, cases):
        recs = [_rec(i, T, p, g) for i, (p, g, T) in enumerate(cases)]
        curve = threshold_curve(recs)
        fracs = [f for _, f in curve]
        assert all(b >= a for a, b in zip(fracs, fracs[1:]))
        assert fracs[-1] == 1.0
        assert curve[-1][0] == max(T for _, _, T in cases)

    @given(st.lists(triples(), min_size=1, max_size=30))
    def test_group_counts(self, cases):
        recs = [_rec(i, T, p, g) for i, (p, g, T) in enumerate(cases)]
        g = aggregate({"C-R": recs}).groups["C-R"]
        n_c = g["complete"].count if g["complete"] else 0
        n_i = g["incomplete"].count if g["incomplete"] else 0
        assert n_c + n_i == g["total"].count == len(recs)
        for stats in g.values():
            if stats:
                assert 0 <= stats.accuracy <= 1 and stats.rd >= 0

    def test_empty_group_absent(self):
        rep = aggregate({"C-R": [_rec(0, 10, 4, 5)]})
        assert rep.groups["C-R"]["incomplete"] is None

    def test_annotation_mismatch(self):
        recs = [_rec(0, 10, 4, 5)]
        with pytest.raises(ValueError):
            aggregate({"C-R": recs}, [CompletionAnnotation.complete("s0", 10, 6)])
        aggregate({"C-R": recs}, [CompletionAnnotation.complete("s0", 10, 5)])


class TestRender:
    def _report(self, action="catch", incomplete=True):
        recs = [_rec(0, 10, 5, 5), _rec(1, 20, 3, 6)]
        if incomplete:
            recs.append(_rec(2, 10, 11, 11))
        return aggregate({s: recs for s in ("Pre-V", "LastR", "C-C", "R-R", "R-C", "C-R")},
                         action=action)

    def test_empty_incomplete_group_dash(self):
        text = render_report(self._report(incomplete=False), "accuracy")
        row = [l for l in text.splitlines() if "incomplete" in l][0]
        assert row.split()[1:] == ["0"] + ["-"] * 6
        text = render_report(self._report(incomplete=False), "rd")
        row = [l for l in text.splitlines() if "incomplete" in l][0]
        assert row.split().count("-") == 6

    def test_single_scheme_single_action(self):
        rep = aggregate({"C-R": [_rec(0, 10, 5, 5)]}, action="pick")
        lines = render_report(rep).splitlines()
        assert sum(1 for l in lines if l.startswith("pick")) == 1

    def test_deterministic(self):
        assert render_report(self._report()) == render_report(self._report())

    def test_column_set(self):
        header = render_report(self._report()).splitlines()[0]
        for name in ("Pre-V", "V_R^T", "C-C", "R-R", "R-C", "C-R"):
            assert f"Acc {name}" in header and f"RD {name}" in header

    def test_formatting(self):
        text = render_report(self._report(), "summary")
        # accuracy (1 + 0.85 + 1)/3 -> 95.0, rd (0 + 0.15 + 0)/3 -> 0.05
        row = [l for l in text.splitlines() if l.startswith("catch")][0].split()
        assert row[2] == "95.0" and row[8] == "0.05"

    def test_curve_csv(self):
        text = render_report(self._report(), "curve", scheme="C-R")
        lines = text.splitlines()
        assert lines[0] == "threshold,fraction"
        assert lines[1] == "0,0.6666666667"
        assert lines[-1] == "20,1"

    def test_multi_action_rows(self):
        reps = [self._report(a) for a in ("a1", "a2", "a3")]
        lines = render_report(reps).splitlines()
        assert [l.split()[0] for l in lines[2:]] == ["a1", "a2", "a3", "-" * len(lines[1]),
                                                     "complete", "incomplete", "total"]

    def test_scheme_mismatch(self):
        a = self._report()
        b = aggregate({"C-R": a.records["C-R"]}, action="x")
        with pytest.raises(ValueError, match="scheme mismatch"):
            render_report([a, b])

    def test_json_round_trip(self, tmp_path):
        rep = self._report()
        rep.save(tmp_path / "r.json")
        back = EvaluationReport.load(tmp_path / "r.json")
        assert render_report(back) == render_report(rep)
        assert back.curves == rep.curves
