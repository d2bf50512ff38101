"""Accuracy and relative-distance metrics, grouped reports and threshold curves."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

GROUPS = ("complete", "incomplete", "total")


def _check_taus(tau_p: int, tau_g: int, T: int) -> None:
    if T < 1:
        raise ValueError("T must be >= 1")
    for name, tau in (("tau_p", tau_p), ("tau_g", tau_g)):
        if not 1 <= tau <= T + 1:
            raise ValueError(f"{name}={tau} outside [1, {T + 1}]")


def sequence_accuracy(tau_p: int, tau_g: int, T: int) -> float:
    """Fraction of frames on the same side of both moments.

    Frames strictly between the two moments are the only inconsistent ones,
    so this is ``1 - |tau_p - tau_g| / T`` for moments in ``[1, T+1]``.
    """
    _check_taus(tau_p, tau_g, T)
    return (T - abs(tau_p - tau_g)) / T


def sequence_rd(tau_p: int, tau_g: int, T: int) -> float:
    _check_taus(tau_p, tau_g, T)
    return abs(tau_p - tau_g) / T


@dataclass(frozen=True)
class SequenceRecord:
    id: str
    T: int
    tau_p: int
    tau_g: int

    @property
    def is_complete(self) -> bool:
        return self.tau_g <= self.T

    @property
    def predicted_complete(self) -> bool:
        return self.tau_p <= self.T

    @property
    def accuracy(self) -> float:
        return sequence_accuracy(self.tau_p, self.tau_g, self.T)

    @property
    def rd(self) -> float:
        return sequence_rd(self.tau_p, self.tau_g, self.T)

    @property
    def offset(self) -> int:
        return abs(self.tau_p - self.tau_g)


@dataclass(frozen=True)
class GroupStats:
    count: int
    accuracy: float
    rd: float


def group_stats(records: Sequence[SequenceRecord]) -> dict[str, GroupStats | None]:
    """Unweighted means per group; a group with no sequences maps to ``None``."""
    buckets = {
        "complete": [r for r in records if r.is_complete],
        "incomplete": [r for r in records if not r.is_complete],
        "total": list(records),
    }
    out: dict[str, GroupStats | None] = {}
    for name, recs in buckets.items():
        if not recs:
            out[name] = None
            continue
        out[name] = GroupStats(
            len(recs),
            sum(r.accuracy for r in recs) / len(recs),
            sum(r.rd for r in recs) / len(recs),
        )
    return out


def threshold_curve(records: Sequence[SequenceRecord], max_x: int | None = None
                    ) -> list[tuple[int, float]]:
    """Fraction of sequences with ``|tau_p - tau_g| <= x`` for ``x = 0 .. max_x``.

    ``max_x`` defaults to the longest sequence, where the curve is 1.0.
    """
    if not records:
        return []
    if max_x is None:
        max_x = max(r.T for r in records)
    offsets = sorted(r.offset for r in records)
    n = len(offsets)
    curve = []
    k = 0
    for x in range(max_x + 1):
        while k < n and offsets[k] <= x:
            k += 1
        curve.append((x, k / n))
    return curve


@dataclass
class EvaluationReport:
    """Per-scheme records, group statistics and threshold curves for one action."""

    action: str
    schemes: list[str]
    records: dict[str, list[SequenceRecord]]
    groups: dict[str, dict[str, GroupStats | None]] = field(default_factory=dict)
    curves: dict[str, list[tuple[int, float]]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "action": self.action,
            "schemes": list(self.schemes),
            "records": {s: [asdict(r) for r in recs] for s, recs in self.records.items()},
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "EvaluationReport":
        records = {
            s: [SequenceRecord(**r) for r in recs] for s, recs in data["records"].items()
        }
        return aggregate(records, action=data["action"], schemes=data["schemes"])

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "EvaluationReport":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def aggregate(records: Mapping[str, Sequence[SequenceRecord]], annotations=None,
              action: str = "action", schemes: Sequence[str] | None = None) -> EvaluationReport:
    """Build a report from per-scheme sequence records.

    ``annotations``, when given, must cover exactly the recorded sequences
    with matching ground truth.
    """
    schemes = list(schemes) if schemes is not None else list(records)
    if set(schemes) != set(records):
        raise ValueError("scheme list does not match the recorded schemes")
    if annotations is not None:
        truth = {a.sequence_id: a.tau for a in annotations}
        for s, recs in records.items():
            if {r.id for r in recs} != set(truth) or len(recs) != len(truth):
                raise ValueError(f"scheme {s}: records do not match the annotated sequences")
            for r in recs:
                if truth[r.id] != r.tau_g:
                    raise ValueError(f"{r.id}: recorded tau_g {r.tau_g} != annotation {truth[r.id]}")
    recs = {s: list(records[s]) for s in schemes}
    return EvaluationReport(
        action=action,
        schemes=schemes,
        records=recs,
        groups={s: group_stats(recs[s]) for s in schemes},
        curves={s: threshold_curve(recs[s]) for s in schemes},
    )


# ---------------------------------------------------------------------------
# rendering

_LABELS = {"LastR": "V_R^T"}


def scheme_label(scheme: str) -> str:
    return _LABELS.get(scheme, scheme)


def _fmt_acc(stats: GroupStats | None) -> str:
    return "-" if stats is None else f"{100.0 * stats.accuracy:.1f}"


def _fmt_rd(stats: GroupStats | None) -> str:
    return "-" if stats is None else f"{stats.rd:.2f}"


def check_compatible(reports: Sequence[EvaluationReport]) -> list[str]:
    if not reports:
        raise ValueError("no reports to render")
    schemes = list(reports[0].schemes)
    for rep in reports[1:]:
        if list(rep.schemes) != schemes:
            raise ValueError(
                f"scheme mismatch: {rep.action} has {rep.schemes}, expected {schemes}"
            )
    return schemes


def pooled_groups(reports: Sequence[EvaluationReport]) -> dict[str, dict[str, GroupStats | None]]:
    schemes = check_compatible(reports)
    return {
        s: group_stats([r for rep in reports for r in rep.records[s]]) for s in schemes
    }


def _table(header: list[str], rows: list[list[str]], rule_before: Iterable[int] = ()) -> str:
    widths = [max(len(row[i]) for row in [header, *rows]) for i in range(len(header))]
    rule_before = set(rule_before)

    def fmt(row):
        cells = [row[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(row[1:], widths[1:])]
        return "  ".join(cells).rstrip()

    rule = "-" * len(fmt(header))
    lines = [fmt(header), rule]
    for i, row in enumerate(rows):
        if i in rule_before:
            lines.append(rule)
        lines.append(fmt(row))
    return "\n".join(lines) + "\n"


def render_summary(reports: Sequence[EvaluationReport]) -> str:
    """One row per action plus complete / incomplete / total rows over all actions."""
    schemes = check_compatible(reports)
    labels = [scheme_label(s) for s in schemes]
    header = ["", "No."] + [f"Acc {l}" for l in labels] + [f"RD {l}" for l in labels]
    rows = []
    for rep in reports:
        total = {s: rep.groups[s]["total"] for s in schemes}
        count = next(iter(total.values()))
        rows.append([rep.action, str(count.count if count else 0)]
                    + [_fmt_acc(total[s]) for s in schemes] + [_fmt_rd(total[s]) for s in schemes])
    pooled = pooled_groups(reports)
    footer_at = len(rows)
    for g in GROUPS:
        stats = {s: pooled[s][g] for s in schemes}
        first = stats[schemes[0]]
        rows.append([g, str(first.count if first else 0)]
                    + [_fmt_acc(stats[s]) for s in schemes] + [_fmt_rd(stats[s]) for s in schemes])
    return _table(header, rows, rule_before=[footer_at])


def render_breakdown(reports: Sequence[EvaluationReport], metric: str = "accuracy") -> str:
    """Per-action complete / incomplete / total rows for one metric."""
    schemes = check_compatible(reports)
    if metric not in ("accuracy", "rd"):
        raise ValueError("metric must be 'accuracy' or 'rd'")
    fmt = _fmt_acc if metric == "accuracy" else _fmt_rd
    header = ["action", "group", "No."] + [scheme_label(s) for s in schemes]
    rows = []
    rules = []
    for rep in reports:
        if rows:
            rules.append(len(rows))
        for g in GROUPS:
            stats = {s: rep.groups[s][g] for s in schemes}
            first = stats[schemes[0]]
            rows.append([rep.action if g == "complete" else "", g, str(first.count if first else 0)]
                        + [fmt(stats[s]) for s in schemes])
    pooled = pooled_groups(reports)
    rules.append(len(rows))
    for g in GROUPS:
        stats = {s: pooled[s][g] for s in schemes}
        first = stats[schemes[0]]
        rows.append(["all" if g == "complete" else "", g, str(first.count if first else 0)]
                    + [fmt(stats[s]) for s in schemes])
    # the first column is left-aligned text; keep "group" left-aligned too
    widths = [max(len(r[i]) for r in [header, *rows]) for i in range(len(header))]
    lines = []

    def line(row):
        cells = [row[0].ljust(widths[0]), row[1].ljust(widths[1])]
        cells += [c.rjust(w) for c, w in zip(row[2:], widths[2:])]
        return "  ".join(cells).rstrip()

    rule = "-" * len(line(header))
    lines += [line(header), rule]
    for i, row in enumerate(rows):
        if i in rules:
            lines.append(rule)
        lines.append(line(row))
    title = "Accuracy (%)" if metric == "accuracy" else "RD"
    return title + "\n" + "\n".join(lines) + "\n"


def render_curve_csv(curve: Sequence[tuple[int, float]]) -> str:
    return "threshold,fraction\n" + "".join(f"{x},{frac:.10g}\n" for x, frac in curve)


def render_report(report: EvaluationReport | Sequence[EvaluationReport], fmt: str = "summary",
                  scheme: str | None = None) -> str:
    """Render as ``summary`` (both metrics, one row per action), ``accuracy`` or
    ``rd`` (per-group breakdown), or ``curve`` (CSV for ``scheme``)."""
    reports = [report] if isinstance(report, EvaluationReport) else list(report)
    if fmt == "summary":
        return render_summary(reports)
    if fmt in ("accuracy", "rd"):
        return render_breakdown(reports, fmt)
    if fmt == "curve":
        if len(reports) != 1 or scheme is None:
            raise ValueError("curve output needs exactly one report and a scheme")
        return render_curve_csv(reports[0].curves[scheme])
    raise ValueError(f"unknown report format {fmt!r}")
