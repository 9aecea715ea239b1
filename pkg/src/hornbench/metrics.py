"""Evaluation tables: accuracy by depth, unconditional confusion rates with
precision/recall/F1, consistency frequencies, and dataset statistics.

Counting is exact (fractions all the way); numbers meet floating point only
at rendering, rounded half-even to the table's column precision (1 decimal
for accuracy, 3 for rates and frequencies).  Confusion rates are
unconditional fractions of the whole record set -- TP/N, FP/N, TN/N, FN/N --
so one row's four rates always sum to exactly 1.  That departs from the
common class-conditional usage and is deliberate.  Precision and recall use
the 0/0 -> 1.0 convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import Decimal
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .audit import ConsistencyTable, round_half_even
from .core import HornError, Problem, forward_closure
from .engine import ProofTrace, TERMINAL_TRUE, TERMINAL_UNRESOLVED
from .generate import Dataset
from .proposers import ERROR_TYPES


class UnsupportedFormat(HornError):
    pass


@dataclass(frozen=True)
class OutcomeRecord:
    problem_id: str
    depth: int
    truth: bool
    predicted: bool


def outcomes_from_traces(
    problems: Mapping[str, Problem], traces: Iterable[ProofTrace]
) -> list[OutcomeRecord]:
    """Join traces with their problems.  Unresolved traces score as the wrong
    label (false positive or false negative per the ground truth)."""
    out = []
    for trace in traces:
        problem = problems[trace.problem_id]
        truth = problem.label
        if truth is None:
            raise ValueError(f"problem {trace.problem_id} has no ground-truth label")
        if trace.terminal == TERMINAL_UNRESOLVED:
            predicted = not truth
        else:
            predicted = trace.terminal == TERMINAL_TRUE
        out.append(
            OutcomeRecord(
                problem_id=trace.problem_id,
                depth=problem.depth if problem.depth is not None else -1,
                truth=truth,
                predicted=predicted,
            )
        )
    return out


@dataclass(frozen=True)
class AccuracyTable:
    """Percent correct per depth plus the micro-averaged total."""

    counts: dict[int, tuple[int, int]]  # depth -> (correct, n)

    def depths(self) -> list[int]:
        return sorted(self.counts)

    def percent(self, depth: int) -> Fraction:
        correct, n = self.counts[depth]
        return Fraction(100) * correct / n

    @property
    def total(self) -> Fraction:
        correct = sum(c for c, _ in self.counts.values())
        n = sum(n for _, n in self.counts.values())
        return Fraction(100) * correct / n


def accuracy_by_depth(records: Sequence[OutcomeRecord]) -> AccuracyTable:
    if not records:
        raise ValueError("no outcome records")
    counts: dict[int, list[int]] = {}
    for r in records:
        cell = counts.setdefault(r.depth, [0, 0])
        cell[0] += r.truth == r.predicted
        cell[1] += 1
    return AccuracyTable(counts={d: (c, n) for d, (c, n) in counts.items()})


@dataclass(frozen=True)
class RateRow:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def _rate(self, count: int) -> Fraction:
        return Fraction(count, self.n)

    @property
    def tpr(self) -> Fraction:
        return self._rate(self.tp)

    @property
    def fpr(self) -> Fraction:
        return self._rate(self.fp)

    @property
    def tnr(self) -> Fraction:
        return self._rate(self.tn)

    @property
    def fnr(self) -> Fraction:
        return self._rate(self.fn)

    @property
    def precision(self) -> Fraction:
        if self.tp + self.fp == 0:
            return Fraction(1)
        return Fraction(self.tp, self.tp + self.fp)

    @property
    def recall(self) -> Fraction:
        if self.tp + self.fn == 0:
            return Fraction(1)
        return Fraction(self.tp, self.tp + self.fn)

    @property
    def f1(self) -> Fraction:
        p, r = self.precision, self.recall
        if p + r == 0:
            return Fraction(0)
        return 2 * p * r / (p + r)


@dataclass(frozen=True)
class RatesTable:
    per_depth: dict[int, RateRow]
    total: RateRow


def confusion_and_prf1(records: Sequence[OutcomeRecord]) -> RatesTable:
    if not records:
        raise ValueError("no outcome records")
    cells: dict[int, list[int]] = {}
    for r in records:
        cell = cells.setdefault(r.depth, [0, 0, 0, 0])
        if r.truth and r.predicted:
            cell[0] += 1
        elif not r.truth and r.predicted:
            cell[1] += 1
        elif not r.truth and not r.predicted:
            cell[2] += 1
        else:
            cell[3] += 1
    per_depth = {d: RateRow(*c) for d, c in sorted(cells.items())}
    total = RateRow(
        tp=sum(r.tp for r in per_depth.values()),
        fp=sum(r.fp for r in per_depth.values()),
        tn=sum(r.tn for r in per_depth.values()),
        fn=sum(r.fn for r in per_depth.values()),
    )
    return RatesTable(per_depth=per_depth, total=total)


def rates_from_counts(tp: int, fp: int, tn: int, fn: int) -> RateRow:
    """Rates for one constructed confusion-count cell."""
    return RateRow(tp=tp, fp=fp, tn=tn, fn=fn)


def correlation_rules_label(dataset: Dataset) -> float:
    """Point-biserial correlation between rule count and label.

    Pearson correlation of (#rules, label as 0/1), exact up to the final
    square root; 0.0 when either variable has no variance.
    """
    xs = [len(p.rules) for p in dataset.problems]
    ys = [1 if p.label else 0 for p in dataset.problems]
    n = len(xs)
    if n == 0:
        return 0.0
    sx, sy = Fraction(sum(xs)), Fraction(sum(ys))
    sxx = Fraction(sum(x * x for x in xs))
    syy = Fraction(sum(y * y for y in ys))
    sxy = Fraction(sum(x * y for x, y in zip(xs, ys)))
    cov = sxy - sx * sy / n
    vx = sxx - sx * sx / n
    vy = syy - sy * sy / n
    if vx == 0 or vy == 0:
        return 0.0
    return float(cov) / math.sqrt(float(vx) * float(vy))


@dataclass(frozen=True)
class FeatureSummary:
    mean: float
    stdev: float
    lo: float
    hi: float


class _Welford:
    """Streaming mean/population-stdev/min/max."""

    def __init__(self):
        self.n = 0
        self.mean = 0.0
        self.m2 = 0.0
        self.lo = math.inf
        self.hi = -math.inf

    def add(self, x: float) -> None:
        self.n += 1
        delta = x - self.mean
        self.mean += delta / self.n
        self.m2 += delta * (x - self.mean)
        self.lo = min(self.lo, x)
        self.hi = max(self.hi, x)

    def summary(self) -> FeatureSummary:
        stdev = math.sqrt(self.m2 / self.n) if self.n else 0.0
        return FeatureSummary(mean=self.mean, stdev=stdev, lo=self.lo, hi=self.hi)


@dataclass(frozen=True)
class DatasetStats:
    counts: dict[bool, int]
    by_label: dict[bool, dict[str, FeatureSummary]]
    correlation: float


def branching_factor(problem: Problem) -> float:
    """Mean number of problem rules concluding each derived literal."""
    closure = forward_closure(problem.rules, problem.facts)
    if not closure.derived:
        return 0.0
    concluding: dict[str, int] = {}
    for r in problem.rules:
        concluding[r.conclusion] = concluding.get(r.conclusion, 0) + 1
    return sum(concluding.get(lit, 0) for lit in closure.derived) / len(closure.derived)


class DatasetAccumulator:
    """Streaming dataset statistics: one problem at a time, O(1) memory."""

    FEATURES = ("num_rules", "num_facts", "branching")

    def __init__(self):
        self._acc: dict[bool, dict[str, _Welford]] = {
            True: {f: _Welford() for f in self.FEATURES},
            False: {f: _Welford() for f in self.FEATURES},
        }
        self._n = 0
        self._sx = self._sy = self._sxx = self._syy = self._sxy = 0

    def add(self, problem: Problem) -> None:
        if problem.label is None:
            raise ValueError("dataset statistics need labeled problems")
        label = problem.label
        x, y = len(problem.rules), int(label)
        group = self._acc[label]
        group["num_rules"].add(x)
        group["num_facts"].add(len(problem.facts))
        group["branching"].add(branching_factor(problem))
        self._n += 1
        self._sx += x
        self._sy += y
        self._sxx += x * x
        self._syy += y * y
        self._sxy += x * y

    @property
    def correlation(self) -> float:
        if self._n == 0:
            return 0.0
        n = self._n
        cov = Fraction(self._sxy) - Fraction(self._sx * self._sy, n)
        vx = Fraction(self._sxx) - Fraction(self._sx * self._sx, n)
        vy = Fraction(self._syy) - Fraction(self._sy * self._sy, n)
        if vx == 0 or vy == 0:
            return 0.0
        return float(cov) / math.sqrt(float(vx) * float(vy))

    def stats(self) -> DatasetStats:
        if self._n == 0:
            raise ValueError("empty dataset")
        by_label = {
            label: {f: acc.summary() for f, acc in group.items()}
            for label, group in self._acc.items()
            if group["num_rules"].n
        }
        counts = {label: group["num_rules"].n for label, group in self._acc.items()}
        return DatasetStats(counts=counts, by_label=by_label, correlation=self.correlation)


def dataset_stats(dataset: Dataset) -> DatasetStats:
    acc = DatasetAccumulator()
    for p in dataset.problems:
        acc.add(p)
    return acc.stats()


# --- rendering ---------------------------------------------------------------

ACCURACY_PLACES = 1
RATE_PLACES = 3

CONSISTENCY_COLUMNS = (
    "NonExR",
    "InappR",
    "SpMatch",
    "UnexhS",
    "Error Rate",
    "Tot. Consistency",
)
RATE_COLUMNS = ("TPR", "FPR", "TNR", "FNR", "Precision", "Recall", "F1")


@dataclass
class MetricsTables:
    """Everything the report renderer knows how to lay out.  Each section is
    a list of (row label, table) pairs; absent sections are skipped."""

    accuracy: list[tuple[str, AccuracyTable]] | None = None
    rates: list[tuple[str, RatesTable]] | None = None
    consistency: list[tuple[str, ConsistencyTable]] | None = None
    stats: list[tuple[str, DatasetStats]] | None = None


@dataclass(frozen=True)
class _Section:
    name: str
    columns: tuple[str, ...]
    rows: tuple[tuple[str, tuple[Decimal, ...]], ...]


def _accuracy_section(entries) -> _Section:
    depths = sorted({d for _, table in entries for d in table.depths()})
    columns = tuple(str(d) for d in depths) + ("TOT",)
    rows = []
    for label, table in entries:
        values = [
            round_half_even(table.percent(d), ACCURACY_PLACES)
            if d in table.counts
            else Decimal("0").quantize(Decimal(1).scaleb(-ACCURACY_PLACES))
            for d in depths
        ]
        values.append(round_half_even(table.total, ACCURACY_PLACES))
        rows.append((label, tuple(values)))
    return _Section("accuracy", columns, tuple(rows))


def _rates_sections(entries) -> list[_Section]:
    sections = []
    for label, table in entries:
        rows = []
        for depth, row in table.per_depth.items():
            rows.append((str(depth), _rate_cells(row)))
        rows.append(("Total", _rate_cells(table.total)))
        sections.append(_Section(f"rates {label}".strip(), RATE_COLUMNS, tuple(rows)))
    return sections


def _rate_cells(row: RateRow) -> tuple[Decimal, ...]:
    return tuple(
        round_half_even(v, RATE_PLACES)
        for v in (row.tpr, row.fpr, row.tnr, row.fnr, row.precision, row.recall, row.f1)
    )


def _consistency_section(entries) -> _Section:
    rows = []
    for label, table in entries:
        cells = [round_half_even(table.frequency(t), RATE_PLACES) for t in ERROR_TYPES]
        cells.append(round_half_even(table.error_rate, RATE_PLACES))
        cells.append(round_half_even(table.total_consistency, RATE_PLACES))
        rows.append((label, tuple(cells)))
    return _Section("consistency", CONSISTENCY_COLUMNS, tuple(rows))


def _stats_sections(entries) -> list[_Section]:
    columns = ("n", "rules mean", "rules sd", "facts mean", "facts sd", "branching mean", "r(#rules,label)")
    sections = []
    for label, stats in entries:
        rows = []
        for truth in (True, False):
            if truth not in stats.by_label:
                continue
            s = stats.by_label[truth]
            row = (
                Decimal(stats.counts[truth]),
                _dec(s["num_rules"].mean),
                _dec(s["num_rules"].stdev),
                _dec(s["num_facts"].mean),
                _dec(s["num_facts"].stdev),
                _dec(s["branching"].mean),
                _dec(stats.correlation),
            )
            rows.append((str(truth), row))
        sections.append(_Section(f"stats {label}".strip(), columns, tuple(rows)))
    return sections


def _dec(value: float) -> Decimal:
    return round_half_even(Fraction(value), RATE_PLACES)


def _collect_sections(tables: MetricsTables) -> list[_Section]:
    sections: list[_Section] = []
    if tables.accuracy:
        sections.append(_accuracy_section(tables.accuracy))
    if tables.rates:
        sections.extend(_rates_sections(tables.rates))
    if tables.consistency:
        sections.append(_consistency_section(tables.consistency))
    if tables.stats:
        sections.extend(_stats_sections(tables.stats))
    return sections


def _render_markdown(sections: list[_Section]) -> str:
    out = []
    for sec in sections:
        widths = [len(c) for c in ("Run",) + sec.columns]
        cells = [[label] + [str(v) for v in values] for label, values in sec.rows]
        for row in cells:
            for i, cell in enumerate(row):
                widths[i] = max(widths[i], len(cell))
        header = ["Run"] + list(sec.columns)
        out.append(f"## {sec.name}")
        out.append("| " + " | ".join(h.ljust(w) for h, w in zip(header, widths)) + " |")
        out.append("|" + "|".join("-" * (w + 2) for w in widths) + "|")
        for row in cells:
            out.append("| " + " | ".join(c.ljust(w) for c, w in zip(row, widths)) + " |")
        out.append("")
    return "\n".join(out)


def _render_csv(sections: list[_Section]) -> str:
    lines = ["section,row,column,value"]
    for sec in sections:
        for label, values in sec.rows:
            for col, v in zip(sec.columns, values):
                lines.append(f"{sec.name},{label},{col},{v}")
    return "\n".join(lines) + "\n"


def _render_json(sections: list[_Section]) -> str:
    import json

    payload = {
        sec.name: {
            label: {col: float(v) for col, v in zip(sec.columns, values)}
            for label, values in sec.rows
        }
        for sec in sections
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def render_report(tables: MetricsTables, format: str = "markdown") -> bytes:
    """Deterministic rendering of all present sections."""
    sections = _collect_sections(tables)
    if format == "markdown":
        text = _render_markdown(sections)
    elif format == "csv":
        text = _render_csv(sections)
    elif format == "json":
        text = _render_json(sections)
    else:
        raise UnsupportedFormat(f"unknown report format {format!r}")
    return text.encode("utf-8")
