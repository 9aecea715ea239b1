import csv
import io
import json
from fractions import Fraction

import pytest

from hornbench.audit import aggregate, AuditVerdict, round_half_even
from hornbench.core import Problem, Rule
from hornbench.generate import Dataset, GenConfig, generate_rp
from hornbench.metrics import (
    AccuracyTable,
    DatasetAccumulator,
    MetricsTables,
    OutcomeRecord,
    RateRow,
    UnsupportedFormat,
    accuracy_by_depth,
    branching_factor,
    confusion_and_prf1,
    correlation_rules_label,
    dataset_stats,
    outcomes_from_traces,
    rates_from_counts,
    render_report,
)


def rec(pid, depth, truth, predicted):
    return OutcomeRecord(problem_id=pid, depth=depth, truth=truth, predicted=predicted)


class TestAccuracy:
    def test_all_correct(self):
        records = [rec(str(i), d, True, True) for i, d in enumerate([0, 1, 2, 0, 1])]
        table = accuracy_by_depth(records)
        assert table.total == 100
        assert all(table.percent(d) == 100 for d in table.depths())

    def test_constructed_micro_average(self):
        records = [rec(f"a{i}", 0, True, i < 4) for i in range(5)]
        records += [rec(f"b{i}", 1, False, False) for i in range(3)]
        table = accuracy_by_depth(records)
        assert table.percent(0) == 80
        assert table.percent(1) == 100
        assert table.total == Fraction(100) * 7 / 8  # 87.5: micro, not mean of depths

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            accuracy_by_depth([])


class TestConfusion:
    def test_published_depth_row(self):
        # 795 TP, 1 FP, 204 TN, 0 FN in 1000: every printed value of the
        # depth-0 row reproduces at 3 decimals under half-even rounding.
        row = rates_from_counts(tp=795, fp=1, tn=204, fn=0)
        printed = {
            "tpr": float(round_half_even(row.tpr, 3)),
            "fpr": float(round_half_even(row.fpr, 3)),
            "tnr": float(round_half_even(row.tnr, 3)),
            "fnr": float(round_half_even(row.fnr, 3)),
            "precision": float(round_half_even(row.precision, 3)),
            "recall": float(round_half_even(row.recall, 3)),
            "f1": float(round_half_even(row.f1, 3)),
        }
        assert printed == {
            "tpr": 0.795,
            "fpr": 0.001,
            "tnr": 0.204,
            "fnr": 0.0,
            "precision": 0.999,
            "recall": 1.0,
            "f1": 0.999,
        }
        assert row.recall == 1  # exactly 1, not merely rounded

    def test_rates_partition_exactly(self):
        row = rates_from_counts(tp=7, fp=11, tn=13, fn=17)
        assert row.tpr + row.fpr + row.tnr + row.fnr == 1

    def test_degenerate_all_negative(self):
        records = [rec(str(i), 0, False, False) for i in range(4)]
        table = confusion_and_prf1(records)
        assert table.total.tnr == 1
        assert table.total.precision == 1  # 0/0 convention
        assert table.total.recall == 1

    def test_prediction_flip_swaps_rates(self):
        records = [rec(str(i), i % 3, i % 2 == 0, (i % 5) < 3) for i in range(60)]
        flipped = [rec(r.problem_id, r.depth, r.truth, not r.predicted) for r in records]
        a = confusion_and_prf1(records).total
        b = confusion_and_prf1(flipped).total
        assert (a.tpr, a.tnr) == (b.fnr, b.fpr)
        assert (a.fpr, a.fnr) == (b.tnr, b.tpr)

    def test_per_depth_and_total(self):
        records = [rec("a", 0, True, True), rec("b", 1, False, True)]
        table = confusion_and_prf1(records)
        assert table.per_depth[0].tp == 1
        assert table.per_depth[1].fp == 1
        assert table.total.n == 2


class TestCorrelation:
    def _dataset(self, sizes_labels):
        problems = []
        used = []
        for i, (n_rules, label) in enumerate(sizes_labels):
            pool = [f"w{i}x{j}" for j in range(n_rules + 2)]
            rules = tuple(Rule((pool[j],), pool[j + 1]) for j in range(n_rules))
            problems.append(
                Problem(rules=rules, facts=(pool[0],), query=pool[1], label=label, depth=1)
            )
        return Dataset("rp", tuple(problems), GenConfig(num_problems=len(problems)))

    def test_zero_variance_convention(self):
        ds = self._dataset([(5, True), (5, False), (5, True)])
        assert correlation_rules_label(ds) == 0.0

    def test_perfect_positive(self):
        ds = self._dataset([(2, False), (2, False), (8, True), (8, True)])
        assert correlation_rules_label(ds) == pytest.approx(1.0)

    def test_sign(self):
        ds = self._dataset([(2, True), (8, False), (3, True), (9, False)])
        assert correlation_rules_label(ds) < -0.9


class TestDatasetStats:
    def test_branching_factor(self):
        p = Problem(
            rules=(Rule(("a",), "b"), Rule(("a",), "c"), Rule(("x",), "b")),
            facts=("a",),
            query="b",
            label=True,
            depth=1,
        )
        # derived {a,b,c}: a has 0 concluding rules, b has 2, c has 1
        assert branching_factor(p) == pytest.approx(1.0)

    def test_streaming_matches_batch(self):
        ds = generate_rp(GenConfig(num_problems=63, seed=2))
        acc = DatasetAccumulator()
        for p in ds.problems:
            acc.add(p)
        streamed = acc.stats()
        batch = dataset_stats(ds)
        assert streamed.correlation == pytest.approx(batch.correlation)
        for label in (True, False):
            for feature in ("num_rules", "num_facts", "branching"):
                assert streamed.by_label[label][feature].mean == pytest.approx(
                    batch.by_label[label][feature].mean
                )

    def test_conditional_means_reflect_correlation(self):
        ds = generate_rp(GenConfig(num_problems=210, seed=3))
        stats = dataset_stats(ds)
        assert stats.by_label[True]["num_rules"].mean > stats.by_label[False]["num_rules"].mean


def _verdict(pid, errors=(), unresolved=False):
    errors = frozenset(errors)
    return AuditVerdict(
        problem_id=pid,
        consistent=not errors and not unresolved,
        errors=errors,
        error_sites=(),
        unresolved=unresolved,
    )


@pytest.fixture
def tables():
    records = [rec(str(i), i % 3, i % 2 == 0, i % 2 == 0 or i == 1) for i in range(30)]
    verdicts = [_verdict(str(i), {"NonExR"} if i == 0 else ()) for i in range(30)]
    return MetricsTables(
        accuracy=[("demo", accuracy_by_depth(records))],
        rates=[("demo", confusion_and_prf1(records))],
        consistency=[("demo", aggregate(verdicts))],
    )


class TestRender:
    def test_markdown_consistency_column_order(self, tables):
        text = render_report(tables, "markdown").decode()
        header_line = next(
            line for line in text.splitlines() if "NonExR" in line and line.startswith("|")
        )
        cols = [c.strip() for c in header_line.strip("|").split("|")]
        assert cols == [
            "Run",
            "NonExR",
            "InappR",
            "SpMatch",
            "UnexhS",
            "Error Rate",
            "Tot. Consistency",
        ]

    def test_deterministic_bytes(self, tables):
        assert render_report(tables, "markdown") == render_report(tables, "markdown")
        assert render_report(tables, "csv") == render_report(tables, "csv")
        assert render_report(tables, "json") == render_report(tables, "json")

    def test_csv_reparses_to_equal_values(self, tables):
        payload = render_report(tables, "csv").decode()
        rows = list(csv.DictReader(io.StringIO(payload)))
        assert rows
        cell = next(
            r for r in rows if r["section"] == "consistency" and r["column"] == "NonExR"
        )
        table = tables.consistency[0][1]
        assert float(cell["value"]) == float(round_half_even(table.frequency("NonExR"), 3))

    def test_json_round_trip(self, tables):
        payload = json.loads(render_report(tables, "json").decode())
        assert "consistency" in payload and "accuracy" in payload
        assert payload["accuracy"]["demo"]["TOT"] == pytest.approx(
            float(round_half_even(tables.accuracy[0][1].total, 1))
        )

    def test_accuracy_rounded_to_one_decimal(self, tables):
        text = render_report(tables, "csv").decode()
        acc_values = [
            line.split(",")[-1]
            for line in text.splitlines()[1:]
            if line.startswith("accuracy,")
        ]
        assert acc_values
        for v in acc_values:
            assert len(v.split(".")[-1]) == 1

    def test_unsupported_format(self, tables):
        with pytest.raises(UnsupportedFormat):
            render_report(tables, "parquet")


class TestOutcomesFromTraces:
    def test_unresolved_scores_as_wrong(self):
        from hornbench.engine import ProofTrace

        p = Problem(rules=(), facts=("q",), query="q", label=True, depth=0)
        t = ProofTrace(
            problem_id="u",
            accepted_steps=(),
            faulty_proposals=(),
            terminal="Unresolved",
            iterations_used=100,
            predicted_label=False,
        )
        outs = outcomes_from_traces({"u": p}, [t])
        assert outs[0].predicted is False and outs[0].truth is True

    def test_unlabeled_problem_rejected(self):
        from hornbench.engine import ProofTrace

        p = Problem(rules=(), facts=("q",), query="q")
        t = ProofTrace("u", (), (), "True", 1, True)
        with pytest.raises(ValueError):
            outcomes_from_traces({"u": p}, [t])
