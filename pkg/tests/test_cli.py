import json
import os
import sys
from pathlib import Path

import pytest

from hornbench.cli import main
from hornbench.records import read_records

PEER = str(Path(__file__).parent / "oracle_peer.py")


def run_cli(*args):
    return main([str(a) for a in args])


@pytest.fixture
def ws(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


@pytest.fixture
def dataset(ws):
    path = ws / "rp.jsonl"
    assert run_cli("gen", "--kind", "rp", "--n", 42, "--seed", 5, "--out", path) == 0
    return path


class TestGen:
    def test_dataset_schema(self, dataset):
        records = list(read_records(str(dataset)))
        assert len(records) == 42
        first = records[0]
        assert set(first) == {"id", "subset", "text", "label", "depth", "num_rules", "num_facts"}
        assert first["subset"] == "rp"
        assert isinstance(first["label"], bool)

    def test_manifest_written(self, dataset):
        manifest = json.loads((dataset.parent / (dataset.name + ".manifest.json")).read_text())
        assert manifest["subcommand"] == "gen"
        assert manifest["args"]["seed"] == 5
        assert manifest["outputs"] == [str(dataset)]

    def test_deterministic_bytes(self, ws):
        a, b = ws / "a.jsonl", ws / "b.jsonl"
        run_cli("gen", "--kind", "lp", "--n", 28, "--seed", 3, "--out", a)
        run_cli("gen", "--kind", "lp", "--n", 28, "--seed", 3, "--out", b)
        assert a.read_bytes() == b.read_bytes()

    def test_split_files(self, ws):
        out = ws / "lp.jsonl"
        assert run_cli("gen", "--kind", "lp", "--n", 40, "--seed", 3, "--out", out, "--split") == 0
        sizes = [len(list(read_records(str(ws / f"lp.jsonl.{part}")))) for part in ("train", "val", "test")]
        assert sum(sizes) == 40 and sizes[0] == 32

    def test_bad_kind(self, ws, capsys):
        assert run_cli("gen", "--kind", "xx", "--n", 5, "--out", ws / "x.jsonl") == 1
        assert "error: user:" in capsys.readouterr().err

    def test_toml_config(self, ws):
        cfg = ws / "gen.toml"
        cfg.write_text('num_problems = 14\nseed = 8\nrules_range = [12, 30]\n')
        out = ws / "c.jsonl"
        assert run_cli("gen", "--kind", "rp", "--out", out, "--config", cfg) == 0
        records = list(read_records(str(out)))
        assert len(records) == 14
        assert all(r["num_rules"] <= 30 for r in records)

    def test_flag_overrides_config(self, ws):
        cfg = ws / "gen.toml"
        cfg.write_text("num_problems = 14\n")
        out = ws / "d.jsonl"
        assert run_cli("gen", "--kind", "rp", "--n", 7, "--seed", 1, "--out", out, "--config", cfg) == 0
        assert len(list(read_records(str(out)))) == 7


class TestSteps:
    def test_step_instances(self, ws, dataset):
        out = ws / "steps.jsonl"
        assert run_cli("steps", "--dataset", dataset, "--out", out) == 0
        records = list(read_records(str(out)))
        assert all(set(r) == {"problem_id", "step_index", "input", "target"} for r in records)
        n_problems = len(list(read_records(str(dataset))))
        terminals = [r for r in records if r["target"] in ("True", "False")]
        assert len(terminals) == n_problems
        assert len(records) / n_problems >= 1

    def test_whole_proofs(self, ws, dataset):
        out = ws / "whole.jsonl"
        assert run_cli("steps", "--dataset", dataset, "--out", out, "--whole-proofs") == 0
        records = list(read_records(str(out)))
        assert len(records) == len(list(read_records(str(dataset))))
        assert all(r["target"].endswith(("True", "False")) for r in records)

    def test_whole_proofs_backward_and_shuffled(self, ws, dataset):
        from hornbench.textwire import parse_problem

        fwd = ws / "wf.jsonl"
        bwd = ws / "wb.jsonl"
        run_cli("steps", "--dataset", dataset, "--out", fwd, "--whole-proofs")
        run_cli(
            "steps", "--dataset", dataset, "--out", bwd,
            "--whole-proofs", "--order", "backward", "--shuffle", "--seed", 5,
        )
        for a, b in zip(read_records(str(fwd)), read_records(str(bwd))):
            steps_a = a["target"].split(" ")
            steps_b = b["target"].split(" ")
            assert steps_b[:-1] == list(reversed(steps_a[:-1]))
            assert steps_b[-1] == steps_a[-1]
            assert parse_problem(b["input"]).statement_equal(parse_problem(a["input"]))

    def test_shuffled_inputs_reparse(self, ws, dataset):
        from hornbench.textwire import parse_state

        out = ws / "steps-shuffled.jsonl"
        assert run_cli("steps", "--dataset", dataset, "--out", out, "--shuffle", "--seed", 11) == 0
        for r in list(read_records(str(out)))[:40]:
            parse_state(r["input"])


class TestProve:
    def test_labels_unlabeled_problems(self, ws):
        src = ws / "raw.jsonl"
        with open(src, "w") as f:
            f.write('{"id": "x1", "text": "q? a,q: a1"}\n')
            f.write('{"text": "q? a,q: b1"}\n')
        out = ws / "proved.jsonl"
        assert run_cli("prove", "--in", src, "--out", out) == 0
        records = list(read_records(str(out)))
        assert records[0]["id"] == "x1"
        assert records[0]["label"] is True and records[0]["depth"] == 1
        assert records[1]["label"] is False

    def test_parse_error_is_user_error(self, ws, capsys):
        src = ws / "bad.jsonl"
        src.write_text('{"text": "q? a,"}\n')
        out = ws / "out.jsonl"
        assert run_cli("prove", "--in", src, "--out", out) == 1
        assert not out.exists()


class TestRun:
    def test_oracle_traces(self, ws, dataset):
        out = ws / "traces.jsonl"
        assert run_cli("run", "--dataset", dataset, "--out", out, "--proposer", "oracle") == 0
        traces = list(read_records(str(out)))
        problems = list(read_records(str(dataset)))
        assert [t["problem_id"] for t in traces] == [p["id"] for p in problems]
        for t, p in zip(traces, problems):
            assert (t["terminal"] == "True") == p["label"]
            assert t["faulty"] == []

    def test_jobs_deterministic(self, ws, dataset):
        a, b = ws / "t1.jsonl", ws / "t2.jsonl"
        run_cli("run", "--dataset", dataset, "--out", a, "--jobs", 1)
        run_cli("run", "--dataset", dataset, "--out", b, "--jobs", 2)
        assert a.read_bytes() == b.read_bytes()

    def test_corrupt_proposer(self, ws, dataset):
        out = ws / "corrupt.jsonl"
        assert (
            run_cli(
                "run", "--dataset", dataset, "--out", out,
                "--proposer", "corrupt:premature_false@0.5", "--seed", 7,
            )
            == 0
        )
        traces = list(read_records(str(out)))
        assert any(t["terminal"] == "False" for t in traces)

    def test_cap_flag(self, ws, dataset):
        out = ws / "capped.jsonl"
        assert (
            run_cli(
                "run", "--dataset", dataset, "--out", out,
                "--proposer", "corrupt:synonym_swap@1.0", "--cap", 5, "--seed", 2,
            )
            == 0
        )
        assert all(t["iterations"] <= 5 for t in read_records(str(out)))

    def test_external_stdio(self, ws, dataset):
        out = ws / "ext.jsonl"
        ref = ws / "ref.jsonl"
        endpoint = f"external:stdio:{sys.executable} {PEER} --mode oracle"
        assert run_cli("run", "--dataset", dataset, "--out", out, "--proposer", endpoint) == 0
        assert run_cli("run", "--dataset", dataset, "--out", ref, "--proposer", "oracle") == 0
        assert out.read_bytes() == ref.read_bytes()

    def test_shuffle_flag(self, ws, dataset):
        out = ws / "shuffled.jsonl"
        assert run_cli("run", "--dataset", dataset, "--out", out, "--shuffle", "--seed", 3) == 0
        ref = ws / "plain.jsonl"
        run_cli("run", "--dataset", dataset, "--out", ref)
        # oracle outcomes are serialization-order independent
        assert [t["terminal"] for t in read_records(str(out))] == [
            t["terminal"] for t in read_records(str(ref))
        ]


@pytest.fixture
def traces(ws, dataset):
    path = ws / "traces.jsonl"
    run_cli("run", "--dataset", dataset, "--out", path, "--proposer", "oracle")
    return path


@pytest.fixture
def verdicts(ws, dataset, traces):
    path = ws / "verdicts.jsonl"
    run_cli("audit", "--dataset", dataset, "--traces", traces, "--out", path)
    return path


class TestAuditCmd:
    def test_oracle_all_consistent(self, verdicts):
        records = list(read_records(str(verdicts)))
        assert records and all(r["consistent"] for r in records)
        assert all(set(r) == {"problem_id", "consistent", "errors", "sites"} for r in records)

    def test_corrupted_runs_flagged(self, ws, dataset):
        traces = ws / "bad-traces.jsonl"
        run_cli(
            "run", "--dataset", dataset, "--out", traces,
            "--proposer", "corrupt:premature_true@0.6", "--seed", 3,
        )
        out = ws / "bad-verdicts.jsonl"
        assert run_cli("audit", "--dataset", dataset, "--traces", traces, "--out", out) == 0
        records = list(read_records(str(out)))
        assert any("SpMatch" in r["errors"] for r in records)

    def test_premature_false_shows_up_in_report(self, ws, dataset):
        traces = ws / "pf-traces.jsonl"
        verdicts = ws / "pf-verdicts.jsonl"
        report = ws / "pf-report.csv"
        run_cli(
            "run", "--dataset", dataset, "--out", traces,
            "--proposer", "corrupt:premature_false@0.5", "--seed", 4,
        )
        run_cli("audit", "--dataset", dataset, "--traces", traces, "--out", verdicts)
        assert (
            run_cli(
                "report", "--dataset", dataset, "--traces", traces,
                "--verdicts", verdicts, "--format", "csv", "--out", report,
            )
            == 0
        )
        unexhs = next(
            line for line in report.read_text().splitlines() if ",UnexhS," in line
        )
        assert float(unexhs.rsplit(",", 1)[1]) > 0


class TestReport:
    def test_full_report(self, ws, dataset, traces, verdicts):
        out = ws / "report.md"
        assert (
            run_cli(
                "report", "--dataset", dataset, "--traces", traces,
                "--verdicts", verdicts, "--stats", "--out", out, "--label", "rp-oracle",
            )
            == 0
        )
        text = out.read_text()
        assert "Tot. Consistency" in text
        assert "100.000" in text  # oracle pipeline is fully consistent
        assert "rp-oracle" in text

    def test_empty_traces_error_and_no_output(self, ws, dataset, capsys):
        empty = ws / "empty.jsonl"
        empty.write_text("")
        out = ws / "report.md"
        assert run_cli("report", "--dataset", dataset, "--traces", empty, "--out", out) == 1
        assert not out.exists()
        assert "error: user:" in capsys.readouterr().err

    def test_csv_format(self, ws, dataset, traces):
        out = ws / "report.csv"
        assert (
            run_cli("report", "--dataset", dataset, "--traces", traces, "--format", "csv", "--out", out)
            == 0
        )
        assert out.read_text().startswith("section,row,column,value")

    def test_nothing_to_report(self, ws, capsys):
        assert run_cli("report", "--out", ws / "r.md") == 1


class TestPipelineDeterminism:
    def test_end_to_end_reproducible(self, ws):
        files = {}
        for tag in ("one", "two"):
            d = ws / f"{tag}-rp.jsonl"
            t = ws / f"{tag}-traces.jsonl"
            v = ws / f"{tag}-verdicts.jsonl"
            r = ws / f"{tag}-report.md"
            run_cli("gen", "--kind", "rp_b", "--n", 35, "--seed", 7, "--out", d)
            run_cli("run", "--dataset", d, "--out", t, "--proposer", "oracle")
            run_cli("audit", "--dataset", d, "--traces", t, "--out", v)
            run_cli("report", "--dataset", d, "--traces", t, "--verdicts", v, "--out", r)
            files[tag] = (d.read_bytes(), t.read_bytes(), v.read_bytes(), r.read_bytes())
        assert files["one"] == files["two"]


def test_data_dir_env(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    data_dir = tmp_path / "store"
    monkeypatch.setenv("HORNBENCH_DATA_DIR", str(data_dir))
    assert run_cli("gen", "--kind", "rp", "--n", 7, "--seed", 1, "--out", "ds.jsonl") == 0
    assert (data_dir / "ds.jsonl").exists()
