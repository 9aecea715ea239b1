"""Line-delimited JSON record schemas shared across the pipeline.

One record per line, UTF-8, keys in fixed order so identical values always
produce identical bytes:

  dataset   {id, subset, text, label, depth, num_rules, num_facts}
  steps     {problem_id, step_index, input, target}
  traces    {problem_id, steps, faulty: [{iter, text, reason}], terminal,
             iterations}
  verdicts  {problem_id, consistent, errors, sites: [{iter, type, detail}]}
"""

from __future__ import annotations

import dataclasses
import json
from typing import Iterator, TextIO

from .core import Problem
from .engine import FaultyProposal, ProofTrace
from .textwire import parse_problem, parse_proposal, parse_rule, rule_text, serialize_problem


def dumps(obj: dict) -> str:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False)


def write_record(out: TextIO, obj: dict) -> None:
    out.write(dumps(obj))
    out.write("\n")


def read_records(path: str) -> Iterator[dict]:
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                yield json.loads(line)


def problem_record(problem_id: str, subset: str, problem: Problem) -> dict:
    return {
        "id": problem_id,
        "subset": subset,
        "text": serialize_problem(problem),
        "label": problem.label,
        "depth": problem.depth,
        "num_rules": len(problem.rules),
        "num_facts": len(problem.facts),
    }


def record_problem(rec: dict) -> tuple[str, Problem]:
    problem = parse_problem(rec["text"])
    problem = dataclasses.replace(
        problem, label=rec.get("label"), depth=rec.get("depth")
    )
    return rec["id"], problem


def trace_record(trace: ProofTrace) -> dict:
    return {
        "problem_id": trace.problem_id,
        "steps": [rule_text(r) for r in trace.accepted_steps],
        "faulty": [
            {"iter": f.iteration, "text": f.proposal.text, "reason": f.reason}
            for f in trace.faulty_proposals
        ],
        "terminal": trace.terminal,
        "iterations": trace.iterations_used,
    }


def record_trace(rec: dict, predicted_label: bool | None = None) -> ProofTrace:
    steps = tuple(parse_rule(t) for t in rec["steps"])
    faulty = tuple(
        FaultyProposal(
            iteration=f["iter"],
            proposal=parse_proposal(f["text"]),
            reason=f["reason"],
        )
        for f in rec["faulty"]
    )
    if predicted_label is None:
        predicted_label = rec["terminal"] == "True"
    return ProofTrace(
        problem_id=rec["problem_id"],
        accepted_steps=steps,
        faulty_proposals=faulty,
        terminal=rec["terminal"],
        iterations_used=rec["iterations"],
        predicted_label=predicted_label,
    )
