"""Trace auditing against the four-type consistency-error taxonomy.

The auditor replays each trace from the problem's initial state and types
every recorded fault itself (it never trusts the engine's reasons):

  NonExR   a proposed rule absent from the problem (malformed text included:
           a string that denotes no rule in the problem IS a non-existing rule)
  InappR   a rule present in the problem whose premises were not all derived
           at the point it was proposed
  SpMatch  terminal True claimed while the query was underived
  UnexhS   terminal False claimed while some unapplied rule was applicable

A trace is consistent iff it has no errors, recorded no faulty proposals,
and actually terminated.  Accepted steps that fail replay mean the engine
(not the proposer) misbehaved: that is TraceMismatch, not a taxonomy error.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_EVEN, Decimal
from fractions import Fraction
from typing import Iterable, Sequence

from .core import HornError, Problem, ProofState, applicable_rules
from .engine import (
    ProofTrace,
    TERMINAL_FALSE,
    TERMINAL_TRUE,
    TERMINAL_UNRESOLVED,
    step_transition,
)
from .proposers import (
    ERROR_TYPES,
    INAPPLICABLE_RULE,
    NON_EXISTING_RULE,
    SPURIOUS_MATCH,
    UNEXHAUSTED_SEARCH,
)
from .textwire import Proposal


class TraceMismatch(HornError):
    """Accepted steps fail replay: an engine bug, not a proposer error."""


@dataclass(frozen=True)
class ErrorSite:
    iteration: int
    error_type: str
    detail: str


@dataclass(frozen=True)
class AuditVerdict:
    problem_id: str
    consistent: bool
    errors: frozenset[str]
    error_sites: tuple[ErrorSite, ...]
    unresolved: bool


def _classify_faulty(state: ProofState, proposal: Proposal) -> tuple[str, str]:
    if proposal.kind == "malformed" or proposal.rule is None:
        return NON_EXISTING_RULE, f"malformed proposal {proposal.text!r}"
    rule = proposal.rule
    if rule not in state.problem.rule_set:
        return NON_EXISTING_RULE, f"rule {proposal.text!r} not in problem"
    missing = [p for p in rule.premises if p not in state.derived]
    if missing:
        return INAPPLICABLE_RULE, f"rule {proposal.text!r} missing premises {missing}"
    raise TraceMismatch(
        f"proposal {proposal.text!r} recorded faulty but valid at iteration site"
    )


def audit_trace(problem: Problem, trace: ProofTrace) -> AuditVerdict:
    """Replay and classify one trace.  Pure function of (problem, trace)."""
    faulty_by_iter = {f.iteration: f for f in trace.faulty_proposals}
    steps = iter(trace.accepted_steps)
    consumed_steps = 0
    state = ProofState.initial(problem)
    sites: list[ErrorSite] = []

    terminal_iters = 1 if trace.terminal in (TERMINAL_TRUE, TERMINAL_FALSE) else 0
    expected = len(trace.faulty_proposals) + len(trace.accepted_steps) + terminal_iters
    if trace.iterations_used != expected:
        raise TraceMismatch(
            f"iteration count {trace.iterations_used} does not cover "
            f"{len(trace.accepted_steps)} steps + {len(trace.faulty_proposals)} faults"
            f" + {terminal_iters} terminal"
        )

    for iteration in range(1, trace.iterations_used + 1 - terminal_iters):
        fault = faulty_by_iter.get(iteration)
        if fault is not None:
            error_type, detail = _classify_faulty(state, fault.proposal)
            sites.append(ErrorSite(iteration=iteration, error_type=error_type, detail=detail))
            continue
        rule = next(steps, None)
        if rule is None:
            raise TraceMismatch(f"no accepted step left for iteration {iteration}")
        outcome = step_transition(state, Proposal(kind="rule", text="", rule=rule))
        if outcome.kind != "accepted":
            raise TraceMismatch(
                f"accepted step {rule} fails replay at iteration {iteration}: {outcome.reason}"
            )
        state = outcome.state
        consumed_steps += 1
    if consumed_steps != len(trace.accepted_steps):
        raise TraceMismatch("accepted steps left over after replay")

    if trace.terminal == TERMINAL_TRUE and not state.query_derived:
        sites.append(
            ErrorSite(
                iteration=trace.iterations_used,
                error_type=SPURIOUS_MATCH,
                detail=f"terminal True with query {problem.query!r} underived",
            )
        )
    if trace.terminal == TERMINAL_FALSE:
        remaining = applicable_rules(problem.rules, state.derived, state.applied_set)
        if remaining:
            sites.append(
                ErrorSite(
                    iteration=trace.iterations_used,
                    error_type=UNEXHAUSTED_SEARCH,
                    detail=f"terminal False with {len(remaining)} applicable rules unapplied",
                )
            )

    errors = frozenset(s.error_type for s in sites)
    unresolved = trace.terminal == TERMINAL_UNRESOLVED
    consistent = not errors and not trace.faulty_proposals and not unresolved
    return AuditVerdict(
        problem_id=trace.problem_id,
        consistent=consistent,
        errors=errors,
        error_sites=tuple(sites),
        unresolved=unresolved,
    )


@dataclass(frozen=True)
class ConsistencyTable:
    """Per-type trace frequencies and the overall consistency, in percent.

    Kept as exact fractions; rendering rounds half-even at the last moment.
    A trace with several error types counts once per type, so type
    frequencies may sum above the error rate.
    """

    n: int
    type_counts: dict[str, int]
    error_traces: int  # traces with >= 1 error type or unresolved

    def frequency(self, error_type: str) -> Fraction:
        return Fraction(100) * self.type_counts[error_type] / self.n

    @property
    def error_rate(self) -> Fraction:
        return Fraction(100) * self.error_traces / self.n

    @property
    def total_consistency(self) -> Fraction:
        return 100 - self.error_rate


def aggregate(verdicts: Sequence[AuditVerdict] | Iterable[AuditVerdict]) -> ConsistencyTable:
    verdicts = list(verdicts)
    if not verdicts:
        raise ValueError("cannot aggregate an empty verdict list")
    type_counts = {t: 0 for t in ERROR_TYPES}
    error_traces = 0
    for v in verdicts:
        for t in v.errors:
            type_counts[t] += 1
        if v.errors or v.unresolved:
            error_traces += 1
    return ConsistencyTable(
        n=len(verdicts), type_counts=type_counts, error_traces=error_traces
    )


def round_half_even(value: Fraction, places: int) -> Decimal:
    """Exact banker's rounding of a rational, for table rendering."""
    quantum = Decimal(1).scaleb(-places)
    return (Decimal(value.numerator) / Decimal(value.denominator)).quantize(
        quantum, rounding=ROUND_HALF_EVEN
    )


def verdict_record(verdict: AuditVerdict) -> dict:
    return {
        "problem_id": verdict.problem_id,
        "consistent": verdict.consistent,
        "errors": sorted(verdict.errors),
        "sites": [
            {"iter": s.iteration, "type": s.error_type, "detail": s.detail}
            for s in verdict.error_sites
        ],
    }


def record_verdict(rec: dict) -> AuditVerdict:
    sites = tuple(
        ErrorSite(iteration=s["iter"], error_type=s["type"], detail=s["detail"])
        for s in rec["sites"]
    )
    errors = frozenset(rec["errors"])
    return AuditVerdict(
        problem_id=rec["problem_id"],
        consistent=rec["consistent"],
        errors=errors,
        error_sites=sites,
        unresolved=not rec["consistent"] and not errors,
    )
