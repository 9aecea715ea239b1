"""The iterative proof loop.

Each iteration serializes the current proof state, asks the proposer for up
to k candidates, and applies the first one the symbolic side accepts:
terminals end the run as claimed (their justification is the auditor's
business, not the engine's), valid rules extend the state, everything else
is recorded as a faulty proposal without touching the state.  A run that
reaches the iteration cap is Unresolved and scores as a false positive or
false negative against the ground-truth label.
"""

from __future__ import annotations

from dataclasses import dataclass

from .core import Problem, ProofState, Rule, label_and_depth
from .proposers import Proposer, ProposerFailure
from .seeds import child_seed
from .textwire import ORDER_CANONICAL, ORDER_SHUFFLE, Proposal, serialize_state

TERMINAL_TRUE = "True"
TERMINAL_FALSE = "False"
TERMINAL_UNRESOLVED = "Unresolved"

REASON_NOT_IN_PROBLEM = "not_in_problem"
REASON_NOT_APPLICABLE = "not_applicable"
REASON_MALFORMED = "malformed"


@dataclass(frozen=True)
class EngineConfig:
    max_iterations: int = 100
    candidates_per_step: int = 1
    retry_on_invalid: bool = True
    order: str = ORDER_CANONICAL  # state serialization policy per iteration
    shuffle_seed: int = 0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.candidates_per_step < 1:
            raise ValueError("candidates_per_step must be >= 1")


@dataclass(frozen=True)
class StepOutcome:
    """Exactly one of: accepted (with successor state), rejected (with a
    reason), or terminated (with the claimed verdict)."""

    kind: str  # "accepted" | "rejected" | "terminated"
    state: ProofState | None = None
    verdict: bool | None = None
    reason: str | None = None


@dataclass(frozen=True)
class FaultyProposal:
    iteration: int
    proposal: Proposal
    reason: str


@dataclass(frozen=True)
class ProofTrace:
    problem_id: str
    accepted_steps: tuple[Rule, ...]
    faulty_proposals: tuple[FaultyProposal, ...]
    terminal: str  # "True" | "False" | "Unresolved"
    iterations_used: int
    predicted_label: bool


def step_transition(state: ProofState, proposal: Proposal) -> StepOutcome:
    """Judge one proposal against the symbolic state."""
    if proposal.kind == "terminal":
        return StepOutcome(kind="terminated", verdict=proposal.verdict)
    if proposal.kind == "malformed" or proposal.rule is None:
        return StepOutcome(kind="rejected", reason=REASON_MALFORMED)
    rule = proposal.rule
    if rule not in state.problem.rule_set:
        return StepOutcome(kind="rejected", reason=REASON_NOT_IN_PROBLEM)
    for p in rule.premises:
        if p not in state.derived:
            return StepOutcome(kind="rejected", reason=REASON_NOT_APPLICABLE)
    concl = rule.conclusion
    if concl in state.derived:
        derived, new_facts = state.derived, state.new_facts
    else:
        derived, new_facts = state.derived | {concl}, state.new_facts + (concl,)
    nxt = ProofState(
        problem=state.problem,
        derived=derived,
        new_facts=new_facts,
        applied=state.applied + (rule,),
        applied_set=state.applied_set | {rule},
    )
    return StepOutcome(kind="accepted", state=nxt)


def _ground_truth(problem: Problem) -> bool:
    if problem.label is not None:
        return problem.label
    return label_and_depth(problem)[0]


def run_proof(
    problem: Problem,
    proposer: Proposer,
    config: EngineConfig = EngineConfig(),
    problem_id: str = "",
) -> ProofTrace:
    """Drive one proof to a terminal claim, the iteration cap, or a
    transport failure (ProposerFailure, with .partial_trace attached)."""
    state = ProofState.initial(problem)
    accepted: list[Rule] = []
    faulty: list[FaultyProposal] = []
    iterations = 0
    k = config.candidates_per_step

    def finish(terminal: str, predicted: bool | None) -> ProofTrace:
        if predicted is None:
            predicted = not _ground_truth(problem)
        return ProofTrace(
            problem_id=problem_id,
            accepted_steps=tuple(accepted),
            faulty_proposals=tuple(faulty),
            terminal=terminal,
            iterations_used=iterations,
            predicted_label=predicted,
        )

    while iterations < config.max_iterations:
        iterations += 1
        if config.order == ORDER_SHUFFLE:
            text = serialize_state(
                state, ORDER_SHUFFLE, child_seed(config.shuffle_seed, problem_id, iterations)
            )
        else:
            text = serialize_state(state, config.order)
        try:
            candidates = proposer.propose(state, text, k)
        except ProposerFailure as exc:
            exc.partial_trace = finish(TERMINAL_UNRESOLVED, None)
            raise
        if not candidates:
            raise ProposerFailure("proposer returned no candidates")
        chosen: StepOutcome | None = None
        for prop in candidates[:k]:
            outcome = step_transition(state, prop)
            if outcome.kind == "terminated":
                return finish(
                    TERMINAL_TRUE if outcome.verdict else TERMINAL_FALSE, outcome.verdict
                )
            if outcome.kind == "accepted":
                chosen = outcome
                break
        if chosen is not None:
            state = chosen.state
            accepted.append(state.applied[-1])
            continue
        head = candidates[0]
        faulty.append(
            FaultyProposal(
                iteration=iterations,
                proposal=head,
                reason=step_transition(state, head).reason,
            )
        )
        if not config.retry_on_invalid:
            return finish(TERMINAL_UNRESOLVED, None)
    return finish(TERMINAL_UNRESOLVED, None)
