"""Propositional Horn-clause core: rules, problems, forward chaining, proof depths.

Everything here is pure and immutable.  A problem is a list of rules (1-3
premise Horn clauses), a set of facts, and a query literal, under a
closed-world assumption: whatever forward chaining cannot derive is False.

Depth semantics:
  * True query: minimal proof-tree height -- depth(l) = 0 for facts, else
    min over rules concluding l of (1 + max over premises of depth).
  * False query: the dual recursion -- false_depth(l) = 0 when nothing
    concludes l, else 1 + min over concluding rules of the max premise
    depth, where derivable premises contribute their proof depth and
    underivable ones recurse.  A literal revisited while its own depth is
    being computed (a cyclic dependency) fails on the spot with depth 0.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence, Union

LITERAL_RE = re.compile(r"[a-z]+\Z")

# Raw rule form used on hot paths (generation evaluates millions of candidate
# problems; constructing Rule objects for rejected candidates is wasted work).
RawRule = tuple[tuple[str, ...], str]


class HornError(Exception):
    """Base class for all package errors."""


class IllegalLiteral(HornError):
    """A literal token violates the [a-z]+ lexicon."""


class NotInProblem(HornError):
    """apply_rule was given a rule that is not part of the problem."""

    def __init__(self, rule: "Rule"):
        super().__init__(f"rule not in problem: {rule}")
        self.rule = rule


class NotApplicable(HornError):
    """apply_rule was given a rule whose premises are not all derived."""

    def __init__(self, rule: "Rule"):
        super().__init__(f"rule not applicable: {rule}")
        self.rule = rule


def check_literal(name: str) -> str:
    if not LITERAL_RE.match(name):
        raise IllegalLiteral(f"bad literal {name!r}: literals are nonempty [a-z]+ tokens")
    return name


@dataclass(frozen=True)
class Rule:
    """A Horn clause with 1-3 distinct premises and a single conclusion."""

    premises: tuple[str, ...]
    conclusion: str

    def __post_init__(self):
        n = len(self.premises)
        if not 1 <= n <= 3:
            raise ValueError(f"rule must have 1-3 premises, got {n}")
        if len(set(self.premises)) != n:
            raise ValueError(f"duplicate premises in rule: {self.premises}")
        if self.conclusion in self.premises:
            raise ValueError(f"conclusion {self.conclusion!r} appears among premises")

    def raw(self) -> RawRule:
        return (self.premises, self.conclusion)

    def __str__(self) -> str:
        return ",".join(self.premises) + "=>" + self.conclusion


@dataclass(frozen=True)
class Problem:
    """Rules, facts, and a query, optionally annotated with label and depth.

    Rule and fact order is meaningful: it is the canonical iteration order
    for forward chaining and serialization.  Facts behave as a set for
    semantics but keep their order for byte-stable output.
    """

    rules: tuple[Rule, ...]
    facts: tuple[str, ...]
    query: str
    label: bool | None = None
    depth: int | None = None

    def __post_init__(self):
        if len(set(self.rules)) != len(self.rules):
            raise ValueError("duplicate rules in problem")
        if len(set(self.facts)) != len(self.facts):
            raise ValueError("duplicate facts in problem")

    @cached_property
    def rule_set(self) -> frozenset[Rule]:
        return frozenset(self.rules)

    @cached_property
    def fact_set(self) -> frozenset[str]:
        return frozenset(self.facts)

    @cached_property
    def literals(self) -> frozenset[str]:
        out = set(self.facts)
        out.add(self.query)
        for r in self.rules:
            out.update(r.premises)
            out.add(r.conclusion)
        return frozenset(out)

    def statement_equal(self, other: "Problem") -> bool:
        """Equality up to rule/fact order, ignoring label and depth."""
        return (
            self.query == other.query
            and self.rule_set == other.rule_set
            and self.fact_set == other.fact_set
        )


@dataclass(frozen=True)
class ClosureResult:
    """Least fixpoint of forward chaining plus a replayable schedule."""

    derived: frozenset[str]
    derivation_depth: dict[str, int]
    applied_order: tuple[Rule, ...]


def _closure_raw(
    rules: Sequence[RawRule], facts: Iterable[str]
) -> tuple[set[str], dict[str, int], list[int]]:
    """Indexed forward chaining on raw rules.

    Returns (derived set, depth per derived literal, fired rule indices in
    firing order).  Depth is the BFS round at which a literal first becomes
    derivable, which equals the min-max proof-tree height.  Every rule whose
    premises are all derivable fires exactly once, in deterministic order
    (round by round, then problem order within a round).
    """
    depth: dict[str, int] = {}
    for f in facts:
        depth[f] = 0
    remaining = [len(r[0]) for r in rules]
    by_premise: dict[str, list[int]] = {}
    for i, (premises, _) in enumerate(rules):
        for p in premises:
            by_premise.setdefault(p, []).append(i)
    fired: list[int] = []
    current = list(depth)
    rounds = 0
    while current:
        rounds += 1
        ready: list[int] = []
        for lit in current:
            for i in by_premise.get(lit, ()):
                remaining[i] -= 1
                if remaining[i] == 0:
                    ready.append(i)
        ready.sort()
        nxt: list[str] = []
        for i in ready:
            fired.append(i)
            concl = rules[i][1]
            if concl not in depth:
                depth[concl] = rounds
                nxt.append(concl)
        current = nxt
    return set(depth), depth, fired


def forward_closure(rules: Sequence[Rule], facts: Iterable[str]) -> ClosureResult:
    """Least fixpoint of the rules over the facts, with min-max proof depths."""
    derived, depth, fired = _closure_raw([r.raw() for r in rules], facts)
    return ClosureResult(
        derived=frozenset(derived),
        derivation_depth=depth,
        applied_order=tuple(rules[i] for i in fired),
    )


def _false_depth_raw(
    query: str,
    rules: Sequence[RawRule],
    derivation_depth: dict[str, int],
    budget: int | None = None,
) -> int:
    """Depth of the shallowest failing branch for an underivable query.

    Matches a naive path-set recursion exactly.  Results are memoized only
    when their whole evaluation was context-free: touching an in-progress
    literal (a cycle cut) or clamping at the budget makes a value
    path-dependent, so such results taint everything above them and are
    never cached.  Values up to the budget are exact; anything deeper comes
    back as budget+1, and the bounded recursion depth keeps dense cyclic
    rule tangles affordable on generation's rejection-sampling hot path.
    """
    by_conclusion: dict[str, list[int]] = {}
    for i, (_, concl) in enumerate(rules):
        by_conclusion.setdefault(concl, []).append(i)
    exact: dict[str, int] = {}
    in_progress: set[str] = set()

    def fd(lit: str, rem: int) -> tuple[int, bool]:
        """min(contextual value, rem+1) and whether the result is tainted."""
        if lit in in_progress:
            return 0, True
        v = exact.get(lit)
        if v is not None:
            # Cached values are context-free: a consulting context can never
            # cut inside this literal's fully explored, cycle-free cone.
            if v <= rem:
                return v, False
            return rem + 1, False
        concluding = by_conclusion.get(lit)
        if not concluding:
            exact[lit] = 0
            return 0, False
        if rem < 0:
            return 0, True  # bound holds trivially; subtree never explored
        in_progress.add(lit)
        best = rem + 1
        tainted = False
        for i in concluding:
            worst = 0
            for p in rules[i][0]:
                dv = derivation_depth.get(p)
                if dv is None:
                    dv, t = fd(p, rem - 1)
                    tainted |= t
                if dv > worst:
                    worst = dv
                    if worst + 1 >= best:
                        break
            if worst + 1 < best:
                best = worst + 1
                if best == 1:
                    break
        in_progress.discard(lit)
        if best > rem:
            # Truncation clamp: the subtree was not fully explored, so a
            # cycle may hide beyond the cutoff.  Always tainted -- ancestors
            # must not cache values built on it (the bound itself is valid
            # for the current path).
            return best, True
        if tainted:
            return best, True
        exact[lit] = best
        return best, False

    # Unbounded: true values never exceed 2*len(rules)+1 (distinct rules along
    # any value path, plus a derived premise's depth), so this never clamps.
    value, _ = fd(query, budget if budget is not None else 2 * len(rules) + 2)
    return value


def _label_and_depth_raw(
    rules: Sequence[RawRule],
    facts: Iterable[str],
    query: str,
    max_depth: int | None = None,
    budget: int | None = None,
) -> tuple[bool, int]:
    derived, depth, _ = _closure_raw(rules, facts)
    if query in derived:
        return True, depth[query]
    value = _false_depth_raw(query, rules, depth, budget=budget)
    if max_depth is not None and value > max_depth:
        value = max_depth
    return False, value


def label_and_depth(problem: Problem, max_depth: int | None = None) -> tuple[bool, int]:
    """Ground-truth label and proof depth of the problem's query.

    max_depth, when given, caps False depths (cyclic rule dependencies can
    otherwise push failing-branch depths past any configured bucket range).
    """
    return _label_and_depth_raw(
        [r.raw() for r in problem.rules], problem.facts, problem.query, max_depth
    )


def applicable_rules(
    rules: Sequence[Rule],
    derived_facts: frozenset[str] | set[str],
    applied: frozenset[Rule] | set[Rule],
) -> list[Rule]:
    """Unapplied rules whose premises are all derived, in problem order."""
    out = []
    for r in rules:
        if r in applied:
            continue
        ok = True
        for p in r.premises:
            if p not in derived_facts:
                ok = False
                break
        if ok:
            out.append(r)
    return out


@dataclass(frozen=True)
class ProofState:
    """Immutable snapshot of a proof in progress.

    new_facts lists literals derived beyond the problem's own facts, in
    application order; applied lists accepted rules in application order
    (re-applications of an already-applied rule are kept in the list but
    deduplicated in applied_set).
    """

    problem: Problem
    derived: frozenset[str]
    new_facts: tuple[str, ...] = ()
    applied: tuple[Rule, ...] = ()
    applied_set: frozenset[Rule] = frozenset()

    @classmethod
    def initial(cls, problem: Problem) -> "ProofState":
        return cls(problem=problem, derived=problem.fact_set)

    @property
    def query_derived(self) -> bool:
        return self.problem.query in self.derived


def apply_rule(state: ProofState, rule: Rule) -> ProofState:
    """Apply one rule, returning the successor state.

    Raises NotInProblem / NotApplicable instead of guessing; the derived set
    gains the conclusion (or nothing, when a valid rule is re-applied after
    its conclusion is already known).
    """
    if rule not in state.problem.rule_set:
        raise NotInProblem(rule)
    for p in rule.premises:
        if p not in state.derived:
            raise NotApplicable(rule)
    concl = rule.conclusion
    if concl in state.derived:
        derived = state.derived
        new_facts = state.new_facts
    else:
        derived = state.derived | {concl}
        new_facts = state.new_facts + (concl,)
    return ProofState(
        problem=state.problem,
        derived=derived,
        new_facts=new_facts,
        applied=state.applied + (rule,),
        applied_set=state.applied_set | {rule},
    )


def oracle_next(state: ProofState) -> Union[bool, Rule]:
    """The canonical forward-chaining next step for a state.

    True when the query is already derived; otherwise the first unapplied
    applicable rule in problem order; otherwise False (search exhausted).
    """
    if state.problem.query in state.derived:
        return True
    derived = state.derived
    applied = state.applied_set
    for r in state.problem.rules:
        if r in applied:
            continue
        for p in r.premises:
            if p not in derived:
                break
        else:
            return r
    return False


def oracle_schedule(problem: Problem) -> tuple[tuple[Rule, ...], bool]:
    """Full oracle run: the accepted steps in order and the terminal verdict."""
    state = ProofState.initial(problem)
    steps: list[Rule] = []
    while True:
        nxt = oracle_next(state)
        if isinstance(nxt, bool):
            return tuple(steps), nxt
        steps.append(nxt)
        state = apply_rule(state, nxt)
