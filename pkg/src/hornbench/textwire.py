"""Bit-exact text form for problems, proof states, step instances, and proposals.

Every literal occurrence is followed by exactly one demarcation character:

    ?   the query                     cute?
    ,   a non-final rule literal      aggressive,attentive,adorable:
    :   end of a rule; the literal    (last literal before ":" is the
        before it is the conclusion    conclusion, the rest are premises)
    1   a fact                        aggressive1

Items are separated by single spaces, with no leading or trailing
whitespace.  A proof section, when present, is introduced by a lone ";"
token and holds applied rules in application order, optionally ending in
"True" or "False".  Canonical item order is query, rules (problem order),
facts (problem order); the shuffle policy permutes rule order and fact
order under a seed while keeping that section layout, so any serialized
text reparses and reserializes to identical bytes.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .core import (
    HornError,
    LITERAL_RE,
    IllegalLiteral,
    Problem,
    ProofState,
    Rule,
    apply_rule,
    oracle_next,
    oracle_schedule,
)

ORDER_CANONICAL = "canonical"
ORDER_SHUFFLE = "shuffle"


class ParseError(HornError):
    """Malformed problem/state text; carries the byte offset of the fault."""

    def __init__(self, reason: str, offset: int):
        super().__init__(f"parse error at byte {offset}: {reason}")
        self.reason = reason
        self.offset = offset


class InvalidPrefix(HornError):
    """A trace prefix that does not replay against its problem."""


@dataclass(frozen=True)
class StepInstance:
    """One proof-step training instance: state text in, next step text out."""

    input: str
    target: str


@dataclass(frozen=True)
class ProofString:
    """A whole proof as one string of rule texts ending in True/False."""

    text: str


@dataclass(frozen=True)
class Proposal:
    """A proposer's answer: a candidate rule, a terminal verdict, or junk.

    kind is one of "rule", "terminal", "malformed"; text always preserves
    the raw proposal bytes so faulty steps stay auditable.
    """

    kind: str
    text: str
    rule: Rule | None = None
    verdict: bool | None = None
    rank: int = 0


# Literal validity is checked on every serialized token; problems reuse a
# small vocabulary, so a seen-set is much cheaper than re-running the regex.
_known_literals: set[str] = set()


def _check(lit: str) -> str:
    if lit in _known_literals:
        return lit
    if not LITERAL_RE.match(lit):
        raise IllegalLiteral(
            f"bad literal {lit!r}: literals are nonempty [a-z]+ tokens"
        )
    if len(_known_literals) < 1_000_000:
        _known_literals.add(lit)
    return lit


def rule_text(rule: Rule) -> str:
    parts = [_check(p) for p in rule.premises]
    parts.append(_check(rule.conclusion))
    return ",".join(parts) + ":"


def _problem_items(
    problem: Problem,
    extra_facts: tuple[str, ...],
    order: str,
    seed: int | None,
) -> list[str]:
    rules = list(problem.rules)
    facts = list(problem.facts) + list(extra_facts)
    if order == ORDER_SHUFFLE:
        rng = random.Random(seed if seed is not None else 0)
        rng.shuffle(rules)
        rng.shuffle(facts)
    elif order != ORDER_CANONICAL:
        raise ValueError(f"unknown order policy {order!r}")
    items = [_check(problem.query) + "?"]
    items.extend(rule_text(r) for r in rules)
    items.extend(_check(f) + "1" for f in facts)
    return items


def serialize_problem(
    problem: Problem, order: str = ORDER_CANONICAL, seed: int | None = None
) -> str:
    """Single-line problem text, deterministic under (problem, order, seed)."""
    return " ".join(_problem_items(problem, (), order, seed))


def serialize_state(
    state: ProofState, order: str = ORDER_CANONICAL, seed: int | None = None
) -> str:
    """Problem text with derived facts appended as facts and applied rules
    in a ";"-delimited proof section (omitted while nothing is applied)."""
    items = _problem_items(state.problem, state.new_facts, order, seed)
    if state.applied:
        items.append(";")
        items.extend(rule_text(r) for r in state.applied)
    return " ".join(items)


@dataclass(frozen=True)
class ParsedState:
    """Outcome of parsing a state text: the problem as written (facts include
    any derived ones), applied rules in order, and a terminal if present."""

    problem: Problem
    applied: tuple[Rule, ...]
    terminal: bool | None


def _parse_rule_token(token: str, offset: int) -> Rule:
    body = token[:-1]
    lits = body.split(",")
    if len(lits) < 2:
        raise ParseError(f"rule {token!r} needs at least two literals", offset)
    for lit in lits:
        if not LITERAL_RE.match(lit):
            raise ParseError(f"bad literal {lit!r} in rule {token!r}", offset)
    premises, conclusion = tuple(lits[:-1]), lits[-1]
    if len(premises) > 3:
        raise ParseError(f"rule {token!r} has more than three premises", offset)
    if len(set(premises)) != len(premises):
        raise ParseError(f"duplicate premises in rule {token!r}", offset)
    if conclusion in premises:
        raise ParseError(f"conclusion repeats a premise in rule {token!r}", offset)
    return Rule(premises, conclusion)


def parse_state(text: str) -> ParsedState:
    """Parse a problem or proof-state text.

    Accepts query/rule/fact items in any interleaving before the ";"
    separator; the proof section holds rules and an optional final
    True/False.  Rejects anything else, with a byte offset.
    """
    if text != text.strip() or "  " in text:
        raise ParseError("items must be separated by single spaces", 0)
    query: str | None = None
    rules: list[Rule] = []
    rule_seen: set[Rule] = set()
    facts: list[str] = []
    fact_seen: set[str] = set()
    applied: list[Rule] = []
    terminal: bool | None = None
    in_proof = False
    offset = 0
    for token in text.split(" "):
        if token == "":
            raise ParseError("empty item", offset)
        if terminal is not None:
            raise ParseError(f"item {token!r} after terminal", offset)
        if token == ";":
            if in_proof:
                raise ParseError("second proof separator", offset)
            in_proof = True
        elif token in ("True", "False"):
            if not in_proof:
                raise ParseError(f"terminal {token!r} outside proof section", offset)
            terminal = token == "True"
        elif token.endswith(":"):
            rule = _parse_rule_token(token, offset)
            if in_proof:
                applied.append(rule)
            else:
                if rule in rule_seen:
                    raise ParseError(f"duplicate rule {token!r}", offset)
                rule_seen.add(rule)
                rules.append(rule)
        elif in_proof:
            raise ParseError(f"only rules allowed in proof section, got {token!r}", offset)
        elif token.endswith("?"):
            lit = token[:-1]
            if not LITERAL_RE.match(lit):
                raise ParseError(f"bad query literal {lit!r}", offset)
            if query is not None:
                raise ParseError("second query", offset)
            query = lit
        elif token.endswith("1"):
            lit = token[:-1]
            if not LITERAL_RE.match(lit):
                raise ParseError(f"bad fact literal {lit!r}", offset)
            if lit in fact_seen:
                raise ParseError(f"duplicate fact {lit!r}", offset)
            fact_seen.add(lit)
            facts.append(lit)
        elif token.endswith(","):
            raise ParseError(f"dangling premise {token!r}", offset)
        else:
            raise ParseError(f"unclassifiable item {token!r}", offset)
        offset += len(token) + 1
    if query is None:
        raise ParseError("no query item", 0)
    problem = Problem(rules=tuple(rules), facts=tuple(facts), query=query)
    return ParsedState(problem=problem, applied=tuple(applied), terminal=terminal)


def parse_problem(text: str) -> Problem:
    """Inverse of serialize_problem (label/depth unset); rejects proof sections."""
    parsed = parse_state(text)
    if parsed.applied or parsed.terminal is not None:
        raise ParseError("unexpected proof section in problem text", text.index(";"))
    return parsed.problem


def parse_rule(text: str) -> Rule:
    """Strict rule-text parse ("p1,p2,c:"); raises ParseError on anything else."""
    if not text.endswith(":") or " " in text:
        raise ParseError(f"not a rule text: {text!r}", 0)
    return _parse_rule_token(text, 0)


def parse_proposal(text: str, rank: int = 0) -> Proposal:
    """Classify proposer output.  Malformed text is a value, never an error."""
    stripped = text.strip()
    if stripped == "True":
        return Proposal(kind="terminal", text=text, verdict=True, rank=rank)
    if stripped == "False":
        return Proposal(kind="terminal", text=text, verdict=False, rank=rank)
    if stripped.endswith(":") and " " not in stripped:
        try:
            rule = _parse_rule_token(stripped, 0)
        except ParseError:
            return Proposal(kind="malformed", text=text, rank=rank)
        return Proposal(kind="rule", text=text, rule=rule, rank=rank)
    return Proposal(kind="malformed", text=text, rank=rank)


def replay_prefix(problem: Problem, trace_prefix) -> ProofState:
    """Replay rules from the initial state, raising InvalidPrefix on failure."""
    state = ProofState.initial(problem)
    for rule in trace_prefix:
        try:
            state = apply_rule(state, rule)
        except HornError as exc:
            raise InvalidPrefix(f"prefix does not replay: {exc}") from exc
    return state


def render_step_instance(
    problem: Problem,
    trace_prefix=(),
    order: str = ORDER_CANONICAL,
    seed: int | None = None,
) -> StepInstance:
    """Input text for the state after trace_prefix, paired with the next
    oracle step ("True"/"False" or the next rule text) as target."""
    state = replay_prefix(problem, trace_prefix)
    nxt = oracle_next(state)
    if nxt is True:
        target = "True"
    elif nxt is False:
        target = "False"
    else:
        target = rule_text(nxt)
    return StepInstance(input=serialize_state(state, order, seed), target=target)


def render_whole_proof(problem: Problem, order: str = "forward") -> ProofString:
    """The oracle's complete proof as one string ending in True/False."""
    steps, verdict = oracle_schedule(problem)
    if order == "backward":
        steps = tuple(reversed(steps))
    elif order != "forward":
        raise ValueError(f"unknown proof order {order!r}")
    parts = [rule_text(r) for r in steps]
    parts.append("True" if verdict else "False")
    return ProofString(text=" ".join(parts))
