"""Shared fixtures: brute-force oracles and small-problem samplers.

The oracles here deliberately share no code with the package's engine:
labels come from a repeated-full-scan fixpoint loop, True depths from an
iterative-deepening backward search, and False depths from a memo-free
path-set recursion.  They are the reference the fast implementations are
measured against.
"""

from __future__ import annotations

from random import Random

import pytest

from hornbench.core import Problem, Rule


def naive_label(problem: Problem) -> bool:
    """Iterate-to-fixpoint with full rescans; no indexing, no scheduling."""
    derived = set(problem.facts)
    changed = True
    while changed:
        changed = False
        for rule in problem.rules:
            if rule.conclusion not in derived and all(p in derived for p in rule.premises):
                derived.add(rule.conclusion)
                changed = True
    return problem.query in derived


def exhaustive_true_depth(problem: Problem) -> int | None:
    """Minimal proof-tree height by iterative deepening; None if underivable."""
    facts = set(problem.facts)
    memo: dict[tuple[str, int], bool] = {}

    def derivable_within(lit: str, k: int) -> bool:
        if lit in facts:
            return True
        if k == 0:
            return False
        key = (lit, k)
        if key in memo:
            return memo[key]
        memo[key] = False  # guards cyclic self-support at this bound
        ok = any(
            r.conclusion == lit and all(derivable_within(p, k - 1) for p in r.premises)
            for r in problem.rules
        )
        memo[key] = ok
        return ok

    limit = len(problem.rules) + 1
    for k in range(limit + 1):
        if derivable_within(problem.query, k):
            return k
    return None


def exhaustive_false_depth(problem: Problem) -> int:
    """Memo-free transcription of the failing-branch depth definition."""
    facts = set(problem.facts)
    derived = set(facts)
    changed = True
    while changed:
        changed = False
        for rule in problem.rules:
            if rule.conclusion not in derived and all(p in derived for p in rule.premises):
                derived.add(rule.conclusion)
                changed = True
    true_depth = {lit: exhaustive_true_depth(Problem(problem.rules, problem.facts, lit)) for lit in derived}

    def fd(lit: str, path: frozenset[str]) -> int:
        concluding = [r for r in problem.rules if r.conclusion == lit]
        if not concluding:
            return 0
        best = None
        for rule in concluding:
            worst = 0
            for p in rule.premises:
                if p in derived:
                    v = true_depth[p]
                elif p in path:
                    v = 0
                else:
                    v = fd(p, path | {lit})
                worst = max(worst, v)
            cand = 1 + worst
            if best is None or cand < best:
                best = cand
        return best

    return fd(problem.query, frozenset())


def exhaustive_label_and_depth(problem: Problem) -> tuple[bool, int]:
    if naive_label(problem):
        return True, exhaustive_true_depth(problem)
    return False, exhaustive_false_depth(problem)


SMALL_WORDS = tuple("abcdefghijkl")  # <= 12 literals


def sample_small_problem(rng: Random, max_literals: int = 12, max_rules: int = 10) -> Problem:
    pool = rng.sample(SMALL_WORDS, rng.randint(3, max_literals))
    n_rules = rng.randint(0, max_rules)
    rules: list[Rule] = []
    seen = set()
    for _ in range(n_rules):
        k = rng.randint(1, min(3, len(pool) - 1))
        premises = tuple(rng.sample(pool, k))
        rest = [w for w in pool if w not in premises]
        conclusion = rng.choice(rest)
        if (premises, conclusion) in seen:
            continue
        seen.add((premises, conclusion))
        rules.append(Rule(premises, conclusion))
    facts = tuple(rng.sample(pool, rng.randint(0, min(4, len(pool)))))
    query = rng.choice(pool)
    return Problem(rules=tuple(rules), facts=facts, query=query)


@pytest.fixture
def rng():
    return Random(20240811)


def chain_problem(length: int, derivable: bool = True) -> Problem:
    """a0 -> a1 -> ... -> query, rooted in a fact (or not)."""
    words = [f"lit{chr(ord('a') + i)}" for i in range(length + 1)]
    rules = tuple(Rule((words[i],), words[i + 1]) for i in range(length))
    facts = (words[0],) if derivable else ()
    return Problem(rules=rules, facts=facts, query=words[-1])
