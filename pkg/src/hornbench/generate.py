"""Seeded problem-set generation.

Three samplers:

  rp    sample rules, facts, and a query at random, then COMPUTE the label
        by forward chaining.  Problem size correlates with the label (more
        rules make the query easier to derive), which is the spurious
        statistical feature the balanced variant removes.
  lp    fix the target (label, depth) first, plant a derivation (or failing
        chain) of exactly that depth, pad with distractors, and re-verify.
  rp_b  rp sampling plus stratified rejection keeping |#True - #False| <= 1
        inside every exact-rule-count bucket, which removes the rule-count /
        label correlation while preserving depth stratification.

All samplers stratify depths to equal-size buckets, deduplicate by the
canonical serialized text, compute every label by forward chaining (never
assume it), and are byte-deterministic under (config, seed).  Candidate i
depends only on (seed, i), so candidate evaluation can be fanned out to
worker processes and merged in index order without changing the output.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from random import Random
from typing import Iterator, Sequence

from .core import (
    HornError,
    Problem,
    ProofState,
    RawRule,
    Rule,
    _label_and_depth_raw,
    apply_rule,
    oracle_next,
)
from .proposers import load_vocabulary
from .seeds import child_seed
from .textwire import StepInstance, rule_text, serialize_problem, serialize_state

KIND_RP = "rp"
KIND_LP = "lp"
KIND_RP_BALANCED = "rp_b"
KINDS = (KIND_RP, KIND_LP, KIND_RP_BALANCED)


class ExhaustedSampling(HornError):
    """Stratification targets unreachable under the given config."""


@dataclass(frozen=True)
class GenConfig:
    """Knobs for one generation run.

    rules_range/facts_range/pool_range defaults are tuned so that depths 0-6
    all occur at workable rates under rp sampling, the oracle needs a
    single-digit number of steps per problem, and the rule-count/label
    correlation is clearly present in rp output.
    """

    vocabulary: tuple[str, ...] = field(default_factory=load_vocabulary)
    num_problems: int = 1000
    depth_range: tuple[int, int] = (0, 6)
    rules_range: tuple[int, int] = (12, 44)
    facts_range: tuple[int, int] = (1, 4)
    pool_range: tuple[int, int] = (20, 34)
    premise_weights: tuple[float, float, float] = (0.55, 0.30, 0.15)
    seed: int = 0
    split: tuple[int, int, int] = (80, 10, 10)
    max_attempts_factor: int = 5000

    def __post_init__(self):
        lo, hi = self.depth_range
        if not 0 <= lo <= hi:
            raise ValueError(f"bad depth_range {self.depth_range}")
        if sum(self.split) != 100:
            raise ValueError(f"split must sum to 100, got {self.split}")
        if self.pool_range[0] < max(self.facts_range[1], 4):
            raise ValueError("pool_range too small for facts_range")
        if len(self.vocabulary) < self.pool_range[1]:
            raise ValueError("vocabulary smaller than pool_range upper bound")
        if len(self.premise_weights) != 3 or min(self.premise_weights) < 0:
            raise ValueError(f"bad premise_weights {self.premise_weights}")


@dataclass(frozen=True)
class Dataset:
    subset_kind: str
    problems: tuple[Problem, ...]
    provenance: GenConfig

    def ids(self) -> list[str]:
        return [f"{self.subset_kind}-{i:07d}" for i in range(len(self.problems))]


def _largest_remainder(total: int, weights: Sequence[float]) -> list[int]:
    """Integer allocation of `total` proportional to weights, summing exactly."""
    scale = sum(weights)
    exact = [total * w / scale for w in weights]
    floors = [int(x) for x in exact]
    short = total - sum(floors)
    order = sorted(range(len(weights)), key=lambda i: (floors[i] - exact[i], i))
    for i in order[:short]:
        floors[i] += 1
    return floors


def _depth_quotas(config: GenConfig) -> dict[int, int]:
    lo, hi = config.depth_range
    depths = list(range(lo, hi + 1))
    counts = _largest_remainder(config.num_problems, [1.0] * len(depths))
    return dict(zip(depths, counts))


# --- rp / rp_b candidate sampling -----------------------------------------


def _premise_count(rng: Random, weights: tuple[float, float, float]) -> int:
    u = rng.random() * (weights[0] + weights[1] + weights[2])
    if u < weights[0]:
        return 1
    if u < weights[0] + weights[1]:
        return 2
    return 3


def _sample_candidate(rng: Random, config: GenConfig):
    """One random candidate: (raw rules, facts, query)."""
    randrange = rng.randrange
    pool_lo, pool_hi = config.pool_range
    pool = rng.sample(config.vocabulary, pool_lo + randrange(pool_hi - pool_lo + 1))
    n = len(pool)
    rules_lo, rules_hi = config.rules_range
    n_rules = rules_lo + randrange(rules_hi - rules_lo + 1)
    facts_lo, facts_hi = config.facts_range
    facts = tuple(rng.sample(pool, facts_lo + randrange(facts_hi - facts_lo + 1)))
    rules: list[RawRule] = []
    seen: set[RawRule] = set()
    guard = 0
    while len(rules) < n_rules and guard < 20 * n_rules:
        guard += 1
        k = _premise_count(rng, config.premise_weights)
        a = randrange(n)
        if k == 1:
            premises = (pool[a],)
        elif k == 2:
            b = randrange(n)
            while b == a:
                b = randrange(n)
            premises = (pool[a], pool[b])
        else:
            b = randrange(n)
            while b == a:
                b = randrange(n)
            c = randrange(n)
            while c == a or c == b:
                c = randrange(n)
            premises = (pool[a], pool[b], pool[c])
        ci = randrange(n)
        while pool[ci] in premises:
            ci = randrange(n)
        raw = (premises, pool[ci])
        if raw in seen:
            continue
        seen.add(raw)
        rules.append(raw)
    query = pool[randrange(n)]
    return rules, facts, query


def _evaluate_candidate(config: GenConfig, kind: str, index: int):
    """Build and label candidate `index`; None when its depth is out of range."""
    rng = Random(child_seed(config.seed, kind, index))
    rules, facts, query = _sample_candidate(rng, config)
    lo, hi = config.depth_range
    label, depth = _label_and_depth_raw(rules, facts, query, budget=hi)
    if not lo <= depth <= hi:
        return None
    return rules, facts, query, label, depth


def _evaluate_chunk(config: GenConfig, kind: str, start: int, count: int):
    return [(i, _evaluate_candidate(config, kind, i)) for i in range(start, start + count)]


def _candidate_stream(config: GenConfig, kind: str, jobs: int):
    """Evaluated candidates in index order, optionally fanned out to processes."""
    limit = config.max_attempts_factor * config.num_problems
    if jobs <= 1:
        for i in range(limit):
            yield i, _evaluate_candidate(config, kind, i)
        return
    chunk = 4096
    window = jobs * 2
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        pending = []
        start = 0
        while start < limit or pending:
            while start < limit and len(pending) < window:
                n = min(chunk, limit - start)
                pending.append(pool.submit(_evaluate_chunk, config, kind, start, n))
                start += n
            done = pending.pop(0)
            yield from done.result()


def _problem_from_raw(rules, facts, query, label, depth) -> Problem:
    return Problem(
        rules=tuple(Rule(p, c) for p, c in rules),
        facts=facts,
        query=query,
        label=label,
        depth=depth,
    )


def _canonical_digest(problem: Problem) -> bytes:
    return hashlib.blake2b(
        serialize_problem(problem).encode("utf-8"), digest_size=12
    ).digest()


def _generate_rp_family(config: GenConfig, kind: str, balanced: bool, jobs: int) -> Dataset:
    quotas = _depth_quotas(config)
    open_quota = sum(quotas.values())
    imbalance: dict[int, int] = {}  # rule count -> #True - #False
    seen: set[bytes] = set()
    accepted: list[Problem] = []
    for _, cand in _candidate_stream(config, kind, jobs):
        if open_quota == 0:
            break
        if cand is None:
            continue
        rules, facts, query, label, depth = cand
        if quotas.get(depth, 0) == 0:
            continue
        if balanced:
            imb = imbalance.get(len(rules), 0)
            if (imb > 0 and label) or (imb < 0 and not label):
                continue
        problem = _problem_from_raw(rules, facts, query, label, depth)
        digest = _canonical_digest(problem)
        if digest in seen:
            continue
        seen.add(digest)
        quotas[depth] -= 1
        open_quota -= 1
        if balanced:
            imbalance[len(rules)] = imbalance.get(len(rules), 0) + (1 if label else -1)
        accepted.append(problem)
    if open_quota:
        missing = {d: q for d, q in quotas.items() if q}
        raise ExhaustedSampling(
            f"{kind}: could not fill depth buckets {missing} within "
            f"{config.max_attempts_factor * config.num_problems} candidates"
        )
    return Dataset(subset_kind=kind, problems=tuple(accepted), provenance=config)


def generate_rp(config: GenConfig, jobs: int = 1) -> Dataset:
    """Rule-priority sampling: label computed after the fact, never planted."""
    return _generate_rp_family(config, KIND_RP, balanced=False, jobs=jobs)


def generate_rp_balanced(config: GenConfig, jobs: int = 1) -> Dataset:
    """Rule-priority sampling with the rule-count/label correlation removed."""
    return _generate_rp_family(config, KIND_RP_BALANCED, balanced=True, jobs=jobs)


# --- lp: label fixed first, problem planted around it ----------------------


def _sample_distinct(rng: Random, pool: Sequence[str], exclude: set[str], k: int) -> list[str]:
    allowed = [w for w in pool if w not in exclude]
    if len(allowed) < k:
        return []
    return rng.sample(allowed, k)


def _plant_candidate(rng: Random, config: GenConfig, label: bool, depth: int):
    """One candidate with a planted derivation (or failing chain) of `depth`."""
    pool = rng.sample(config.vocabulary, rng.randint(*config.pool_range))
    n_rules = rng.randint(*config.rules_range)
    n_facts = rng.randint(*config.facts_range)
    spine = rng.sample(pool, depth + 1)
    query = spine[-1]
    spine_set = set(spine)
    rules: list[RawRule] = []
    seen: set[RawRule] = set()

    if label:
        # spine[0] is a fact; each spine rule lifts the chain one level.
        facts_pool = [w for w in pool if w not in spine_set or w == spine[0]]
        n_facts = min(n_facts, len(facts_pool))
        facts = {spine[0]}
        while len(facts) < n_facts:
            facts.add(rng.choice(facts_pool))
        derivable_below = sorted(facts)
    else:
        # Nothing concludes spine[0] and it is not a fact, so the chain fails
        # bottom-up with false-depth exactly `depth`.
        facts_pool = [w for w in pool if w not in spine_set]
        n_facts = min(n_facts, len(facts_pool))
        facts = set(rng.sample(facts_pool, n_facts)) if n_facts else set()
        derivable_below = sorted(facts)

    for i in range(1, depth + 1):
        premises = [spine[i - 1]]
        extra_pool = [w for w in derivable_below if w != spine[i - 1]] + spine[1:i]
        n_extra = rng.randint(0, 2)
        for w in rng.sample(extra_pool, min(n_extra, len(extra_pool))):
            if w not in premises:
                premises.append(w)
        rng.shuffle(premises)
        raw = (tuple(premises), spine[i])
        rules.append(raw)
        seen.add(raw)

    # Distractors never conclude a spine literal, so they cannot shorten the
    # planted proof or revive the failing chain.
    concl_pool = [w for w in pool if w not in spine_set]
    guard = 0
    while len(rules) < n_rules and guard < 20 * n_rules and concl_pool:
        guard += 1
        k = _premise_count(rng, config.premise_weights)
        premises = tuple(rng.sample(pool, k))
        conclusion = rng.choice(concl_pool)
        if conclusion in premises:
            continue
        raw = (premises, conclusion)
        if raw in seen:
            continue
        seen.add(raw)
        rules.append(raw)
    rng.shuffle(rules)
    return rules, tuple(sorted(facts)), query


def _lp_cells(config: GenConfig) -> list[tuple[tuple[bool, int], int]]:
    lo, hi = config.depth_range
    cells = [(label, d) for d in range(lo, hi + 1) for label in (True, False)]
    counts = _largest_remainder(config.num_problems, [1.0] * len(cells))
    return [((label, d), n) for (label, d), n in zip(cells, counts)]


def _lp_fill_cell(config: GenConfig, label: bool, depth: int, quota: int):
    """Accepted problems for one (label, depth) cell, in attempt order."""
    out = []
    limit = config.max_attempts_factor * max(quota, 1)
    for attempt in range(limit):
        if len(out) >= quota:
            break
        rng = Random(child_seed(config.seed, KIND_LP, label, depth, attempt))
        rules, facts, query = _plant_candidate(rng, config, label, depth)
        got_label, got_depth = _label_and_depth_raw(
            rules, facts, query, budget=config.depth_range[1]
        )
        if got_label != label or got_depth != depth:
            continue  # a distractor broke the plant; reject, never relabel
        out.append(_problem_from_raw(rules, facts, query, got_label, got_depth))
    if len(out) < quota:
        raise ExhaustedSampling(
            f"lp cell (label={label}, depth={depth}): filled {len(out)}/{quota}"
        )
    return out


def generate_lp(config: GenConfig, jobs: int = 1) -> Dataset:
    """Label-priority sampling: target label and depth planted, then verified."""
    cells = _lp_cells(config)
    if jobs <= 1:
        per_cell = [_lp_fill_cell(config, label, d, quota) for (label, d), quota in cells]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [
                pool.submit(_lp_fill_cell, config, label, d, quota)
                for (label, d), quota in cells
            ]
            per_cell = [f.result() for f in futures]
    seen: set[bytes] = set()
    accepted: list[Problem] = []
    for group in per_cell:
        for problem in group:
            digest = _canonical_digest(problem)
            if digest in seen:
                continue
            seen.add(digest)
            accepted.append(problem)
    if len(accepted) < config.num_problems:
        raise ExhaustedSampling(
            f"lp: {config.num_problems - len(accepted)} duplicates collided across cells"
        )
    # Interleave cells deterministically so file order is not label-sorted.
    rng = Random(child_seed(config.seed, KIND_LP, "interleave"))
    rng.shuffle(accepted)
    return Dataset(subset_kind=KIND_LP, problems=tuple(accepted), provenance=config)


def generate(kind: str, config: GenConfig, jobs: int = 1) -> Dataset:
    if kind == KIND_RP:
        return generate_rp(config, jobs)
    if kind == KIND_LP:
        return generate_lp(config, jobs)
    if kind == KIND_RP_BALANCED:
        return generate_rp_balanced(config, jobs)
    raise ValueError(f"unknown subset kind {kind!r}; expected one of {KINDS}")


# --- step expansion and splits ---------------------------------------------


def iter_problem_steps(
    problem: Problem, order: str = "canonical", seed: int | None = None
) -> Iterator[StepInstance]:
    """Oracle step instances for one problem: one per rule application plus
    one terminal instance ("True"/"False")."""
    state = ProofState.initial(problem)
    step = 0
    while True:
        if order == "shuffle":
            text = serialize_state(state, order, child_seed(seed or 0, "step", step))
        else:
            text = serialize_state(state, order)
        nxt = oracle_next(state)
        if nxt is True:
            yield StepInstance(input=text, target="True")
            return
        if nxt is False:
            yield StepInstance(input=text, target="False")
            return
        yield StepInstance(input=text, target=rule_text(nxt))
        state = apply_rule(state, nxt)
        step += 1


def expand_steps(dataset: Dataset) -> list[StepInstance]:
    """All step instances of a dataset, problem by problem."""
    out: list[StepInstance] = []
    for problem in dataset.problems:
        out.extend(iter_problem_steps(problem))
    return out


def split(
    dataset: Dataset,
    percentages: tuple[int, int, int] | None = None,
    seed: int | None = None,
) -> tuple[Dataset, Dataset, Dataset]:
    """Deterministic stratified split with exact global sizes.

    Stratified by (depth, label); per-stratum allocations come from largest
    remainder, then single problems are reassigned between splits (choosing
    the stratum with the most allocation slack) until the global sizes match
    the percentages exactly.
    """
    pcts = percentages if percentages is not None else dataset.provenance.split
    if sum(pcts) != 100:
        raise ValueError(f"split percentages must sum to 100, got {pcts}")
    base_seed = seed if seed is not None else dataset.provenance.seed
    problems = dataset.problems
    n = len(problems)
    targets = _largest_remainder(n, pcts)

    strata: dict[tuple, list[int]] = {}
    for i, p in enumerate(problems):
        strata.setdefault((p.depth, p.label), []).append(i)
    keys = sorted(strata, key=str)
    quotas = {key: _largest_remainder(len(strata[key]), pcts) for key in keys}

    totals = [sum(quotas[key][k] for key in keys) for k in range(3)]
    while totals != targets:
        k_over = next(k for k in range(3) if totals[k] > targets[k])
        k_under = next(k for k in range(3) if totals[k] < targets[k])
        best = max(
            (key for key in keys if quotas[key][k_over] > 0),
            key=lambda key: (
                quotas[key][k_over] - len(strata[key]) * pcts[k_over] / 100,
                str(key),
            ),
        )
        quotas[best][k_over] -= 1
        quotas[best][k_under] += 1
        totals[k_over] -= 1
        totals[k_under] += 1

    assignment: dict[int, int] = {}
    for key in keys:
        indices = list(strata[key])
        Random(child_seed(base_seed, "split", str(key))).shuffle(indices)
        q0, q1, _ = quotas[key]
        for pos, idx in enumerate(indices):
            assignment[idx] = 0 if pos < q0 else (1 if pos < q0 + q1 else 2)

    parts: list[list[Problem]] = [[], [], []]
    for i, p in enumerate(problems):
        parts[assignment[i]].append(p)
    make = lambda ps: Dataset(dataset.subset_kind, tuple(ps), dataset.provenance)
    return make(parts[0]), make(parts[1]), make(parts[2])
