"""Policy evaluation, brute-force optimal policies and submodularity checkers.

All exact routines enumerate partial realizations and are guarded by the
enumeration cap; they are meant for desk-sized instances (a handful of items).
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .core import (
    PROB_TOL,
    ContractViolation,
    EnumerationCapError,
    InvalidInputError,
    PartialRealization,
    PartitionMatroid,
    all_partial_realizations,
    check_enumerable,
    child_stream,
    realizations,
    seed_stream,
)
from .objectives import Instance
from .oracle import ValueOracle, expected_marginal, expected_value
from .policies import STOP, Policy, run_policy, sample_size_asg

VIOLATION_TOL = 1e-9
DEFAULT_BRANCH_BOUND = 10 ** 7


@dataclass(frozen=True)
class EvalReport:
    favg: float
    stderr: float
    trials: int
    mean_queries: float
    mode: str


@dataclass(frozen=True)
class ViolationReport:
    property: str
    witness: dict
    lhs: float
    rhs: float

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs


class _ExactGains:
    """Exact, uncounted, memoized gains for one evaluation."""

    def __init__(self, instance: Instance):
        self.instance = instance
        self.n = instance.n
        self._cache: dict = {}

    def expected_gain(self, item: int, psi: PartialRealization) -> float:
        key = (item, psi)
        val = self._cache.get(key)
        if val is None:
            val = expected_marginal(self.instance, (item,), psi)
            self._cache[key] = val
        return val


def _require_small(instance: Instance) -> None:
    check_enumerable(instance.prior.support_size())


class _Expansion:
    """Policy-tree expansion against the prior.

    A node is ``(known, own, state)``: ``known`` is everything observed,
    ``own`` what the policy itself observed (they differ only when measuring
    a policy on top of a prefix).
    """

    def __init__(self, policy: Policy, instance: Instance, branch_bound: int):
        policy.validate(instance.n)
        self.policy = policy
        self.instance = instance
        self.gains = _ExactGains(instance)
        self.memo: dict = {}
        self.bound = branch_bound
        self.nodes = 0

    def node(self, known, own, state) -> tuple[float, float]:
        key = (known, own, state)
        hit = self.memo.get(key)
        if hit is not None:
            return hit
        self.nodes += 1
        if self.nodes > self.bound:
            raise EnumerationCapError(f"policy tree exceeds {self.bound} nodes")
        policy, inst = self.policy, self.instance
        dec = policy.decide(own, state, self.gains)
        mass = math.fsum(p for p, _, _ in dec.branches)
        if abs(mass - 1.0) > PROB_TOL:
            raise ContractViolation(f"{policy!r} branch probabilities sum to {mass!r}")
        values, queries = [], [dec.queries]
        for p, action, nxt in dec.branches:
            if action == STOP:
                values.append(p * expected_value(inst, known))
                continue
            if action is None:
                v, q = self.node(known, own, nxt)
                values.append(p * v)
                queries.append(p * q)
                continue
            e = int(action)
            if not 0 <= e < inst.n:
                raise ContractViolation(f"{policy!r} selected unknown item {e}")
            if e in own and not policy.reselects:
                raise ContractViolation(f"{policy!r} re-selected item {e}")
            for o, po in inst.prior.state_distribution(e, known):
                k2 = known if e in known else known.extend(e, o)
                o2 = own if e in own else own.extend(e, o)
                v, q = self.node(k2, o2, policy.observe(nxt, e, o))
                values.append(p * po * v)
                queries.append(p * po * q)
        out = (math.fsum(values), math.fsum(queries))
        self.memo[key] = out
        return out


def exact_favg(policy: Policy, instance: Instance, branch_bound: int = DEFAULT_BRANCH_BOUND) -> EvalReport:
    """Expected utility over the prior and all of the policy's internal randomness."""
    _require_small(instance)
    exp = _Expansion(policy, instance, branch_bound)
    empty = PartialRealization.empty()
    value, queries = exp.node(empty, empty, policy.start())
    return EvalReport(value, 0.0, 0, queries, "exact")


def policy_gain(policy: Policy, instance: Instance, psi: PartialRealization,
                branch_bound: int = DEFAULT_BRANCH_BOUND) -> float:
    """``Delta(pi | psi)``: the policy runs from scratch, value is measured jointly with ``dom(psi)``."""
    _require_small(instance)
    exp = _Expansion(policy, instance, branch_bound)
    value, _ = exp.node(psi, PartialRealization.empty(), policy.start())
    return value - expected_value(instance, psi)


def round_distribution(policy: Policy, instance: Instance, psi: PartialRealization, state=None) -> dict:
    """Exact law of the next action at ``(psi, state)``; keys are items, ``None`` or ``STOP``."""
    state = policy.start() if state is None else state
    dec = policy.decide(psi, state, _ExactGains(instance))
    out: dict = {}
    for p, action, _ in dec.branches:
        out[action] = out.get(action, 0.0) + p
    return out


def enumerate_favg(policy: Policy, instance: Instance, seed: int = 0) -> float:
    """``sum_phi p(phi) f(E(pi, phi), phi)`` by running the policy on every realization.

    Only meaningful for deterministic policies; an independent route to
    ``exact_favg`` that goes through the runner instead of the tree expansion.
    """
    total = []
    for phi, p in realizations(instance.prior):
        trace = run_policy(policy, phi, ValueOracle(instance), seed)
        total.append(p * trace.final_value)
    return math.fsum(total)


def _mc_chunk(policy, instance, seed, start, stop, oracle_mode, oracle_samples):
    base = seed_stream(seed, "evaluator")
    values = np.empty(stop - start)
    queries = np.empty(stop - start)
    for idx, t in enumerate(range(start, stop)):
        trial = child_stream(base, t)
        phi = instance.prior.sample(np.random.default_rng(child_stream(trial, 0)))
        oracle = ValueOracle(instance, oracle_mode, oracle_samples,
                             seed=child_stream(trial, 2) if oracle_mode == "mc" else 0)
        trace = run_policy(policy, phi, oracle, child_stream(trial, 1))
        values[idx] = trace.final_value
        queries[idx] = trace.queries.item_queries
    return values, queries


def mc_favg(policy: Policy, instance: Instance, trials: int, seed: int = 0, jobs: int = 1,
            oracle_mode: str = "exact", oracle_samples: int = 1000) -> EvalReport:
    """Sample mean of ``f(E(pi, Phi), Phi)`` over independent trials.

    Trial ``t`` uses its own child streams (realization, policy, oracle), so
    the report is identical for any ``jobs``.
    """
    if trials < 1:
        raise InvalidInputError("trials must be at least 1")
    policy.validate(instance.n)
    if jobs <= 1 or trials < 2 * jobs:
        values, queries = _mc_chunk(policy, instance, seed, 0, trials, oracle_mode, oracle_samples)
    else:
        edges = np.linspace(0, trials, jobs + 1).astype(int)
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [
                pool.submit(_mc_chunk, policy, instance, seed, int(a), int(b), oracle_mode, oracle_samples)
                for a, b in zip(edges[:-1], edges[1:])
            ]
            parts = [f.result() for f in futures]
        values = np.concatenate([v for v, _ in parts])
        queries = np.concatenate([q for _, q in parts])
    stderr = float(values.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return EvalReport(float(values.mean()), stderr, trials, float(queries.mean()), "monte_carlo")


# ---------------------------------------------------------------------------
# optimal policies by dynamic programming


def _optimal_from(instance: Instance, psi: PartialRealization, admissible, memo: dict, budget_key) -> float:
    """Best value reachable from ``psi``: stop now or pick an admissible item and recurse."""
    key = (psi.canonical(), budget_key)
    hit = memo.get(key)
    if hit is not None:
        return hit
    best = expected_value(instance, psi)
    for e, nxt_key in admissible(psi, budget_key):
        v = math.fsum(
            po * _optimal_from(instance, psi.extend(e, o), admissible, memo, nxt_key)
            for o, po in instance.prior.state_distribution(e, psi)
        )
        if v > best:
            best = v
    memo[key] = best
    return best


def optimal_policy_value(instance: Instance, k: int) -> float:
    """Value of the best adaptive policy picking at most ``k`` items."""
    if k < 0:
        raise InvalidInputError("k must be non-negative")
    _require_small(instance)
    n = instance.n
    check_enumerable(sum(math.comb(n, j) for j in range(min(k, n) + 1)), "item subsets")

    def admissible(psi, r):
        if r == 0:
            return ()
        return ((e, r - 1) for e in range(n) if e not in psi)

    return _optimal_from(instance, PartialRealization.empty(), admissible, {}, k)


def optimal_policy_value_matroid(instance: Instance, matroid: PartitionMatroid) -> float:
    """Value of the best adaptive policy feasible for ``matroid``."""
    _require_small(instance)
    matroid.validate_for(instance.n)
    owner = {e: i for i, b in enumerate(matroid.blocks) for e in b}

    def admissible(psi, left):
        return (
            (e, left[:owner[e]] + (left[owner[e]] - 1,) + left[owner[e] + 1:])
            for e in range(instance.n)
            if e not in psi and e in owner and left[owner[e]] > 0
        )

    return _optimal_from(instance, PartialRealization.empty(), admissible, {}, tuple(matroid.limits))


def best_subset_value(instance: Instance, k: int) -> float:
    """Best non-adaptive value ``max_{|S| <= k} E[f(S, Phi)]``."""
    empty = PartialRealization.empty()
    base = expected_value(instance, empty)
    best = base
    for size in range(1, k + 1):
        for subset in itertools.combinations(range(instance.n), size):
            best = max(best, base + expected_marginal(instance, subset, empty))
    return best


# ---------------------------------------------------------------------------
# property checkers


def _positive_partials(instance: Instance) -> list[PartialRealization]:
    alph = instance.ground.state_alphabets
    check_enumerable(math.prod(a + 1 for a in alph), "partial realizations")
    prior = instance.prior
    return [psi for psi in all_partial_realizations(alph) if prior.probability(psi) > 0.0]


def _subrealizations(psi: PartialRealization) -> Iterable[PartialRealization]:
    pairs = psi.canonical()
    for mask in range(1 << len(pairs)):
        yield PartialRealization(p for i, p in enumerate(pairs) if mask >> i & 1)


def _describe(psi: PartialRealization) -> dict:
    return dict(psi.canonical())


def check_adaptive_submodularity(instance: Instance, tol: float = VIOLATION_TOL) -> list[ViolationReport]:
    """Pairs ``psi <= psi2`` and items ``e`` outside ``dom(psi2)`` with ``Delta(e|psi) < Delta(e|psi2)``."""
    _require_small(instance)
    gains = _ExactGains(instance)
    out = []
    for big in _positive_partials(instance):
        for small in _subrealizations(big):
            for e in range(instance.n):
                if e in big:
                    continue
                lhs = gains.expected_gain(e, small)
                rhs = gains.expected_gain(e, big)
                if lhs < rhs - tol:
                    out.append(ViolationReport(
                        "adaptive_submodularity",
                        {"psi": _describe(small), "psi_prime": _describe(big), "item": e},
                        lhs, rhs,
                    ))
    return out


def check_adaptive_monotonicity(instance: Instance, tol: float = VIOLATION_TOL) -> list[ViolationReport]:
    _require_small(instance)
    gains = _ExactGains(instance)
    out = []
    for psi in _positive_partials(instance):
        for e in range(instance.n):
            if e in psi:
                continue
            lhs = gains.expected_gain(e, psi)
            if lhs < -tol:
                out.append(ViolationReport(
                    "adaptive_monotonicity", {"psi": _describe(psi), "item": e}, lhs, 0.0
                ))
    return out


def check_pointwise_submodularity(instance: Instance, tol: float = VIOLATION_TOL) -> list[ViolationReport]:
    """Classic diminishing returns of ``f(., phi)`` for every realization in the support."""
    n = instance.n
    check_enumerable(3 ** n, "nested subset pairs")
    obj = instance.objective
    out = []
    for phi, _ in realizations(instance.prior):
        value = [obj.value(frozenset(e for e in range(n) if m >> e & 1), phi) for m in range(1 << n)]
        for big in range(1 << n):
            sub = big
            while True:
                for e in range(n):
                    bit = 1 << e
                    if big & bit:
                        continue
                    lhs = value[sub | bit] - value[sub]
                    rhs = value[big | bit] - value[big]
                    if lhs < rhs - tol:
                        out.append(ViolationReport(
                            "pointwise_submodularity",
                            {
                                "phi": tuple(phi),
                                "S1": [i for i in range(n) if sub >> i & 1],
                                "S2": [i for i in range(n) if big >> i & 1],
                                "item": e,
                            },
                            lhs, rhs,
                        ))
                if sub == 0:
                    break
                sub = (sub - 1) & big
    return out


def restricted_policy_gain(instance: Instance, psi: PartialRealization, allowed: Iterable[int],
                           budget: int, memo: dict | None = None) -> float:
    """``max Delta(pi | psi)`` over policies picking at most ``budget`` items from ``allowed``.

    The policy starts from ``psi`` (it may use what ``psi`` already reveals) and
    items of ``allowed`` already in ``dom(psi)`` are worthless to it.
    """
    allowed = frozenset(allowed)
    memo = {} if memo is None else memo

    def admissible(cur, r):
        if r == 0:
            return ()
        return ((e, r - 1) for e in sorted(allowed) if e not in cur)

    scoped: dict = memo.setdefault(allowed, {})
    return _optimal_from(instance, psi, admissible, scoped, budget) - expected_value(instance, psi)


def check_fully_adaptive_submodularity(instance: Instance, max_a: int,
                                       tol: float = VIOLATION_TOL) -> list[ViolationReport]:
    """Best restricted-policy gains must not grow as observations are added."""
    if max_a < 1:
        raise InvalidInputError("max_a must be at least 1")
    _require_small(instance)
    n = instance.n
    partials = _positive_partials(instance)
    memo: dict = {}
    cache: dict = {}

    def best(psi, subset, a):
        key = (psi, subset, a)
        if key not in cache:
            cache[key] = restricted_policy_gain(instance, psi, subset, a, memo)
        return cache[key]

    out = []
    subsets = [frozenset(c) for size in range(1, n + 1) for c in itertools.combinations(range(n), size)]
    for big in partials:
        for small in _subrealizations(big):
            for subset in subsets:
                for a in range(1, min(len(subset), max_a) + 1):
                    lhs = best(small, subset, a)
                    rhs = best(big, subset, a)
                    if lhs < rhs - tol:
                        out.append(ViolationReport(
                            "fully_adaptive_submodularity",
                            {"psi": _describe(small), "psi_prime": _describe(big),
                             "V": sorted(subset), "a": a},
                            lhs, rhs,
                        ))
    return out


def check_sampling_lemma(n: int, k: int, epsilon: float, trials: int, seed: int = 0,
                         chunk: int = 10_000) -> tuple[float, float]:
    """Fraction of uniform samples of size ``ceil((n/k) ln(1/epsilon))`` that hit a fixed ``k``-set.

    Returns ``(hit_rate, 1 - epsilon)``.
    """
    if not 1 <= k <= n:
        raise InvalidInputError(f"need 1 <= k <= n, got k={k}, n={n}")
    if not 0.0 < epsilon < 1.0:
        raise InvalidInputError(f"epsilon must lie in (0, 1), got {epsilon}")
    if trials < 1:
        raise InvalidInputError("trials must be at least 1")
    size = sample_size_asg(n, k, epsilon)
    rng = np.random.default_rng(seed_stream(seed, "sampling-lemma"))
    hits = 0
    done = 0
    while done < trials:
        batch = min(chunk, trials - done)
        keys = rng.random((batch, n))
        # the size smallest keys per row form a uniform sample without replacement;
        # the target set is items 0..k-1
        sample = np.argpartition(keys, size - 1, axis=1)[:, :size] if size < n else np.tile(np.arange(n), (batch, 1))
        hits += int((sample < k).any(axis=1).sum())
        done += batch
    return hits / trials, 1.0 - epsilon
