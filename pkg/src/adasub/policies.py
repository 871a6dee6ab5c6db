"""Adaptive policies and the runner that executes them against a realization.

Every policy is written twice over the same rules:

* ``act`` runs one round for real: it draws its random sets from ``rng`` and
  pays for every gain it looks at through ``oracle.marginal_item``.
* ``decide`` returns the exact distribution of that round's action, given
  exact gains, without sampling.  The exact evaluator in ``analysis`` expands
  policy trees from it.

Policy state is a small hashable value (usually the round index).  An action
is an item id, ``None`` (select nothing this round) or ``STOP``.

Ties are broken by larger gain first, then real items before dummies, then
the smaller item id.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np

from .core import (
    ContractViolation,
    InvalidInputError,
    PartialRealization,
    PartitionMatroid,
    as_stream,
    child_stream,
)

STOP = "STOP"


@dataclass(frozen=True)
class Decision:
    """Exact action distribution for one round.

    ``branches`` holds ``(probability, action, next_state)`` triples and
    ``queries`` the (expected) number of oracle calls the round makes.
    """

    branches: tuple
    queries: float = 0.0


def _stop(state, queries: float = 0.0) -> Decision:
    return Decision(((1.0, STOP, state),), queries)


def _merge(branches) -> tuple:
    """Combine branches that share an action and next state."""
    acc: dict = {}
    for p, action, nxt in branches:
        if p <= 0.0:
            continue
        key = (action, nxt)
        acc[key] = acc.get(key, 0.0) + p
    return tuple((p, a, s) for (a, s), p in acc.items())


def _rank(items, gain: dict) -> list:
    return sorted(items, key=lambda e: (-gain[e], e))


def sample_size_asg(n: int, k: int, epsilon: float) -> int:
    """``min(n, ceil((n / k) ln(1 / epsilon)))``."""
    return min(n, math.ceil(n / k * math.log(1.0 / epsilon)))


@dataclass(frozen=True)
class LtParams:
    epsilon: float
    q: float
    s: float
    sample_size: int


def lt_params(n: int, k: int, epsilon: float) -> LtParams:
    if not 0.0 < epsilon < 0.5:
        raise InvalidInputError(f"epsilon must lie in (0, 1/2) for the linear-time policy, got {epsilon}")
    q = 8.0 / (k * epsilon ** 2) * math.log(1.0 / (2.0 * epsilon))
    m = min(math.ceil(q * n), n)
    return LtParams(epsilon, q, k * m / n, m)


def rank_distribution(s: float) -> list[tuple[int, float]]:
    """Law of ``ceil(d)`` for ``d`` uniform on ``(0, s]``."""
    return [(j, (min(j, s) - (j - 1)) / s) for j in range(1, math.ceil(s) + 1)]


class Policy:
    """Base class; subclasses implement ``decide`` and ``act``."""

    name = "policy"
    reselects = False

    @property
    def constraint(self):
        return None

    def validate(self, n: int) -> None:
        pass

    def start(self) -> Any:
        return 0

    def observe(self, state, item: int, outcome: int):
        return state

    def decide(self, psi: PartialRealization, state, gains) -> Decision:
        raise NotImplementedError

    def act(self, psi: PartialRealization, state, oracle, rng: np.random.Generator):
        raise NotImplementedError

    def max_rounds(self, n: int) -> int:
        return n


class EmptyPolicy(Policy):
    name = "empty"

    def decide(self, psi, state, gains):
        return _stop(state)

    def act(self, psi, state, oracle, rng):
        return STOP, state

    def max_rounds(self, n):
        return 0


class _CardinalityPolicy(Policy):
    def __init__(self, k: int):
        if not isinstance(k, (int, np.integer)) or k < 1:
            raise InvalidInputError(f"k must be a positive integer, got {k!r}")
        self.k = int(k)

    @property
    def constraint(self):
        return self.k

    def validate(self, n):
        if self.k > n:
            raise InvalidInputError(f"k={self.k} exceeds the number of items n={n}")

    def max_rounds(self, n):
        return self.k

    def __repr__(self):
        return f"{type(self).__name__}(k={self.k})"


class AdaptiveGreedy(_CardinalityPolicy):
    """Pick the unselected item with the largest gain; stop once every gain is negative."""

    name = "greedy"

    def decide(self, psi, r, gains):
        cand = [e for e in range(gains.n) if e not in psi]
        if r >= self.k or not cand:
            return _stop(r)
        gain = {e: gains.expected_gain(e, psi) for e in cand}
        best = _rank(cand, gain)[0]
        if gain[best] < 0.0:
            return _stop(r, len(cand))
        return Decision(((1.0, best, r + 1),), len(cand))

    def act(self, psi, r, oracle, rng):
        cand = [e for e in range(oracle.n) if e not in psi]
        if r >= self.k or not cand:
            return STOP, r
        gain = {e: oracle.marginal_item(e, psi) for e in cand}
        best = _rank(cand, gain)[0]
        if gain[best] < 0.0:
            return STOP, r
        return best, r + 1


class AdaptiveRandomGreedy(_CardinalityPolicy):
    """Pick uniformly among the ``k`` best of the real items plus ``2k - 1`` zero-gain dummies."""

    name = "arg"

    def dummies(self, n: int) -> range:
        return range(n, n + 2 * self.k - 1)

    def _top(self, n, psi, gain) -> list:
        pool = [(-gain[e], 0, e) for e in range(n) if e not in psi]
        pool += [(0.0, 1, d) for d in self.dummies(n)]
        pool.sort()
        return [e for _, _, e in pool[: self.k]]

    def decide(self, psi, r, gains):
        if r >= self.k:
            return _stop(r)
        n = gains.n
        cand = [e for e in range(n) if e not in psi]
        gain = {e: gains.expected_gain(e, psi) for e in cand}
        top = self._top(n, psi, gain)
        branches = [(1.0 / self.k, e if e < n else None, r + 1) for e in top]
        return Decision(_merge(branches), len(cand))

    def act(self, psi, r, oracle, rng):
        if r >= self.k:
            return STOP, r
        n = oracle.n
        gain = {e: oracle.marginal_item(e, psi) for e in range(n) if e not in psi}
        top = self._top(n, psi, gain)
        pick = top[int(rng.integers(self.k))]
        return (pick if pick < n else None), r + 1


class LinearTimePolicy(_CardinalityPolicy):
    """Rank a random sample and take the item at a random rank, if its gain is non-negative."""

    name = "lt"

    def __init__(self, k: int, epsilon: float):
        super().__init__(k)
        lt_params(max(k, 1), self.k, epsilon)  # range check only
        self.epsilon = float(epsilon)

    def params(self, n: int) -> LtParams:
        return lt_params(n, self.k, self.epsilon)

    def decide(self, psi, r, gains):
        if r >= self.k:
            return _stop(r)
        n = gains.n
        par = self.params(n)
        m = par.sample_size
        gain = {e: gains.expected_gain(e, psi) for e in range(n)}
        order = _rank(range(n), gain)
        total = math.comb(n, m)
        ranks = rank_distribution(par.s)
        branches = [(sum(pj for j, pj in ranks if j > m), None, r + 1)]
        for pos, e in enumerate(order):
            p = 0.0
            for j, pj in ranks:
                if j <= m:
                    p += pj * math.comb(pos, j - 1) * math.comb(n - 1 - pos, m - j) / total
            accept = gain[e] >= 0.0 and e not in psi
            branches.append((p, e if accept else None, r + 1))
        return Decision(_merge(branches), m)

    def act(self, psi, r, oracle, rng):
        if r >= self.k:
            return STOP, r
        n = oracle.n
        par = self.params(n)
        sample = rng.choice(n, size=par.sample_size, replace=False).tolist()
        gain = {e: oracle.marginal_item(e, psi) for e in sample}
        ranked = _rank(sample, gain)
        j = max(1, math.ceil(par.s * (1.0 - rng.random())))
        if j > len(ranked):
            return None, r + 1
        pick = ranked[j - 1]
        if gain[pick] >= 0.0 and pick not in psi:
            return pick, r + 1
        return None, r + 1

    def __repr__(self):
        return f"LinearTimePolicy(k={self.k}, epsilon={self.epsilon})"


def _argmax_sample_branches(universe: list, psi, gain: dict, m: int, nxt) -> list:
    """Exact law of the best unselected item in a uniform ``m``-subset of ``universe``."""
    size = len(universe)
    total = math.comb(size, m)
    fresh = _rank([e for e in universe if e not in psi], gain)
    n_seen = size - len(fresh)
    branches = [(math.comb(n_seen, m) / total, None, nxt)]
    for pos, e in enumerate(fresh):
        branches.append((math.comb(size - 1 - pos, m - 1) / total, e, nxt))
    return branches


def _argmax_sample_act(universe: list, psi, m: int, oracle, rng):
    picks = rng.choice(len(universe), size=m, replace=False)
    sample = [universe[i] for i in picks]
    gain = {e: oracle.marginal_item(e, psi) for e in sample}
    fresh = [e for e in sample if e not in psi]
    if not fresh:
        return None
    return _rank(fresh, gain)[0]


class AdaptiveStochasticGreedy(_CardinalityPolicy):
    """Greedy over a fresh uniform sample of size ``(n/k) ln(1/epsilon)`` each round."""

    name = "asg"

    def __init__(self, k: int, epsilon: float):
        super().__init__(k)
        if not 0.0 < epsilon < 1.0:
            raise InvalidInputError(f"epsilon must lie in (0, 1), got {epsilon}")
        self.epsilon = float(epsilon)

    def sample_size(self, n: int) -> int:
        return sample_size_asg(n, self.k, self.epsilon)

    def decide(self, psi, r, gains):
        if r >= self.k:
            return _stop(r)
        n = gains.n
        m = self.sample_size(n)
        gain = {e: gains.expected_gain(e, psi) for e in range(n) if e not in psi}
        return Decision(_merge(_argmax_sample_branches(list(range(n)), psi, gain, m, r + 1)), m)

    def act(self, psi, r, oracle, rng):
        if r >= self.k:
            return STOP, r
        n = oracle.n
        return _argmax_sample_act(list(range(n)), psi, self.sample_size(n), oracle, rng), r + 1

    def __repr__(self):
        return f"AdaptiveStochasticGreedy(k={self.k}, epsilon={self.epsilon})"


class _BlockPolicy(Policy):
    """Walks the matroid blocks in index order; state is ``(block, picks made in block)``."""

    def __init__(self, matroid: PartitionMatroid):
        if not isinstance(matroid, PartitionMatroid):
            raise InvalidInputError("a PartitionMatroid is required")
        self.matroid = matroid

    @property
    def constraint(self):
        return self.matroid

    def validate(self, n):
        self.matroid.validate_for(n)

    def start(self):
        return (0, 0)

    def _normalize(self, state):
        i, j = state
        limits = self.matroid.limits
        while i < len(limits) and j >= limits[i]:
            i, j = i + 1, 0
        return i, j

    def max_rounds(self, n):
        return self.matroid.total_limit


class LocallyGreedy(_BlockPolicy):
    """Greedy inside each block in turn, ``limits[i]`` rounds for block ``i``."""

    name = "local"

    def _round(self, psi, state, gain_fn):
        i, j = self._normalize(state)
        while i < len(self.matroid.blocks):
            cand = [e for e in self.matroid.blocks[i] if e not in psi]
            if cand:
                break
            i, j = self._normalize((i + 1, 0))
        else:
            return STOP, (i, j), 0
        gain = {e: gain_fn(e, psi) for e in cand}
        best = _rank(cand, gain)[0]
        if gain[best] < 0.0:
            # later rounds in this block would see the same gains
            return None, (i + 1, 0), len(cand)
        return best, (i, j + 1), len(cand)

    def decide(self, psi, state, gains):
        action, nxt, q = self._round(psi, state, gains.expected_gain)
        return Decision(((1.0, action, nxt),), q)

    def act(self, psi, state, oracle, rng):
        action, nxt, _ = self._round(psi, state, oracle.marginal_item)
        return action, nxt

    def __repr__(self):
        return f"LocallyGreedy({self.matroid})"


class GeneralizedASG(_BlockPolicy):
    """Stochastic greedy inside each block, sample size ``(|B_i|/d_i) ln(1/epsilon)``."""

    name = "gasg"

    def __init__(self, matroid: PartitionMatroid, epsilon: float):
        super().__init__(matroid)
        if not 0.0 < epsilon < 1.0:
            raise InvalidInputError(f"epsilon must lie in (0, 1), got {epsilon}")
        self.epsilon = float(epsilon)

    def sample_size(self, block: int) -> int:
        size = len(self.matroid.blocks[block])
        return sample_size_asg(size, self.matroid.limits[block], self.epsilon)

    def decide(self, psi, state, gains):
        i, j = self._normalize(state)
        if i >= len(self.matroid.blocks):
            return _stop((i, j))
        universe = list(self.matroid.blocks[i])
        gain = {e: gains.expected_gain(e, psi) for e in universe if e not in psi}
        m = self.sample_size(i)
        return Decision(_merge(_argmax_sample_branches(universe, psi, gain, m, (i, j + 1))), m)

    def act(self, psi, state, oracle, rng):
        i, j = self._normalize(state)
        if i >= len(self.matroid.blocks):
            return STOP, (i, j)
        universe = list(self.matroid.blocks[i])
        return _argmax_sample_act(universe, psi, self.sample_size(i), oracle, rng), (i, j + 1)

    def __repr__(self):
        return f"GeneralizedASG({self.matroid}, epsilon={self.epsilon})"


class Concat(Policy):
    """Run ``first`` to completion, then ``second`` from an empty observation history.

    ``second`` may pick items ``first`` already picked; that reveals nothing new
    and adds nothing to the union.  State: ``(0, first_state, None)`` or
    ``(1, second_state, second_observations)``.
    """

    name = "concat"
    reselects = True

    def __init__(self, first: Policy, second: Policy):
        self.first = first
        self.second = second

    def validate(self, n):
        self.first.validate(n)
        self.second.validate(n)

    def max_rounds(self, n):
        return self.first.max_rounds(n) + self.second.max_rounds(n)

    def start(self):
        return (0, self.first.start(), None)

    def _second_start(self):
        return (1, self.second.start(), PartialRealization.empty())

    def observe(self, state, item, outcome):
        phase, inner, own = state
        if phase == 0:
            return (0, self.first.observe(inner, item, outcome), None)
        if item not in own:
            own = own.extend(item, outcome)
        return (1, self.second.observe(inner, item, outcome), own)

    def _decide_second(self, state, gains) -> Decision:
        _, inner, own = state
        dec = self.second.decide(own, inner, gains)
        return Decision(tuple((p, a, (1, s, own)) for p, a, s in dec.branches), dec.queries)

    def decide(self, psi, state, gains):
        if state[0] == 1:
            return self._decide_second(state, gains)
        dec = self.first.decide(psi, state[1], gains)
        branches = []
        queries = dec.queries
        for p, action, nxt in dec.branches:
            if action == STOP:
                tail = self._decide_second(self._second_start(), gains)
                queries += p * tail.queries
                branches.extend((p * p2, a2, s2) for p2, a2, s2 in tail.branches)
            else:
                branches.append((p, action, (0, nxt, None)))
        return Decision(tuple(branches), queries)

    def act(self, psi, state, oracle, rng):
        phase, inner, own = state
        if phase == 0:
            action, nxt = self.first.act(psi, inner, oracle, rng)
            if action != STOP:
                return action, (0, nxt, None)
            phase, inner, own = self._second_start()
        action, nxt = self.second.act(own, inner, oracle, rng)
        return action, (1, nxt, own)

    def __repr__(self):
        return f"Concat({self.first!r}, {self.second!r})"


def empty_policy() -> Policy:
    return EmptyPolicy()


def adaptive_greedy(k: int) -> Policy:
    return AdaptiveGreedy(k)


def adaptive_random_greedy(k: int) -> Policy:
    return AdaptiveRandomGreedy(k)


def linear_time_policy(k: int, epsilon: float) -> Policy:
    return LinearTimePolicy(k, epsilon)


def adaptive_stochastic_greedy(k: int, epsilon: float) -> Policy:
    return AdaptiveStochasticGreedy(k, epsilon)


def locally_greedy(matroid: PartitionMatroid) -> Policy:
    return LocallyGreedy(matroid)


def generalized_asg(matroid: PartitionMatroid, epsilon: float) -> Policy:
    return GeneralizedASG(matroid, epsilon)


def concat(first: Policy, second: Policy) -> Policy:
    return Concat(first, second)


# ---------------------------------------------------------------------------
# runner


@dataclass(frozen=True)
class Trace:
    """One execution.  ``actions`` has an entry per round, ``None`` for rounds
    that selected nothing; ``items`` lists the distinct real items in selection order."""

    actions: tuple
    items: tuple
    observed: PartialRealization
    final_value: float
    queries: Any
    rounds: int


class _LazyRng:
    """Builds the round's generator on first use; deterministic rounds never pay for it."""

    __slots__ = ("_base", "_index", "_gen")

    def __init__(self, base: np.random.SeedSequence, index: int):
        self._base = base
        self._index = index
        self._gen = None

    def __getattr__(self, name):
        if self._gen is None:
            self._gen = np.random.default_rng(child_stream(self._base, self._index))
        return getattr(self._gen, name)


def _check_constraint(policy: Policy, psi: PartialRealization) -> None:
    con = policy.constraint
    if con is None:
        return
    if isinstance(con, PartitionMatroid):
        if not con.is_feasible(psi.dom):
            raise ContractViolation(f"{policy!r} broke its matroid constraint with {sorted(psi.dom)}")
    elif len(psi) > con:
        raise ContractViolation(f"{policy!r} selected {len(psi)} items with k={con}")


def run_policy(policy: Policy, phi, oracle, rng_seed=0) -> Trace:
    """Execute ``policy`` on realization ``phi``; each selection reveals only that item's state.

    Round ``r`` draws from its own child stream of ``rng_seed`` so runs are
    reproducible regardless of how many draws earlier rounds made.
    """
    inst = oracle.instance
    n = inst.n
    if len(phi) != n:
        raise InvalidInputError(f"realization has {len(phi)} states, instance has {n} items")
    policy.validate(n)
    base = as_stream(rng_seed)
    before = oracle.ledger.snapshot()
    psi = PartialRealization.empty()
    state = policy.start()
    actions = []
    budget = policy.max_rounds(n) + len(getattr(policy.constraint, "blocks", ())) + 1
    rounds = 0
    while True:
        if rounds > budget:
            raise ContractViolation(f"{policy!r} did not stop within {budget} rounds")
        rng = _LazyRng(base, rounds)
        action, state = policy.act(psi, state, oracle, rng)
        rounds += 1
        if action == STOP:
            rounds -= 1
            break
        if action is None:
            actions.append(None)
            continue
        e = int(action)
        if not 0 <= e < n:
            raise ContractViolation(f"{policy!r} selected unknown item {e}")
        o = phi[e]
        if e in psi:
            if not policy.reselects:
                raise ContractViolation(f"{policy!r} re-selected item {e}")
        else:
            psi = psi.extend(e, o)
        state = policy.observe(state, e, o)
        actions.append(e)
        _check_constraint(policy, psi)
    items = tuple(e for e, _ in psi.pairs)
    value = inst.objective.evaluate(items, phi)
    return Trace(tuple(actions), items, psi, value, oracle.ledger.snapshot() - before, rounds)


POLICY_NAMES = ("greedy", "arg", "lt", "asg", "local", "gasg")
NEEDS_EPSILON = frozenset({"lt", "asg", "gasg"})
NEEDS_MATROID = frozenset({"local", "gasg"})


def build_policy(name: str, k=None, epsilon=None, matroid=None) -> Policy:
    if name not in POLICY_NAMES:
        raise InvalidInputError(f"unknown policy {name!r}; choose from {', '.join(POLICY_NAMES)}")
    if name in NEEDS_EPSILON and epsilon is None:
        raise InvalidInputError(f"policy {name!r} needs --epsilon")
    if name in NEEDS_MATROID:
        if matroid is None:
            raise InvalidInputError(f"policy {name!r} needs a matroid in the --instance file")
        return LocallyGreedy(matroid) if name == "local" else GeneralizedASG(matroid, epsilon)
    if k is None:
        raise InvalidInputError(f"policy {name!r} needs --k")
    if name == "greedy":
        return AdaptiveGreedy(k)
    if name == "arg":
        return AdaptiveRandomGreedy(k)
    if name == "lt":
        return LinearTimePolicy(k, epsilon)
    return AdaptiveStochasticGreedy(k, epsilon)
