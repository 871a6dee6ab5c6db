"""Value oracle for conditional expected marginal gains, with query accounting."""

from __future__ import annotations

import itertools
import math
import threading
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .core import (
    IndependentPrior,
    InvalidInputError,
    PartialRealization,
    as_stream,
    check_enumerable,
    conditional_realizations,
)
from .objectives import Instance


@dataclass
class QueryLedger:
    """Counts oracle calls.

    ``item_queries`` is the algorithmic cost measure: one unit per
    ``marginal_item`` call.  Set and policy queries are analysis tools and are
    counted separately so they never pollute algorithm query counts.
    """

    item_queries: int = 0
    set_queries: int = 0
    policy_queries: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def tick(self, kind: str = "item_queries", amount: int = 1) -> None:
        with self._lock:
            setattr(self, kind, getattr(self, kind) + amount)

    def snapshot(self) -> "QueryLedger":
        with self._lock:
            return QueryLedger(self.item_queries, self.set_queries, self.policy_queries)

    def merge(self, other: "QueryLedger") -> None:
        with self._lock:
            self.item_queries += other.item_queries
            self.set_queries += other.set_queries
            self.policy_queries += other.policy_queries

    def __sub__(self, other: "QueryLedger") -> "QueryLedger":
        return QueryLedger(
            self.item_queries - other.item_queries,
            self.set_queries - other.set_queries,
            self.policy_queries - other.policy_queries,
        )


def expected_value(instance: Instance, psi: PartialRealization) -> float:
    """``E[f(dom(psi), Phi) | Phi ~ psi]``."""
    obj = instance.objective
    if obj.local:
        return obj.value(psi.dom, psi.states)
    cond = conditional_realizations(instance.prior, psi)
    dom = psi.dom
    return math.fsum(p * obj.value(dom, phi) for phi, p in cond)


def expected_marginal(instance: Instance, items: Iterable[int], psi: PartialRealization) -> float:
    """Exact ``Delta(S | psi)``; dummy items and items already in ``dom(psi)`` add nothing."""
    n = instance.n
    new = sorted({e for e in items if e < n and e not in psi})
    if not new:
        return 0.0
    obj = instance.objective
    dom = psi.dom
    both = dom.union(new)
    prior = instance.prior
    if obj.local and isinstance(prior, IndependentPrior):
        base = obj.value(dom, psi.states)
        dists = [prior.state_distribution(e, psi) for e in new]
        check_enumerable(math.prod(len(d) for d in dists), "joint states of the queried items")
        states = dict(psi.states)
        total = []
        for combo in itertools.product(*dists):
            p = 1.0
            for e, (o, po) in zip(new, combo):
                states[e] = o
                p *= po
            total.append(p * (obj.value(both, states) - base))
        return math.fsum(total)
    cond = conditional_realizations(prior, psi)
    return math.fsum(p * (obj.value(both, phi) - obj.value(dom, phi)) for phi, p in cond)


class ValueOracle:
    """Answers ``Delta(e | psi)`` queries against one instance.

    ``mode="exact"`` sums over the conditional distribution; ``mode="mc"``
    averages ``samples`` draws from it using a private RNG stream, so the order
    of queries never perturbs any policy randomness.
    """

    def __init__(self, instance: Instance, mode: str = "exact", samples: int = 1000,
                 seed=0, ledger: QueryLedger | None = None):
        if mode not in ("exact", "mc"):
            raise InvalidInputError(f"oracle mode must be 'exact' or 'mc', got {mode!r}")
        if mode == "mc" and samples < 2:
            raise InvalidInputError("Monte-Carlo oracle needs at least 2 samples")
        self.instance = instance
        self.mode = mode
        self.samples = int(samples)
        self.ledger = ledger if ledger is not None else QueryLedger()
        self._seed = seed
        self._rng_cache = None

    @property
    def n(self) -> int:
        return self.instance.n

    @property
    def _rng(self) -> np.random.Generator:
        # exact-mode oracles never draw, so the stream is built on first use
        if self._rng_cache is None:
            self._rng_cache = np.random.default_rng(as_stream(self._seed))
        return self._rng_cache

    def marginal_item(self, item: int, psi: PartialRealization) -> float:
        self.ledger.tick()
        if item >= self.n or item in psi:
            return 0.0
        if self.mode == "exact":
            return expected_marginal(self.instance, (item,), psi)
        return self._sampled(item, psi)[0]

    def mc_estimate(self, item: int, psi: PartialRealization) -> tuple[float, float]:
        """Monte-Carlo mean and standard error; counts as one item query."""
        self.ledger.tick()
        if item >= self.n or item in psi:
            return 0.0, 0.0
        return self._sampled(item, psi)

    def expected_gain(self, item: int, psi: PartialRealization) -> float:
        """Exact gain without touching the ledger (analysis use only)."""
        if item >= self.n or item in psi:
            return 0.0
        return expected_marginal(self.instance, (item,), psi)

    def marginal_set(self, items: Iterable[int], psi: PartialRealization) -> float:
        self.ledger.tick("set_queries")
        return expected_marginal(self.instance, items, psi)

    def marginal_policy(self, policy, psi: PartialRealization) -> float:
        from .analysis import policy_gain

        self.ledger.tick("policy_queries")
        return policy_gain(policy, self.instance, psi)

    def _sampled(self, item: int, psi: PartialRealization) -> tuple[float, float]:
        inst = self.instance
        conditional_realizations(inst.prior, psi)  # raises on null events
        obj = inst.objective
        dom = psi.dom
        both = dom | {item}
        draws = _sample_many(inst, psi, self.samples, self._rng)
        diffs = np.fromiter(
            (obj.value(both, phi) - obj.value(dom, phi) for phi in draws), float, len(draws)
        )
        return float(diffs.mean()), float(diffs.std(ddof=1) / math.sqrt(len(diffs)))


def _sample_many(instance: Instance, psi: PartialRealization, size: int, rng: np.random.Generator):
    prior = instance.prior
    if not isinstance(prior, IndependentPrior):
        return [prior.sample(rng, psi) for _ in range(size)]
    cols = []
    for e, row in enumerate(prior.probs):
        if e in psi:
            cols.append(np.full(size, psi[e]))
        elif len(row) == 1:
            cols.append(np.zeros(size, dtype=int))
        else:
            cols.append(rng.choice(len(row), size=size, p=row))
    return [tuple(r) for r in np.stack(cols, axis=1).tolist()]
