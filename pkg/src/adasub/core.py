"""Items, states, realizations and priors.

A realization is a plain tuple of state indices, one per real item.  A
partial realization records the observations made so far; it keeps the
order in which items were observed but compares and hashes as a set of
``(item, state)`` pairs.
"""

from __future__ import annotations

import itertools
import math
import os
import zlib
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

PROB_TOL = 1e-12
DEFAULT_ENUM_CAP = 2 ** 12

Realization = tuple  # tuple[int, ...], indexed by item


class AdasubError(Exception):
    """Base class for library errors."""


class InvalidInputError(AdasubError, ValueError):
    pass


class NullEventError(AdasubError):
    """Conditioning on a partial realization of probability zero."""


class EnumerationCapError(AdasubError):
    """An exact computation would enumerate more than the configured cap."""


class ContractViolation(AdasubError, AssertionError):
    """A policy broke its own contract (bug trap, not a user error)."""


def enum_cap() -> int:
    """Current enumeration cap; ``ADASUB_ENUM_CAP`` overrides the default."""
    raw = os.environ.get("ADASUB_ENUM_CAP")
    if raw is None:
        return DEFAULT_ENUM_CAP
    try:
        cap = int(raw)
    except ValueError:
        raise InvalidInputError(f"ADASUB_ENUM_CAP must be an integer, got {raw!r}")
    if cap < 1:
        raise InvalidInputError("ADASUB_ENUM_CAP must be positive")
    return cap


def check_enumerable(count: int, what: str = "realizations") -> None:
    cap = enum_cap()
    if count > cap:
        raise EnumerationCapError(
            f"exact enumeration needs {count} {what}, above the cap of {cap} "
            "(raise ADASUB_ENUM_CAP or use Monte-Carlo evaluation)"
        )


# ---------------------------------------------------------------------------
# seeding


def seed_stream(seed: int, *labels: str | int) -> np.random.SeedSequence:
    """Labeled child stream of a master seed.

    The same ``(seed, labels)`` always yields the same stream, and distinct
    labels yield independent streams, so one integer reproduces a whole run.
    """
    key = tuple(lab if isinstance(lab, int) else zlib.crc32(lab.encode()) for lab in labels)
    return np.random.SeedSequence(int(seed), spawn_key=key)


def child_stream(parent: np.random.SeedSequence, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(parent.entropy, spawn_key=tuple(parent.spawn_key) + (int(index),))


def as_stream(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(int(seed))


# ---------------------------------------------------------------------------
# ground set and partial realizations


@dataclass(frozen=True)
class GroundSet:
    """Real items ``0..n_real-1`` followed by ``n_dummy`` dummy items."""

    n_real: int
    state_alphabets: tuple[int, ...]
    n_dummy: int = 0

    def __post_init__(self):
        if self.n_real < 0 or self.n_dummy < 0:
            raise InvalidInputError("item counts must be non-negative")
        if len(self.state_alphabets) != self.n_real:
            raise InvalidInputError(
                f"expected {self.n_real} state alphabets, got {len(self.state_alphabets)}"
            )
        if any(a < 1 for a in self.state_alphabets):
            raise InvalidInputError("every item needs at least one state")

    @property
    def n_total(self) -> int:
        return self.n_real + self.n_dummy

    def is_dummy(self, item: int) -> bool:
        return item >= self.n_real

    def n_realizations(self) -> int:
        return math.prod(self.state_alphabets)


class PartialRealization:
    """Observed ``(item, state)`` pairs, in observation order.

    Equality and hashing ignore the order.
    """

    __slots__ = ("pairs", "_states", "_key")

    def __init__(self, pairs: Iterable[tuple[int, int]] = ()):
        pairs = tuple((int(e), int(o)) for e, o in pairs)
        states = dict(pairs)
        if len(states) != len(pairs):
            raise InvalidInputError(f"item observed twice in {pairs}")
        self.pairs = pairs
        self._states = states
        self._key = frozenset(pairs)

    @classmethod
    def empty(cls) -> "PartialRealization":
        return _EMPTY

    @property
    def dom(self) -> frozenset:
        return frozenset(self._states)

    @property
    def states(self) -> Mapping[int, int]:
        return self._states

    def __contains__(self, item) -> bool:
        return item in self._states

    def __getitem__(self, item: int) -> int:
        return self._states[item]

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self) -> Iterator[tuple[int, int]]:
        return iter(self.pairs)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PartialRealization):
            return NotImplemented
        return self._key == other._key

    def __hash__(self) -> int:
        return hash(self._key)

    def __repr__(self) -> str:
        inner = ", ".join(f"{e}->{o}" for e, o in self.pairs)
        return f"PartialRealization({{{inner}}})"

    def extend(self, item: int, state: int) -> "PartialRealization":
        if item in self._states:
            raise InvalidInputError(f"item {item} already observed")
        return PartialRealization(self.pairs + ((item, state),))

    def canonical(self) -> tuple[tuple[int, int], ...]:
        return tuple(sorted(self.pairs))

    def items_le(self, n_items: int) -> None:
        for e, _ in self.pairs:
            if not 0 <= e < n_items:
                raise InvalidInputError(f"partial realization references unknown item {e}")


_EMPTY = PartialRealization()


def is_consistent(phi: Sequence[int], psi: PartialRealization) -> bool:
    psi.items_le(len(phi))
    return all(phi[e] == o for e, o in psi.pairs)


def is_subrealization(psi: PartialRealization, psi2: PartialRealization) -> bool:
    states2 = psi2.states
    return all(e in states2 and states2[e] == o for e, o in psi.pairs)


def all_partial_realizations(alphabets: Sequence[int]) -> Iterator[PartialRealization]:
    """Every partial realization over the given items (3^n for binary states)."""
    choices = [range(-1, a) for a in alphabets]
    for combo in itertools.product(*choices):
        yield PartialRealization((e, o) for e, o in enumerate(combo) if o >= 0)


# ---------------------------------------------------------------------------
# priors


def _check_distribution(probs: Sequence[float], where: str) -> None:
    if any(not (0.0 <= p <= 1.0) for p in probs):
        raise InvalidInputError(f"{where}: probabilities must lie in [0, 1], got {list(probs)}")
    total = math.fsum(probs)
    if abs(total - 1.0) > PROB_TOL:
        raise InvalidInputError(f"{where}: probabilities sum to {total!r}, not 1")


@dataclass(frozen=True)
class IndependentPrior:
    """Per-item categorical distributions, items mutually independent."""

    probs: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "probs", tuple(tuple(float(p) for p in row) for row in self.probs))
        for e, row in enumerate(self.probs):
            if not row:
                raise InvalidInputError(f"item {e}: empty state distribution")
            _check_distribution(row, f"item {e}")

    @classmethod
    def bernoulli(cls, p_one: Sequence[float]) -> "IndependentPrior":
        return cls(tuple((round(1.0 - p, 15), p) for p in p_one))

    @property
    def n_items(self) -> int:
        return len(self.probs)

    @property
    def alphabets(self) -> tuple[int, ...]:
        return tuple(len(row) for row in self.probs)

    def probability(self, psi: PartialRealization) -> float:
        psi.items_le(self.n_items)
        out = 1.0
        for e, o in psi.pairs:
            row = self.probs[e]
            if o >= len(row):
                return 0.0
            out *= row[o]
        return out

    def state_distribution(self, item: int, psi: PartialRealization) -> list[tuple[int, float]]:
        if item in psi:
            return [(psi[item], 1.0)]
        if self.probability(psi) <= 0.0:
            raise NullEventError(f"Pr[Phi ~ {psi}] = 0")
        return [(o, p) for o, p in enumerate(self.probs[item]) if p > 0.0]

    def sample(self, rng: np.random.Generator, psi: PartialRealization = _EMPTY) -> Realization:
        u = rng.random(len(self.probs))
        out = []
        for e, row in enumerate(self.probs):
            if e in psi:
                out.append(psi[e])
                continue
            # inverse CDF; zero-probability states can never be hit
            acc = 0.0
            pick = max(o for o, p in enumerate(row) if p > 0.0)
            for o, p in enumerate(row):
                acc += p
                if p > 0.0 and u[e] < acc:
                    pick = o
                    break
            out.append(pick)
        return tuple(out)

    def support_size(self) -> int:
        return math.prod(sum(1 for p in row if p > 0.0) for row in self.probs)


@dataclass(frozen=True)
class JointPrior:
    """Explicit table of ``(realization, probability)`` rows."""

    alphabets: tuple[int, ...]
    table: tuple[tuple[Realization, float], ...]

    def __post_init__(self):
        alph = tuple(int(a) for a in self.alphabets)
        object.__setattr__(self, "alphabets", alph)
        check_enumerable(math.prod(alph), "realizations in a joint prior")
        rows = []
        seen = set()
        for phi, p in self.table:
            phi = tuple(int(o) for o in phi)
            if len(phi) != len(alph) or any(not 0 <= o < a for o, a in zip(phi, alph)):
                raise InvalidInputError(f"joint prior row {phi} does not match alphabets {alph}")
            if phi in seen:
                raise InvalidInputError(f"joint prior lists realization {phi} twice")
            seen.add(phi)
            rows.append((phi, float(p)))
        _check_distribution([p for _, p in rows], "joint prior")
        object.__setattr__(self, "table", tuple(rows))

    @property
    def n_items(self) -> int:
        return len(self.alphabets)

    def _matching(self, psi: PartialRealization):
        psi.items_le(self.n_items)
        return [(phi, p) for phi, p in self.table if p > 0.0 and is_consistent(phi, psi)]

    def probability(self, psi: PartialRealization) -> float:
        return math.fsum(p for _, p in self._matching(psi))

    def state_distribution(self, item: int, psi: PartialRealization) -> list[tuple[int, float]]:
        rows = self._matching(psi)
        mass = math.fsum(p for _, p in rows)
        if mass <= 0.0:
            raise NullEventError(f"Pr[Phi ~ {psi}] = 0")
        acc: dict[int, float] = {}
        for phi, p in rows:
            acc[phi[item]] = acc.get(phi[item], 0.0) + p
        return [(o, acc[o] / mass) for o in sorted(acc)]

    def sample(self, rng: np.random.Generator, psi: PartialRealization = _EMPTY) -> Realization:
        rows = self._matching(psi)
        weights = np.array([p for _, p in rows])
        if weights.sum() <= 0.0:
            raise NullEventError(f"Pr[Phi ~ {psi}] = 0")
        return rows[int(rng.choice(len(rows), p=weights / weights.sum()))][0]

    def support_size(self) -> int:
        return sum(1 for _, p in self.table if p > 0.0)


Prior = IndependentPrior | JointPrior


@dataclass(frozen=True)
class ConditionalRealizations:
    """``p(phi | psi)``.

    For independent priors this stays factored: observed items are pinned and
    the rest keep their marginals, so sampling and per-item marginals never
    touch the full product space.  Iterating enumerates ``(phi, prob)`` pairs
    and is guarded by the enumeration cap.
    """

    prior: Prior
    psi: PartialRealization
    mass: float = field(compare=False)

    def state_distribution(self, item: int) -> list[tuple[int, float]]:
        return self.prior.state_distribution(item, self.psi)

    def sample(self, rng: np.random.Generator) -> Realization:
        return self.prior.sample(rng, self.psi)

    def __iter__(self) -> Iterator[tuple[Realization, float]]:
        prior, psi = self.prior, self.psi
        if isinstance(prior, JointPrior):
            check_enumerable(len(prior.table))
            for phi, p in prior._matching(psi):
                yield phi, p / self.mass
            return
        rows = []
        for e, row in enumerate(prior.probs):
            if e in psi:
                rows.append([(psi[e], 1.0)])
            else:
                rows.append([(o, p) for o, p in enumerate(row) if p > 0.0])
        check_enumerable(math.prod(len(r) for r in rows))
        for combo in itertools.product(*rows):
            yield tuple(o for o, _ in combo), math.prod(p for _, p in combo)


def conditional_realizations(prior: Prior, psi: PartialRealization) -> ConditionalRealizations:
    mass = prior.probability(psi)
    if mass <= 0.0:
        raise NullEventError(f"Pr[Phi ~ {psi}] = 0")
    return ConditionalRealizations(prior, psi, mass)


def realizations(prior: Prior) -> list[tuple[Realization, float]]:
    """All positive-probability realizations, cap-guarded."""
    check_enumerable(prior.support_size())
    return list(conditional_realizations(prior, _EMPTY))


# ---------------------------------------------------------------------------
# partition matroid


@dataclass(frozen=True)
class PartitionMatroid:
    """Disjoint blocks ``B_i`` with at most ``limits[i]`` picks from each."""

    blocks: tuple[tuple[int, ...], ...]
    limits: tuple[int, ...]

    def __post_init__(self):
        blocks = tuple(tuple(int(e) for e in b) for b in self.blocks)
        limits = tuple(int(d) for d in self.limits)
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "limits", limits)
        if len(blocks) != len(limits):
            raise InvalidInputError(f"{len(blocks)} blocks but {len(limits)} limits")
        seen: dict[int, int] = {}
        for i, block in enumerate(blocks):
            if len(set(block)) != len(block):
                raise InvalidInputError(f"block {i} repeats an item")
            for e in block:
                if e in seen:
                    raise InvalidInputError(
                        f"blocks must be disjoint: item {e} is in blocks {seen[e]} and {i}"
                    )
                seen[e] = i
            if not 0 <= limits[i] <= len(block):
                raise InvalidInputError(f"limit {limits[i]} of block {i} outside [0, {len(block)}]")

    def block_of(self, item: int) -> int | None:
        for i, block in enumerate(self.blocks):
            if item in block:
                return i
        return None

    def validate_for(self, n_items: int) -> None:
        for i, block in enumerate(self.blocks):
            for e in block:
                if not 0 <= e < n_items:
                    raise InvalidInputError(f"block {i} references unknown item {e}")

    def is_feasible(self, items: Iterable[int]) -> bool:
        items = set(items)
        if any(self.block_of(e) is None for e in items):
            return False
        return all(len(items.intersection(b)) <= d for b, d in zip(self.blocks, self.limits))

    @property
    def total_limit(self) -> int:
        return sum(self.limits)
