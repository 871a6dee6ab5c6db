import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adasub.core import (
    EnumerationCapError,
    GroundSet,
    IndependentPrior,
    InvalidInputError,
    JointPrior,
    NullEventError,
    PartialRealization,
    PartitionMatroid,
    all_partial_realizations,
    check_enumerable,
    conditional_realizations,
    enum_cap,
    is_consistent,
    is_subrealization,
    realizations,
    seed_stream,
)

P = PartialRealization


def test_consistency_examples():
    phi = (1, 0)
    assert is_consistent(phi, P())
    assert is_consistent(phi, P([(0, 1)]))
    assert not is_consistent(phi, P([(1, 1)]))


def test_consistency_unknown_item():
    with pytest.raises(InvalidInputError):
        is_consistent((1, 0), P([(5, 0)]))


def test_subrealization_examples():
    assert is_subrealization(P(), P([(0, 1)]))
    assert is_subrealization(P([(0, 1)]), P([(0, 1), (1, 0)]))
    assert not is_subrealization(P([(0, 0)]), P([(0, 1), (1, 0)]))


def test_partial_realization_order_free_equality():
    a = P([(0, 1), (2, 0)])
    b = P([(2, 0), (0, 1)])
    assert a == b and hash(a) == hash(b)
    assert a.pairs != b.pairs
    assert a.dom == frozenset({0, 2})
    assert a.canonical() == ((0, 1), (2, 0))


def test_partial_realization_rejects_repeats():
    with pytest.raises(InvalidInputError):
        P([(0, 1), (0, 0)])
    with pytest.raises(InvalidInputError):
        P([(0, 1)]).extend(0, 1)


def test_conditional_uniform_product():
    prior = IndependentPrior.bernoulli([0.5, 0.5])
    rows = list(conditional_realizations(prior, P()))
    assert len(rows) == 4
    assert all(p == pytest.approx(0.25, abs=1e-12) for _, p in rows)


def test_conditional_fixes_observed_item():
    prior = IndependentPrior.bernoulli([0.5, 0.5])
    rows = list(conditional_realizations(prior, P([(0, 1)])))
    assert len(rows) == 2
    assert all(phi[0] == 1 and p == pytest.approx(0.5) for phi, p in rows)


def test_conditional_joint_renormalizes():
    prior = JointPrior((2, 2), (((0, 0), 0.3), ((1, 1), 0.7)))
    rows = list(conditional_realizations(prior, P([(0, 1)])))
    assert rows == [((1, 1), pytest.approx(1.0))]


def test_conditional_null_event():
    prior = JointPrior((2, 2), (((0, 0), 0.3), ((1, 1), 0.7)))
    with pytest.raises(NullEventError):
        conditional_realizations(prior, P([(0, 0), (1, 1)]))
    with pytest.raises(NullEventError):
        conditional_realizations(IndependentPrior.bernoulli([1.0]), P([(0, 0)]))


def test_prior_validation():
    with pytest.raises(InvalidInputError):
        IndependentPrior(((0.5, 0.4),))
    with pytest.raises(InvalidInputError):
        IndependentPrior(((1.2, -0.2),))
    with pytest.raises(InvalidInputError):
        JointPrior((2,), (((0,), 0.5), ((1,), 0.4)))


def test_joint_prior_respects_cap(monkeypatch):
    monkeypatch.setenv("ADASUB_ENUM_CAP", "8")
    with pytest.raises(EnumerationCapError):
        JointPrior((2,) * 4, (((0, 0, 0, 0), 1.0),))


def test_cap_env_override(monkeypatch):
    assert enum_cap() == 2 ** 12
    monkeypatch.setenv("ADASUB_ENUM_CAP", "10")
    assert enum_cap() == 10
    with pytest.raises(EnumerationCapError):
        check_enumerable(11)
    monkeypatch.setenv("ADASUB_ENUM_CAP", "lots")
    with pytest.raises(InvalidInputError):
        enum_cap()


def test_realizations_cap():
    with pytest.raises(EnumerationCapError):
        realizations(IndependentPrior.bernoulli([0.5] * 13))


def test_sampling_frequencies():
    prior = IndependentPrior(((0.2, 0.3, 0.5), (0.9, 0.1)))
    rng = np.random.default_rng(1)
    draws = np.array([prior.sample(rng) for _ in range(20000)])
    freq = np.bincount(draws[:, 0], minlength=3) / len(draws)
    assert np.allclose(freq, [0.2, 0.3, 0.5], atol=0.02)
    # observed items stay pinned
    assert all(prior.sample(rng, P([(1, 1)]))[1] == 1 for _ in range(50))


def test_sampling_never_hits_zero_probability_state():
    prior = IndependentPrior(((0.0, 1.0), (0.5, 0.0, 0.5)))
    rng = np.random.default_rng(3)
    for _ in range(500):
        phi = prior.sample(rng)
        assert phi[0] == 1 and phi[1] != 1


def test_seed_streams_are_labeled():
    a = np.random.default_rng(seed_stream(7, "policy")).random()
    b = np.random.default_rng(seed_stream(7, "policy")).random()
    c = np.random.default_rng(seed_stream(7, "oracle")).random()
    assert a == b != c


def test_ground_set():
    g = GroundSet(3, (2, 2, 2), n_dummy=5)
    assert g.n_real == 3 and g.n_dummy == 5


def test_matroid_validation():
    with pytest.raises(InvalidInputError, match="disjoint"):
        PartitionMatroid(((0, 1), (1, 2)), (1, 1))
    with pytest.raises(InvalidInputError):
        PartitionMatroid(((0, 1),), (3,))
    with pytest.raises(InvalidInputError):
        PartitionMatroid(((0, 1),), (1, 1))
    m = PartitionMatroid(((0, 1), (2, 3)), (1, 2))
    assert m.is_feasible({0, 2, 3}) and not m.is_feasible({0, 1})
    assert m.total_limit == 3 and m.block_of(3) == 1
    with pytest.raises(InvalidInputError):
        m.validate_for(3)


# ---------------------------------------------------------------------------
# properties


def _binary_partials(n):
    return list(all_partial_realizations([2] * n))


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_subrealization_is_a_partial_order(n):
    parts = _binary_partials(n)
    assert len(parts) == 3 ** n
    for a in parts:
        assert is_subrealization(a, a)
    for a, b in itertools.product(parts, repeat=2):
        if is_subrealization(a, b) and is_subrealization(b, a):
            assert a == b
    for a, b, c in itertools.product(parts, repeat=3) if n <= 3 else ():
        if is_subrealization(a, b) and is_subrealization(b, c):
            assert is_subrealization(a, c)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_consistency_is_inherited_by_subrealizations(n):
    parts = _binary_partials(n)
    for phi in itertools.product(range(2), repeat=n):
        for big in parts:
            if not is_consistent(phi, big):
                continue
            for small in parts:
                if is_subrealization(small, big):
                    assert is_consistent(phi, small)


probs = st.lists(st.floats(0.0, 1.0), min_size=1, max_size=4)


@settings(max_examples=60, deadline=None)
@given(p=probs, data=st.data())
def test_conditional_probabilities_sum_to_one(p, data):
    prior = IndependentPrior.bernoulli(p)
    n = len(p)
    obs = data.draw(st.dictionaries(st.integers(0, n - 1), st.integers(0, 1), max_size=n))
    psi = P(obs.items())
    if prior.probability(psi) == 0:
        with pytest.raises(NullEventError):
            conditional_realizations(prior, psi)
        return
    rows = list(conditional_realizations(prior, psi))
    assert all(w >= 0 for _, w in rows)
    assert math.fsum(w for _, w in rows) == pytest.approx(1.0, abs=1e-12)
    assert all(is_consistent(phi, psi) for phi, _ in rows)


@settings(max_examples=40, deadline=None)
@given(table=st.lists(st.floats(0.01, 1.0), min_size=4, max_size=4), item=st.integers(0, 1), state=st.integers(0, 1))
def test_joint_conditional_sums_to_one(table, item, state):
    total = sum(table)
    rows = tuple((phi, w / total) for phi, w in zip(itertools.product(range(2), repeat=2), table))
    prior = JointPrior((2, 2), rows)
    cond = list(conditional_realizations(prior, P([(item, state)])))
    assert math.fsum(w for _, w in cond) == pytest.approx(1.0, abs=1e-12)
