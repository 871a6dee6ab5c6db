"""Guarantee checks run by ``adasub verify``.

Each suite returns a list of :class:`Check`; a suite passes when every check does.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .analysis import (
    _ExactGains,
    check_adaptive_monotonicity,
    check_adaptive_submodularity,
    check_fully_adaptive_submodularity,
    check_pointwise_submodularity,
    check_sampling_lemma,
    exact_favg,
    mc_favg,
    optimal_policy_value,
    optimal_policy_value_matroid,
    round_distribution,
)
from .core import IndependentPrior, all_partial_realizations, realizations, seed_stream
from .objectives import (
    Instance,
    SquareCardinality,
    generate_coverage,
    generate_cut,
    generate_mixed,
    load_instance,
    make_instance,
    random_partition_matroid,
)
from .oracle import ValueOracle
from .policies import (
    STOP,
    AdaptiveGreedy,
    AdaptiveRandomGreedy,
    AdaptiveStochasticGreedy,
    GeneralizedASG,
    LinearTimePolicy,
    LocallyGreedy,
    lt_params,
    run_policy,
    sample_size_asg,
)

TOL = 1e-9
INV_E = 1.0 / math.e


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    measured: str
    required: str

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name}: measured {self.measured}; required {self.required}"


# ---------------------------------------------------------------------------
# fixtures and instance sweeps


def fixture_names() -> list[str]:
    root = resources.files("adasub") / "fixtures"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def fixture_path(name: str) -> Path:
    return Path(str(resources.files("adasub") / "fixtures" / f"{name}.yaml"))


def load_fixture(name: str) -> Instance:
    return load_instance(fixture_path(name))


def square_fixture(n: int = 3) -> Instance:
    """``f(S) = |S|^2`` with a non-degenerate binary prior."""
    return make_instance(IndependentPrior.bernoulli([0.5] * n), SquareCardinality(n), name=f"square{n}")


def nonmonotone_sweep(seed: int, count: int = 20) -> list[tuple[Instance, int]]:
    """Alternating cut and mixed instances, ``n`` in 4..6 real items, ``k`` in {2, 3}."""
    rng = np.random.default_rng(seed_stream(seed, "sweep-nonmonotone"))
    out = []
    for i in range(count):
        n = int(rng.integers(4, 7))
        k = 2 + i % 2
        sub = int(rng.integers(0, 2 ** 31))
        if i % 2 == 0:
            inst = generate_cut(n, edge_prob=float(rng.uniform(0.4, 0.9)), max_weight=2.0,
                                p_state=float(rng.uniform(0.2, 0.8)), seed=sub)
        else:
            inst = generate_mixed(n, int(rng.integers(2, 5)), coverage_density=float(rng.uniform(0.3, 0.7)),
                                  p_normal=float(rng.uniform(0.3, 0.9)), edge_prob=float(rng.uniform(0.4, 0.9)),
                                  seed=sub)
        out.append((inst, k))
    return out


def coverage_sweep(seed: int, count: int = 20) -> list[tuple[Instance, int]]:
    rng = np.random.default_rng(seed_stream(seed, "sweep-coverage"))
    out = []
    for i in range(count):
        n = int(rng.integers(4, 7))
        inst = generate_coverage(n, int(rng.integers(4, 9)), float(rng.uniform(0.25, 0.6)),
                                 float(rng.uniform(0.3, 0.9)), int(rng.integers(0, 2 ** 31)))
        out.append((inst, 2 + i % 2))
    return out


def matroid_sweep(seed: int, count: int = 10) -> list[Instance]:
    """Coverage instances with 2-3 blocks and at most 4 picks in total."""
    rng = np.random.default_rng(seed_stream(seed, "sweep-matroid"))
    out = []
    for i in range(count):
        n = int(rng.integers(4, 7))
        sub = int(rng.integers(0, 2 ** 31))
        inst = generate_coverage(n, int(rng.integers(4, 9)), float(rng.uniform(0.25, 0.6)),
                                 float(rng.uniform(0.3, 0.9)), sub)
        blocks = 2 + i % 2
        total = int(rng.integers(blocks, min(4, n) + 1))
        out.append(inst.with_matroid(random_partition_matroid(n, blocks, total, sub)))
    return out


# ---------------------------------------------------------------------------
# suites


def _ratio_check(name: str, rows, bound: float, label: str) -> Check:
    """``rows`` holds ``(policy value, optimum)`` pairs; check ``value >= bound * optimum - TOL``."""
    worst = min((v - bound * opt for v, opt in rows), default=0.0)
    ratio = min((v / opt for v, opt in rows if opt > 0), default=1.0)
    return Check(
        name,
        worst >= -TOL,
        f"min ratio {ratio:.6f} over {len(rows)} instances",
        f">= {label} = {bound:.6f}",
    )


def ratio_nonmonotone(seed: int = 0) -> list[Check]:
    arg_rows, lt_rows = [], []
    for inst, k in nonmonotone_sweep(seed):
        opt = optimal_policy_value(inst, k)
        arg_rows.append((exact_favg(AdaptiveRandomGreedy(k), inst).favg, opt))
        lt_rows.append((exact_favg(LinearTimePolicy(k, 0.1), inst).favg, opt))
    return [
        _ratio_check("non-monotone ratio, adaptive random greedy", arg_rows, INV_E, "1/e"),
        _ratio_check("non-monotone ratio, linear-time policy (eps=0.1)", lt_rows, INV_E - 0.1, "1/e - 0.1"),
    ]


def ratio_monotone(seed: int = 0) -> list[Check]:
    rows = {"greedy": [], "arg": [], "lt": [], "asg": []}
    for inst, k in coverage_sweep(seed):
        opt = optimal_policy_value(inst, k)
        rows["greedy"].append((exact_favg(AdaptiveGreedy(k), inst).favg, opt))
        rows["arg"].append((exact_favg(AdaptiveRandomGreedy(k), inst).favg, opt))
        rows["lt"].append((exact_favg(LinearTimePolicy(k, 0.1), inst).favg, opt))
        rows["asg"].append((exact_favg(AdaptiveStochasticGreedy(k, 0.1), inst).favg, opt))
    mono = 1.0 - INV_E
    return [
        _ratio_check("monotone ratio, adaptive greedy", rows["greedy"], mono, "1 - 1/e"),
        _ratio_check("monotone ratio, adaptive random greedy", rows["arg"], mono, "1 - 1/e"),
        _ratio_check("monotone ratio, linear-time policy (eps=0.1)", rows["lt"], mono - 0.1, "1 - 1/e - 0.1"),
        _ratio_check("monotone ratio, stochastic greedy (eps=0.1)", rows["asg"], mono - 0.1, "1 - 1/e - 0.1"),
    ]


GASG_BOUND = (1 - INV_E - 0.1) / (4 - 2 * INV_E - 0.2)


def ratio_matroid(seed: int = 0) -> list[Check]:
    local_rows, gasg_rows = [], []
    for inst in matroid_sweep(seed):
        opt = optimal_policy_value_matroid(inst, inst.matroid)
        local_rows.append((exact_favg(LocallyGreedy(inst.matroid), inst).favg, opt))
        gasg_rows.append((exact_favg(GeneralizedASG(inst.matroid, 0.1), inst).favg, opt))
    return [
        _ratio_check("matroid ratio, locally greedy", local_rows, 0.5, "1/2"),
        _ratio_check("matroid ratio, generalized stochastic greedy (eps=0.1)", gasg_rows, GASG_BOUND,
                     "(1-1/e-0.1)/(4-2/e-0.2)"),
    ]


def suite_ratios(seed: int = 0) -> list[Check]:
    return ratio_nonmonotone(seed) + ratio_monotone(seed) + ratio_matroid(seed)


QUERY_GRID_N = (10, 100)
QUERY_GRID_K = (1, 2, 5)
QUERY_GRID_EPS = (0.05, 0.1, 0.45)


def expected_queries(policy, n: int, trace) -> int:
    """Closed-form oracle-call count of one run."""
    if isinstance(policy, LinearTimePolicy):
        return policy.k * lt_params(n, policy.k, policy.epsilon).sample_size
    if isinstance(policy, AdaptiveStochasticGreedy):
        return policy.k * sample_size_asg(n, policy.k, policy.epsilon)
    if isinstance(policy, GeneralizedASG):
        mat = policy.matroid
        return sum(d * policy.sample_size(i) for i, d in enumerate(mat.limits) if d > 0)
    if isinstance(policy, AdaptiveRandomGreedy):
        # every round queries each unselected real item; selections only come from real picks
        total, chosen = 0, 0
        for action in trace.actions:
            total += n - chosen
            chosen += action is not None
        return total
    if isinstance(policy, AdaptiveGreedy):
        # round r queries the n - r + 1 items still unselected; stopping early on a
        # negative best gain costs one extra round of queries
        picked = len(trace.items)
        rounds = picked + (picked < min(policy.k, n))
        return sum(n - r for r in range(rounds))
    raise TypeError(f"no closed form for {policy!r}")


def query_grid(seed: int = 0):
    """Yield ``(label, measured, expected, bound)`` for every grid point and policy."""
    for n in QUERY_GRID_N:
        inst = generate_coverage(n, 20, 0.2, 0.7, seed)
        phi = inst.prior.sample(np.random.default_rng(seed_stream(seed, "query-phi", n)))
        for k in QUERY_GRID_K:
            pols = [AdaptiveGreedy(k), AdaptiveRandomGreedy(k)]
            mat = random_partition_matroid(n, 2, k, seed + k)
            for eps in QUERY_GRID_EPS:
                pols += [LinearTimePolicy(k, eps), AdaptiveStochasticGreedy(k, eps), GeneralizedASG(mat, eps)]
            for pol in pols:
                oracle = ValueOracle(inst)
                trace = run_policy(pol, phi, oracle, seed_stream(seed, "query-run", n, k))
                measured = oracle.ledger.item_queries
                yield f"n={n} {pol!r}", measured, expected_queries(pol, n, trace), _query_bound(pol, n)


def _query_bound(policy, n: int) -> float:
    if isinstance(policy, (AdaptiveGreedy, AdaptiveRandomGreedy)):
        return n * policy.k
    if isinstance(policy, LinearTimePolicy):
        q = lt_params(n, policy.k, policy.epsilon).q
        return (q * n + 1) * policy.k
    if isinstance(policy, AdaptiveStochasticGreedy):
        return n * math.log(1 / policy.epsilon) + policy.k
    return n * math.log(1 / policy.epsilon) + policy.matroid.total_limit


def suite_queries(seed: int = 0) -> list[Check]:
    rows = list(query_grid(seed))
    exact = [r for r in rows if r[1] != r[2]]
    over = [r for r in rows if r[1] > r[3] + TOL]
    return [
        Check("query counts equal closed forms", not exact,
              f"{len(rows) - len(exact)}/{len(rows)} exact matches" + (f"; first mismatch {exact[0][:3]}" if exact else ""),
              "integer equality on every grid point"),
        Check("query counts within stated bounds", not over,
              f"{len(rows) - len(over)}/{len(rows)} within bound", "nk, (qn+1)k, n ln(1/eps) + k"),
    ]


def suite_sampling(seed: int = 0) -> list[Check]:
    trials = 10 ** 5
    rate, bound = check_sampling_lemma(100, 10, 0.1, trials, seed)
    sigma = math.sqrt(rate * (1 - rate) / trials)
    return [Check("sampling lemma n=100 k=10 eps=0.1", rate >= bound - 4 * sigma,
                  f"hit rate {rate:.5f} (sigma {sigma:.5f})", f">= {bound} - 4 sigma")]


def reduction_instance(seed: int = 0) -> Instance:
    return generate_mixed(5, 3, 0.5, 0.6, 0.6, 2.0, seed=seed)


def lt_arg_max_gap(inst: Instance, k: int, epsilon: float) -> float:
    """Largest per-round probability gap between the linear-time policy and random greedy.

    Actions are projected to positive-gain real items and a lumped null action.
    """
    lt, arg = LinearTimePolicy(k, epsilon), AdaptiveRandomGreedy(k)
    gains = _ExactGains(inst)
    worst = 0.0
    for psi in all_partial_realizations(inst.ground.state_alphabets):
        if len(psi) >= k or inst.prior.probability(psi) <= 0:
            continue
        projected = []
        for pol in (lt, arg):
            dist: dict = {}
            for action, p in round_distribution(pol, inst, psi, 0).items():
                keep = action not in (None, STOP) and gains.expected_gain(action, psi) > 0
                key = action if keep else None
                dist[key] = dist.get(key, 0.0) + p
            projected.append(dist)
        keys = set(projected[0]) | set(projected[1])
        worst = max([worst] + [abs(projected[0].get(a, 0) - projected[1].get(a, 0)) for a in keys])
    return worst


def trace_mismatches(first, second, inst: Instance) -> int:
    bad = 0
    for phi, _ in realizations(inst.prior):
        for s in range(3):
            t1 = run_policy(first, phi, ValueOracle(inst), s)
            t2 = run_policy(second, phi, ValueOracle(inst), s)
            bad += t1.items != t2.items
    return bad


def property_checks(seed: int = 0) -> list[Check]:
    checks = []
    coverage = [load_fixture(name) for name in ("coverage_minimal", "coverage3", "coverage4_matroid")]
    for inst in coverage:
        res = {
            "adaptive submodular": check_adaptive_submodularity(inst),
            "adaptive monotone": check_adaptive_monotonicity(inst),
            "pointwise submodular": check_pointwise_submodularity(inst),
            "fully adaptive submodular (a<=2)": check_fully_adaptive_submodularity(inst, 2),
        }
        for prop, viol in res.items():
            checks.append(Check(f"{inst.name} is {prop}", not viol, f"{len(viol)} violations", "0 violations"))
    cut = load_fixture("cut_triangle")
    for prop, fn in (("adaptive submodular", check_adaptive_submodularity),
                     ("pointwise submodular", check_pointwise_submodularity)):
        viol = fn(cut)
        checks.append(Check(f"cut_triangle is {prop}", not viol, f"{len(viol)} violations", "0 violations"))
    viol = check_adaptive_monotonicity(cut)
    checks.append(Check("cut_triangle is not adaptive monotone", bool(viol),
                        f"{len(viol)} violations" + (f", e.g. {viol[0].witness}" if viol else ""), ">= 1 witness"))
    sq = square_fixture(3)
    for prop, viol in (("adaptive submodular", check_adaptive_submodularity(sq)),
                       ("pointwise submodular", check_pointwise_submodularity(sq)),
                       ("fully adaptive submodular", check_fully_adaptive_submodularity(sq, 2))):
        checks.append(Check(f"|S|^2 is not {prop}", bool(viol),
                            f"{len(viol)} violations" + (f", e.g. {viol[0].witness}" if viol else ""),
                            ">= 1 witness"))
    return checks


def reduction_checks(seed: int = 0) -> list[Check]:
    checks = []
    red = reduction_instance(seed)
    k = 2
    eps = 0.1
    assert math.ceil(lt_params(red.n, k, eps).q * red.n) >= red.n
    gap = lt_arg_max_gap(red, k, eps)
    checks.append(Check("linear-time policy reduces to random greedy", gap <= TOL,
                        f"max per-round gap {gap:.3e}", f"<= {TOL}"))
    mono = generate_coverage(5, 6, 0.5, 0.6, seed)
    small_eps = math.exp(-5) / 2
    bad = trace_mismatches(AdaptiveStochasticGreedy(2, small_eps), AdaptiveGreedy(2), mono)
    checks.append(Check("full-sample stochastic greedy equals greedy", bad == 0, f"{bad} differing traces", "0"))
    mat = random_partition_matroid(5, 2, 3, seed)
    mono_m = mono.with_matroid(mat)
    bad = trace_mismatches(GeneralizedASG(mat, small_eps), LocallyGreedy(mat), mono_m)
    checks.append(Check("full-sample generalized stochastic greedy equals locally greedy", bad == 0,
                        f"{bad} differing traces", "0"))

    return checks


def mc_checks(seed: int = 0, trials: int = 10 ** 4) -> list[Check]:
    checks = []
    for name in fixture_names():
        inst = load_fixture(name)
        k = min(2, inst.n)
        pols = [AdaptiveGreedy(k), AdaptiveRandomGreedy(k)]
        if inst.matroid is not None:
            pols.append(GeneralizedASG(inst.matroid, 0.3))
        for pol in pols:
            ex = exact_favg(pol, inst).favg
            mc = mc_favg(pol, inst, trials, seed)
            # float floor for zero-variance estimates
            ok = abs(mc.favg - ex) <= 4 * mc.stderr + TOL
            checks.append(Check(f"Monte-Carlo vs exact, {name} {pol!r}", ok,
                                f"|{mc.favg:.5f} - {ex:.5f}| vs 4 SE = {4 * mc.stderr:.5f}", "within 4 SE"))
    return checks


def suite_properties(seed: int = 0) -> list[Check]:
    return property_checks(seed) + reduction_checks(seed) + mc_checks(seed)


SUITES = {
    "ratios": suite_ratios,
    "properties": suite_properties,
    "queries": suite_queries,
    "sampling": suite_sampling,
}


def run_suite(name: str, seed: int = 0) -> list[Check]:
    if name == "all":
        return [c for fn in SUITES.values() for c in fn(seed)]
    return SUITES[name](seed)
