"""Command-line front end: ``adasub run | verify | generate``.

Exit codes: 0 success, 1 invalid configuration, 2 enumeration cap exceeded,
3 a verification check failed.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
import time
from contextlib import contextmanager
from pathlib import Path

from .analysis import exact_favg, mc_favg
from .core import AdasubError, EnumerationCapError, InvalidInputError, seed_stream
from .objectives import (
    Instance,
    cut_instance,
    dump_instance,
    generate_coverage,
    generate_cut,
    generate_mixed,
    load_instance,
    random_partition_matroid,
)
from .policies import NEEDS_EPSILON, NEEDS_MATROID, POLICY_NAMES, build_policy
from .verify import SUITES, run_suite

CSV_COLUMNS = (
    "instance", "policy", "k", "epsilon", "seed", "trials", "mode",
    "favg", "stderr", "queries_mean", "wall_ms",
)

EXIT_INVALID = 1
EXIT_CAP = 2
EXIT_FAIL = 3


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; 2 is taken by the cap error here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return format(x, ".9g")
    return str(x)


# ---------------------------------------------------------------------------
# parameter parsing

_GEN_KEYS = {
    "coverage": {"n": int, "m": int, "density": float, "p": float},
    "cut": {"n": int, "edge_prob": float, "max_weight": float, "p": float},
    "mixed": {"n": int, "m": int, "density": float, "p": float, "edge_prob": float, "max_weight": float},
}
_MATROID_KEYS = {"blocks": int, "limit": int}


def parse_params(kind: str, pairs, where: str) -> dict:
    if kind not in _GEN_KEYS:
        raise ConfigError(f"{where}: unknown generator kind {kind!r}; choose from {', '.join(_GEN_KEYS)}")
    allowed = {**_GEN_KEYS[kind], **_MATROID_KEYS}
    out = {}
    for pair in pairs:
        if not pair:
            continue
        key, sep, raw = pair.partition("=")
        key = key.strip()
        if not sep or key not in allowed:
            raise ConfigError(
                f"{where}: bad parameter {pair!r}; expected key=value with key in {', '.join(allowed)}"
            )
        try:
            out[key] = allowed[key](raw.strip())
        except ValueError:
            raise ConfigError(f"{where}: parameter {key!r} needs a {allowed[key].__name__}, got {raw!r}") from None
    if "n" not in out:
        raise ConfigError(f"{where}: parameter n is required")
    if ("blocks" in out) != ("limit" in out):
        raise ConfigError(f"{where}: blocks and limit must be given together")
    return out


def parse_edges(text: str) -> list[tuple[int, int, float]]:
    edges = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        try:
            ends, _, weight = chunk.partition(":")
            u, v = ends.split("-")
            edges.append((int(u), int(v), float(weight) if weight else 1.0))
        except ValueError:
            raise ConfigError(f"--edges: cannot parse {chunk!r}; expected u-v or u-v:weight") from None
    if not edges:
        raise ConfigError("--edges: no edges given")
    return edges


def build_instance(kind: str, params: dict, seed: int, edges=None) -> Instance:
    # one labeled split of the global seed feeds the generators
    gen_seed = int(seed_stream(seed, "instance-gen").generate_state(1)[0])
    n = params["n"]
    if kind == "coverage":
        inst = generate_coverage(n, params.get("m", n), params.get("density", 0.5), params.get("p", 0.7), gen_seed)
    elif kind == "cut":
        if edges is not None:
            inst = cut_instance(n, edges, params.get("p", 0.5), name=f"cut-n{n}")
        else:
            inst = generate_cut(n, params.get("edge_prob", 0.6), params.get("max_weight", 2.0),
                                params.get("p", 0.5), gen_seed)
    else:
        inst = generate_mixed(n, params.get("m", n), params.get("density", 0.5), params.get("p", 0.7),
                              params.get("edge_prob", 0.6), params.get("max_weight", 2.0), gen_seed)
    if "blocks" in params:
        inst = inst.with_matroid(random_partition_matroid(n, params["blocks"], params["limit"], gen_seed))
    return inst


def resolve_instance(spec: str, seed: int) -> Instance:
    """A file path, or ``gen:KIND:key=value,...``."""
    if spec.startswith("gen:"):
        kind, _, rest = spec[4:].partition(":")
        params = parse_params(kind, rest.split(","), "--instance")
        return build_instance(kind, params, seed)
    if not Path(spec).exists():
        raise ConfigError(f"--instance: no such file {spec!r}")
    return load_instance(spec)


def _split_list(text: str | None, conv, flag: str) -> list:
    if text is None:
        return [None]
    try:
        return [conv(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"{flag}: cannot parse {text!r}") from None


# ---------------------------------------------------------------------------
# commands


def _combinations(args, instance: Instance):
    policies = [p.strip() for p in args.policy.split(",") if p.strip()]
    if not policies:
        raise ConfigError("--policy: no policy given")
    ks = _split_list(args.k, int, "--k")
    eps = _split_list(args.epsilon, float, "--epsilon")
    combos = []
    for name in policies:
        if name not in POLICY_NAMES:
            raise ConfigError(f"--policy: unknown policy {name!r}; choose from {', '.join(POLICY_NAMES)}")
        if name in NEEDS_EPSILON and eps == [None]:
            raise ConfigError(f"--epsilon is required for policy {name!r}")
        if name in NEEDS_MATROID and instance.matroid is None:
            raise ConfigError(f"--instance: policy {name!r} needs a matroid in the instance")
        if name not in NEEDS_MATROID and ks == [None]:
            raise ConfigError(f"--k is required for policy {name!r}")
        for k in ([None] if name in NEEDS_MATROID else ks):
            for e in (eps if name in NEEDS_EPSILON else [None]):
                try:
                    pol = build_policy(name, k, e, instance.matroid)
                    pol.validate(instance.n)
                except InvalidInputError as exc:
                    flag = "--epsilon" if "epsilon" in str(exc) else "--k"
                    raise ConfigError(f"{flag}: {exc}") from None
                combos.append((name, k, e, pol))
    return combos


def cmd_run(args, out) -> int:
    if args.trials < 1:
        raise ConfigError("--trials must be at least 1")
    if args.jobs < 1:
        raise ConfigError("--jobs must be at least 1")
    instance = resolve_instance(args.instance, args.seed)
    combos = _combinations(args, instance)
    rows = []
    for name, k, eps, pol in combos:
        t0 = time.perf_counter()
        if args.mode == "exact":
            rep = exact_favg(pol, instance)
        else:
            rep = mc_favg(pol, instance, args.trials, seed=args.seed, jobs=args.jobs)
        wall = (time.perf_counter() - t0) * 1000.0
        rows.append([_fmt(v) for v in (
            instance.name, name, k, eps, args.seed, rep.trials, args.mode,
            float(rep.favg), float(rep.stderr), float(rep.mean_queries), wall,
        )])
    # rows are held back so a failing combination leaves no partial table
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    writer.writerows(rows)
    return 0


def cmd_verify(args, out) -> int:
    checks = run_suite(args.suite, args.seed)
    for c in checks:
        print(c.line(), file=out)
    failed = sum(not c.passed for c in checks)
    print(f"{len(checks) - failed}/{len(checks)} checks passed", file=out)
    return EXIT_FAIL if failed else 0


def cmd_generate(args, out) -> int:
    params = parse_params(args.kind, args.params, "generate")
    edges = None
    if args.edges is not None:
        if args.kind != "cut":
            raise ConfigError("--edges only applies to cut instances")
        edges = parse_edges(args.edges)
    inst = build_instance(args.kind, params, args.seed, edges)
    out.write(dump_instance(inst))
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="adasub", description="Adaptive submodular maximization experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="evaluate policies on an instance and print CSV")
    run.add_argument("--instance", required=True, help="instance file, or gen:KIND:key=value,...")
    run.add_argument("--policy", required=True, help=f"comma list from {', '.join(POLICY_NAMES)}")
    run.add_argument("--k", help="cardinality budget (comma list allowed)")
    run.add_argument("--epsilon", help="accuracy parameter for lt, asg, gasg (comma list allowed)")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--trials", type=int, default=1000, help="Monte-Carlo trials (mode mc)")
    run.add_argument("--mode", choices=("exact", "mc"), default="exact")
    run.add_argument("--jobs", type=int, default=1)
    run.add_argument("--out", help="CSV path (default stdout)")

    ver = sub.add_parser("verify", help="run an acceptance suite")
    ver.add_argument("suite", choices=(*SUITES, "all"))
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument("--out", help="report path (default stdout)")

    gen = sub.add_parser("generate", help="write a random instance file")
    gen.add_argument("kind", choices=tuple(_GEN_KEYS))
    gen.add_argument("params", nargs="*", help="key=value pairs, e.g. n=5 m=8 density=0.5 blocks=2 limit=3")
    gen.add_argument("--edges", help="cut edge list u-v:w,... (replaces random edges)")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", help="output path (default stdout)")
    return parser


_COMMANDS = {"run": cmd_run, "verify": cmd_verify, "generate": cmd_generate}


@contextmanager
def _output(path):
    if path is None:
        yield sys.stdout
        return
    buf = io.StringIO()
    yield buf
    try:
        Path(path).write_text(buf.getvalue(), encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"--out: cannot write {path!r} ({exc.strerror})") from None


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        with _output(args.out) as out:
            return _COMMANDS[args.command](args, out)
    except EnumerationCapError as exc:
        print(f"adasub: {exc}\nhint: use --mode mc", file=sys.stderr)
        return EXIT_CAP
    except (ConfigError, AdasubError, ValueError) as exc:
        print(f"adasub: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
