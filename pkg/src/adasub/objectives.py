"""State-dependent utility functions, instance generators and the instance file format."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import yaml

from .core import (
    GroundSet,
    IndependentPrior,
    InvalidInputError,
    JointPrior,
    PartitionMatroid,
    Prior,
    seed_stream,
)


class Objective:
    """``f(S, phi) >= 0``.

    ``local`` objectives read only the states of the items in ``S``; the
    oracle uses this to avoid enumerating states of unobserved items.
    Items at or beyond ``n_items`` (dummies) are ignored by ``evaluate``.
    """

    local = True
    n_items: int

    def value(self, items: frozenset, phi: Mapping[int, int] | Sequence[int]) -> float:
        raise NotImplementedError

    def evaluate(self, items: Iterable[int], phi) -> float:
        n = self.n_items
        return self.value(frozenset(e for e in items if e < n), phi)

    def to_spec(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class CoverageObjective(Objective):
    """Number of targets covered; ``covers[e][o]`` is what item ``e`` covers in state ``o``."""

    n_targets: int
    covers: tuple[tuple[frozenset, ...], ...]

    def __post_init__(self):
        covers = tuple(tuple(frozenset(int(t) for t in s) for s in per_state) for per_state in self.covers)
        object.__setattr__(self, "covers", covers)
        for e, per_state in enumerate(covers):
            for s in per_state:
                bad = [t for t in s if not 0 <= t < self.n_targets]
                if bad:
                    raise InvalidInputError(f"item {e} covers unknown targets {bad}")

    @property
    def n_items(self) -> int:
        return len(self.covers)

    def value(self, items, phi) -> float:
        covered: set = set()
        for e in items:
            covered |= self.covers[e][phi[e]]
        return float(len(covered))

    def to_spec(self) -> dict:
        return {
            "type": "coverage",
            "targets": self.n_targets,
            "covers": [[sorted(s) for s in per_state] for per_state in self.covers],
        }


@dataclass(frozen=True, eq=False)
class CutObjective(Objective):
    """Weight of edges with exactly one endpoint selected; ignores states."""

    n: int
    edges: tuple[tuple[int, int, float], ...]

    def __post_init__(self):
        edges = tuple((int(u), int(v), float(w)) for u, v, w in self.edges)
        object.__setattr__(self, "edges", edges)
        for u, v, w in edges:
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise InvalidInputError(f"edge ({u}, {v}) references unknown vertex")
            if u == v:
                raise InvalidInputError(f"self-loop on vertex {u}")
            if w < 0 or not math.isfinite(w):
                raise InvalidInputError(f"edge ({u}, {v}) has invalid weight {w}")

    @property
    def n_items(self) -> int:
        return self.n

    def value(self, items, phi) -> float:
        return math.fsum(w for u, v, w in self.edges if (u in items) != (v in items))

    def to_spec(self) -> dict:
        return {"type": "cut", "edges": [[u, v, w] for u, v, w in self.edges]}


@dataclass(frozen=True, eq=False)
class SumObjective(Objective):
    parts: tuple[Objective, ...]

    def __post_init__(self):
        if not self.parts:
            raise InvalidInputError("sum objective needs at least one part")
        sizes = {p.n_items for p in self.parts}
        if len(sizes) != 1:
            raise InvalidInputError(f"sum parts disagree on item count: {sorted(sizes)}")

    @property
    def local(self) -> bool:
        return all(p.local for p in self.parts)

    @property
    def n_items(self) -> int:
        return self.parts[0].n_items

    def value(self, items, phi) -> float:
        return math.fsum(p.value(items, phi) for p in self.parts)

    def to_spec(self) -> dict:
        return {"type": "sum", "parts": [p.to_spec() for p in self.parts]}


@dataclass(frozen=True, eq=False)
class SquareCardinality(Objective):
    """``|S|^2``: supermodular, used as a fixture that violates every submodularity notion."""

    n: int

    @property
    def n_items(self) -> int:
        return self.n

    def value(self, items, phi) -> float:
        return float(len(items) ** 2)

    def to_spec(self) -> dict:
        raise InvalidInputError("the |S|^2 fixture has no file representation")


def evaluate(objective: Objective, items: Iterable[int], phi) -> float:
    return objective.evaluate(items, phi)


# ---------------------------------------------------------------------------
# instances


@dataclass(frozen=True)
class Instance:
    ground: GroundSet
    prior: Prior
    objective: Objective
    matroid: PartitionMatroid | None = None
    name: str = "instance"
    labels: tuple[tuple[str, ...], ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        n = self.ground.n_real
        if self.prior.n_items != n:
            raise InvalidInputError(f"prior covers {self.prior.n_items} items, ground set has {n}")
        if tuple(self.prior.alphabets) != tuple(self.ground.state_alphabets):
            raise InvalidInputError("prior alphabets do not match the ground set")
        if self.objective.n_items != n:
            raise InvalidInputError(f"objective covers {self.objective.n_items} items, ground set has {n}")
        if isinstance(self.objective, CoverageObjective):
            for e, per_state in enumerate(self.objective.covers):
                if len(per_state) != self.ground.state_alphabets[e]:
                    raise InvalidInputError(
                        f"objective.covers[{e}] lists {len(per_state)} states, item has "
                        f"{self.ground.state_alphabets[e]}"
                    )
        if self.matroid is not None:
            self.matroid.validate_for(n)

    @property
    def n(self) -> int:
        return self.ground.n_real

    def with_matroid(self, matroid: PartitionMatroid | None) -> "Instance":
        return Instance(self.ground, self.prior, self.objective, matroid, self.name, self.labels)


def make_instance(prior: Prior, objective: Objective, matroid=None, name="instance") -> Instance:
    ground = GroundSet(prior.n_items, tuple(prior.alphabets))
    return Instance(ground, prior, objective, matroid, name)


def generate_coverage(
    n_sensors: int,
    n_targets: int,
    coverage_density: float,
    p_normal: float,
    seed: int,
) -> Instance:
    """Two-state sensors (0 = failure, 1 = normal); a normal sensor covers each
    target independently with probability ``coverage_density``."""
    if n_sensors < 1 or n_targets < 1:
        raise InvalidInputError("need at least one sensor and one target")
    if not 0.0 < coverage_density <= 1.0:
        raise InvalidInputError(f"coverage_density must be in (0, 1], got {coverage_density}")
    if not 0.0 < p_normal <= 1.0:
        raise InvalidInputError(f"p_normal must be in (0, 1], got {p_normal}")
    rng = np.random.default_rng(seed_stream(seed, "coverage"))
    mask = rng.random((n_sensors, n_targets)) < coverage_density
    covers = tuple((frozenset(), frozenset(np.flatnonzero(row).tolist())) for row in mask)
    prior = IndependentPrior.bernoulli([p_normal] * n_sensors)
    return make_instance(
        prior, CoverageObjective(n_targets, covers), name=f"coverage-n{n_sensors}-m{n_targets}-s{seed}"
    )


def random_edges(n: int, edge_prob: float, max_weight: float, rng: np.random.Generator):
    edges = []
    for u in range(n):
        for v in range(u + 1, n):
            if rng.random() < edge_prob:
                edges.append((u, v, round(float(rng.uniform(0.5, max_weight)), 3)))
    return edges


def generate_cut(
    n: int,
    edge_prob: float = 0.6,
    max_weight: float = 2.0,
    p_state: float = 0.5,
    seed: int = 0,
) -> Instance:
    if n < 2:
        raise InvalidInputError("a cut instance needs at least two vertices")
    if not 0.0 < edge_prob <= 1.0:
        raise InvalidInputError(f"edge_prob must be in (0, 1], got {edge_prob}")
    if max_weight < 0.5:
        raise InvalidInputError("max_weight must be at least 0.5")
    rng = np.random.default_rng(seed_stream(seed, "cut"))
    edges = random_edges(n, edge_prob, max_weight, rng)
    if not edges:
        edges = [(0, 1, 1.0)]
    return cut_instance(n, edges, p_state, name=f"cut-n{n}-s{seed}")


def cut_instance(n: int, edges, p_state: float = 0.5, name: str = "cut") -> Instance:
    prior = IndependentPrior.bernoulli([p_state] * n)
    return make_instance(prior, CutObjective(n, tuple(edges)), name=name)


def generate_mixed(
    n: int,
    n_targets: int,
    coverage_density: float = 0.5,
    p_normal: float = 0.7,
    edge_prob: float = 0.6,
    max_weight: float = 2.0,
    seed: int = 0,
) -> Instance:
    """Coverage plus a cut term: adaptive submodular, not monotone."""
    cov = generate_coverage(n, n_targets, coverage_density, p_normal, seed)
    rng = np.random.default_rng(seed_stream(seed, "mixed-cut"))
    edges = random_edges(n, edge_prob, max_weight, rng) or [(0, 1, 1.0)]
    obj = SumObjective((cov.objective, CutObjective(n, tuple(edges))))
    return make_instance(cov.prior, obj, name=f"mixed-n{n}-m{n_targets}-s{seed}")


def random_partition_matroid(n: int, n_blocks: int, total_limit: int, seed: int) -> PartitionMatroid:
    """Shuffle the items into ``n_blocks`` non-empty blocks and spread ``total_limit`` picks."""
    if not 1 <= n_blocks <= n:
        raise InvalidInputError(f"need 1 <= n_blocks <= n, got {n_blocks}")
    if not 0 <= total_limit <= n:
        raise InvalidInputError(f"total_limit must be in [0, {n}]")
    rng = np.random.default_rng(seed_stream(seed, "matroid"))
    order = rng.permutation(n).tolist()
    cuts = sorted(rng.choice(np.arange(1, n), size=n_blocks - 1, replace=False).tolist()) if n_blocks > 1 else []
    blocks = [sorted(order[a:b]) for a, b in zip([0] + cuts, cuts + [n])]
    limits = [0] * n_blocks
    for _ in range(total_limit):
        open_blocks = [i for i in range(n_blocks) if limits[i] < len(blocks[i])]
        limits[int(rng.choice(open_blocks))] += 1
    return PartitionMatroid(tuple(tuple(b) for b in blocks), tuple(limits))


# ---------------------------------------------------------------------------
# instance files


class InstanceFileError(InvalidInputError):
    """Parse or validation failure in an instance file; the message names the location."""


def _require(doc: Mapping, key: str, where: str):
    if not isinstance(doc, Mapping) or key not in doc:
        raise InstanceFileError(f"{where}: missing field '{key}'")
    return doc[key]


def _objective_from_spec(spec, n: int, where: str) -> Objective:
    kind = _require(spec, "type", where)
    try:
        if kind == "coverage":
            covers = _require(spec, "covers", where)
            if len(covers) != n:
                raise InstanceFileError(f"{where}.covers: expected {n} items, got {len(covers)}")
            return CoverageObjective(int(_require(spec, "targets", where)), tuple(tuple(s) for s in covers))
        if kind == "cut":
            edges = _require(spec, "edges", where)
            for i, edge in enumerate(edges):
                if len(edge) != 3:
                    raise InstanceFileError(f"{where}.edges[{i}]: expected [u, v, weight]")
            return CutObjective(n, tuple(tuple(e) for e in edges))
        if kind == "sum":
            parts = _require(spec, "parts", where)
            return SumObjective(
                tuple(_objective_from_spec(p, n, f"{where}.parts[{i}]") for i, p in enumerate(parts))
            )
    except InstanceFileError:
        raise
    except (InvalidInputError, TypeError, ValueError) as exc:
        raise InstanceFileError(f"{where}: {exc}") from exc
    raise InstanceFileError(f"{where}.type: unknown objective type {kind!r}")


def instance_from_dict(doc, source: str = "<instance>") -> Instance:
    if not isinstance(doc, Mapping):
        raise InstanceFileError(f"{source}: top level must be a mapping")
    version = _require(doc, "version", source)
    if version != 1:
        raise InstanceFileError(f"{source}: version: unsupported version {version!r}")
    n = _require(doc, "items", source)
    if not isinstance(n, int) or n < 1:
        raise InstanceFileError(f"{source}: items: must be a positive integer")
    states = _require(doc, "states", source)
    if not isinstance(states, list) or len(states) != n:
        raise InstanceFileError(f"{source}: states: expected a list of {n} per-item state lists")
    labels = []
    for e, row in enumerate(states):
        if not isinstance(row, list) or not row:
            raise InstanceFileError(f"{source}: states[{e}]: expected a non-empty list")
        labels.append(tuple(str(s.get("label", i)) if isinstance(s, Mapping) else str(s) for i, s in enumerate(row)))
    try:
        if "joint" in doc:
            rows = []
            for i, row in enumerate(doc["joint"]):
                rows.append((tuple(_require(row, "assignment", f"{source}: joint[{i}]")),
                             float(_require(row, "probability", f"{source}: joint[{i}]"))))
            prior: Prior = JointPrior(tuple(len(r) for r in labels), tuple(rows))
        else:
            probs = []
            for e, row in enumerate(states):
                probs.append(tuple(float(_require(s, "probability", f"{source}: states[{e}][{i}]"))
                                   for i, s in enumerate(row)))
            prior = IndependentPrior(tuple(probs))
    except InstanceFileError:
        raise
    except (InvalidInputError, TypeError, ValueError) as exc:
        raise InstanceFileError(f"{source}: prior: {exc}") from exc
    objective = _objective_from_spec(_require(doc, "objective", source), n, f"{source}: objective")
    matroid = None
    if doc.get("matroid") is not None:
        mdoc = doc["matroid"]
        try:
            matroid = PartitionMatroid(
                tuple(tuple(b) for b in _require(mdoc, "blocks", f"{source}: matroid")),
                tuple(_require(mdoc, "limits", f"{source}: matroid")),
            )
            matroid.validate_for(n)
        except InstanceFileError:
            raise
        except (InvalidInputError, TypeError, ValueError) as exc:
            raise InstanceFileError(f"{source}: matroid: {exc}") from exc
    try:
        ground = GroundSet(n, tuple(len(r) for r in labels))
        return Instance(ground, prior, objective, matroid, name=str(doc.get("name", Path(source).stem)),
                        labels=tuple(labels))
    except InvalidInputError as exc:
        raise InstanceFileError(f"{source}: {exc}") from exc


def instance_to_dict(inst: Instance) -> dict:
    labels = inst.labels or tuple(
        tuple(str(o) for o in range(a)) for a in inst.ground.state_alphabets
    )
    doc: dict = {"version": 1, "name": inst.name, "items": inst.n}
    if isinstance(inst.prior, IndependentPrior):
        doc["states"] = [
            [{"label": lab, "probability": p} for lab, p in zip(labels[e], row)]
            for e, row in enumerate(inst.prior.probs)
        ]
    else:
        doc["states"] = [[{"label": lab} for lab in labels[e]] for e in range(inst.n)]
        doc["joint"] = [{"assignment": list(phi), "probability": p} for phi, p in inst.prior.table]
    doc["objective"] = inst.objective.to_spec()
    if inst.matroid is not None:
        doc["matroid"] = {
            "blocks": [list(b) for b in inst.matroid.blocks],
            "limits": list(inst.matroid.limits),
        }
    return doc


def load_instance(path) -> Instance:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InstanceFileError(f"{path}: cannot read file ({exc.strerror})") from exc
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        loc = f"{path}:{mark.line + 1}:{mark.column + 1}" if mark else str(path)
        problem = getattr(exc, "problem", None) or str(exc)
        raise InstanceFileError(f"{loc}: parse error: {problem}") from exc
    return instance_from_dict(doc, str(path))


def dump_instance(inst: Instance) -> str:
    return yaml.safe_dump(instance_to_dict(inst), sort_keys=False, default_flow_style=None)


def save_instance(inst: Instance, path) -> None:
    Path(path).write_text(dump_instance(inst), encoding="utf-8")
