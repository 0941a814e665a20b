"""Networks of relation symbols over a DAG, one formula per symbol, and the
world distributions they induce: stratified sampling, exact enumeration of
all worlds with their probabilities, and Monte Carlo event estimates.

Each symbol R of arity k carries a formula theta_R over its parent symbols
with free variables among x1..xk; a world is generated stratum by stratum,
each tuple entering R independently with probability theta_R evaluated on
the lower strata.
"""

from __future__ import annotations

import itertools
import json
import math
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from . import parser as formula_parser
from .errors import PlaError
from .logic import (
    Formula,
    Signature,
    Structure,
    Variable,
    equality_pattern,
    evaluate,
    free_vars,
    has_aggregation,
    relation_symbols,
)

DEFAULT_WORLD_CAP = 2 ** 20


class CycleDetected(PlaError):
    pass


class ThetaUsesNonParent(PlaError):
    pass


class ArityMismatch(PlaError):
    pass


class TooManyWorlds(PlaError):
    pass


@dataclass
class PlaNetwork:
    """A DAG over relation symbols plus one formula per symbol."""

    signature: Signature
    parents: dict[str, tuple[str, ...]]
    theta: dict[str, Formula]

    def theta_variables(self, name: str) -> tuple[Variable, ...]:
        return tuple(Variable("x%d" % (i + 1)) for i in range(self.signature.arity(name)))


@dataclass
class Stratification:
    """Ranks and cumulative strata of a validated network."""

    rank: dict[str, int]
    strata: list[list[str]]  # strata[r] = symbols of rank <= r, signature order
    order: list[str]  # all symbols sorted by (rank, signature position)
    aggregation_free: bool


def validate(net: PlaNetwork) -> Stratification:
    """Check DAG-ness, parent discipline and formula variables; return the
    stratification and whether every formula is aggregation-free."""
    names = net.signature.names()
    for name in names:
        if name not in net.parents:
            raise PlaError("no parent list for symbol %r" % name)
        if name not in net.theta:
            raise PlaError("no formula for symbol %r" % name)
        for p in net.parents[name]:
            if p not in net.signature:
                raise PlaError("unknown parent %r of %r" % (p, name))
    # Kahn's algorithm for ranks; rank 0 iff no parents
    rank: dict[str, int] = {}
    remaining = set(names)
    while remaining:
        ready = [n for n in remaining if all(p in rank for p in net.parents[n])]
        if not ready:
            raise CycleDetected("cycle among symbols %s" % sorted(remaining))
        for n in ready:
            rank[n] = max((rank[p] + 1 for p in net.parents[n]), default=0)
            remaining.discard(n)
    aggregation_free = True
    for name in names:
        theta = net.theta[name]
        allowed_vars = set(net.theta_variables(name))
        if not free_vars(theta) <= allowed_vars:
            extra = sorted(v.name for v in free_vars(theta) - allowed_vars)
            raise ArityMismatch(
                "formula for %s (arity %d) has out-of-range free variables %s"
                % (name, net.signature.arity(name), extra)
            )
        used = relation_symbols(theta)
        if not used <= set(net.parents[name]):
            raise ThetaUsesNonParent(
                "formula for %s mentions non-parent symbols %s"
                % (name, sorted(used - set(net.parents[name])))
            )
        if has_aggregation(theta):
            aggregation_free = False
    max_rank = max(rank.values(), default=0)
    strata = [[n for n in names if rank[n] <= r] for r in range(max_rank + 1)]
    order = sorted(names, key=lambda n: (rank[n], names.index(n)))
    return Stratification(rank, strata, order, aggregation_free)


class WorldSampler:
    """Draws worlds from the induced distribution at a fixed domain size.

    Formulas of root symbols see no relations, so their value depends only
    on the equality pattern of the argument tuple; those values are cached
    across samples.
    """

    def __init__(self, net: PlaNetwork, n: int, registry=None):
        if n < 1:
            raise ValueError("domain size must be >= 1")
        self.net = net
        self.n = n
        self.registry = registry
        strat = validate(net)
        self._plan = []
        for name in strat.order:
            arity = net.signature.arity(name)
            tuples = list(itertools.product(range(1, n + 1), repeat=arity))
            self._plan.append((name, net.theta[name], net.theta_variables(name),
                               tuples, not net.parents[name]))
        self._root_cache: dict[tuple[str, tuple[int, ...]], float] = {}

    def _prob(self, structure, name, theta, variables, args, is_root) -> float:
        if is_root:
            key = (name, equality_pattern(args))
            cached = self._root_cache.get(key)
            if cached is not None:
                return cached
        assignment = dict(zip(variables, args))
        try:
            value = evaluate(structure, theta, assignment, self.registry)
        except PlaError as exc:
            raise PlaError(
                "evaluating formula of %s at %s with n=%d: %s" % (name, args, self.n, exc)
            ) from exc
        if is_root:
            self._root_cache[(name, equality_pattern(args))] = value
        return value

    def sample(self, rng: random.Random) -> Structure:
        structure = Structure(self.net.signature, self.n)
        for name, theta, variables, tuples, is_root in self._plan:
            chosen = structure.interp[name]
            for args in tuples:
                p = self._prob(structure, name, theta, variables, args, is_root)
                if rng.random() < p:
                    chosen.add(args)
        return structure


def sample(net: PlaNetwork, n: int, seed, registry=None) -> Structure:
    """One world drawn from the induced distribution; deterministic given
    the seed."""
    return WorldSampler(net, n, registry).sample(random.Random(seed))


@dataclass
class WorldWeight:
    structure: Structure
    probability: float


def world_count(net: PlaNetwork, n: int) -> int:
    count = 1
    for name, arity in net.signature.symbols:
        count *= 2 ** (n ** arity)
    return count


def exact_distribution(
    net: PlaNetwork,
    n: int,
    world_cap: int = DEFAULT_WORLD_CAP,
    registry=None,
) -> list[WorldWeight]:
    """Every world with its exact probability.  Worlds are enumerated by
    relation bitmask in signature order, tuples in lexicographic order."""
    strat = validate(net)
    total = world_count(net, n)
    if total > world_cap:
        raise TooManyWorlds("%d worlds exceed the cap %d" % (total, world_cap))
    names = net.signature.names()
    tuple_lists = {
        name: list(itertools.product(range(1, n + 1), repeat=net.signature.arity(name)))
        for name in names
    }
    theta_vars = {name: net.theta_variables(name) for name in names}
    out = []
    for masks in itertools.product(*[range(2 ** len(tuple_lists[name])) for name in names]):
        interp = {}
        for name, mask in zip(names, masks):
            tuples = tuple_lists[name]
            interp[name] = {tuples[i] for i in range(len(tuples)) if mask >> i & 1}
        structure = Structure(net.signature, n, interp)
        prob = 1.0
        for name in strat.order:  # theta only sees parents, i.e. lower strata
            theta = net.theta[name]
            variables = theta_vars[name]
            members = structure.interp[name]
            for args in tuple_lists[name]:
                v = evaluate(structure, theta, dict(zip(variables, args)), registry)
                prob *= v if args in members else 1.0 - v
        out.append(WorldWeight(structure, prob))
    return out


@dataclass(frozen=True)
class ValueSet:
    """Finite union of closed intervals within [0, 1]; points are singleton
    intervals."""

    intervals: tuple[tuple[float, float], ...]

    def __post_init__(self):
        for lo, hi in self.intervals:
            if lo > hi:
                raise ValueError("empty interval [%r, %r]" % (lo, hi))

    def contains(self, x: float) -> bool:
        return any(lo <= x <= hi for lo, hi in self.intervals)

    @classmethod
    def point(cls, value: float) -> "ValueSet":
        return cls(((value, value),))

    @classmethod
    def full(cls) -> "ValueSet":
        return cls(((0.0, 1.0),))

    @classmethod
    def parse(cls, text: str) -> "ValueSet":
        """Comma-separated points or lo:hi intervals, e.g. ``1`` or ``0:0.2,0.8:1``."""
        intervals = []
        for chunk in text.split(","):
            chunk = chunk.strip()
            if ":" in chunk:
                lo, hi = chunk.split(":", 1)
                intervals.append((float(lo), float(hi)))
            else:
                intervals.append((float(chunk), float(chunk)))
        return cls(tuple(intervals))

    def __str__(self):
        parts = []
        for lo, hi in self.intervals:
            parts.append(repr(lo) if lo == hi else "%r:%r" % (lo, hi))
        return ",".join(parts)


def exact_event_probability(
    net: PlaNetwork,
    n: int,
    phi: Formula,
    assignment=None,
    value_set: ValueSet = None,
    world_cap: int = DEFAULT_WORLD_CAP,
    registry=None,
) -> float:
    """Probability, under the exact world distribution, that the formula's
    value lands in the value set."""
    if value_set is None:
        value_set = ValueSet.full()
    total = 0.0
    for ww in exact_distribution(net, n, world_cap, registry):
        if value_set.contains(evaluate(ww.structure, phi, assignment, registry)):
            total += ww.probability
    return total


def _ci_halfwidth(p_hat: float, samples: int) -> float:
    return 1.96 * math.sqrt(p_hat * (1.0 - p_hat) / samples)


def _mc_count(net, n, phi, assignment, value_set, samples, seed, registry) -> int:
    sampler = WorldSampler(net, n, registry)
    rng = random.Random(seed)
    hits = 0
    for _ in range(samples):
        world = sampler.sample(rng)
        if value_set.contains(evaluate(world, phi, assignment, registry)):
            hits += 1
    return hits


def mc_event_probability(
    net: PlaNetwork,
    n: int,
    phi: Formula,
    assignment=None,
    value_set: ValueSet = None,
    samples: int = 1000,
    seed=0,
    workers: int = 1,
    registry=None,
) -> tuple[float, float]:
    """Monte Carlo estimate of the event probability and the half-width of
    its 95% normal confidence interval.  Deterministic given the seed when
    run with one worker."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if value_set is None:
        value_set = ValueSet.full()
    if workers <= 1:
        hits = _mc_count(net, n, phi, assignment, value_set, samples, seed, registry)
    else:
        chunks = [samples // workers] * workers
        for i in range(samples - sum(chunks)):
            chunks[i] += 1
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(_mc_count, net, n, phi, assignment, value_set,
                            chunk, seed + 0x9E3779B9 * (i + 1), registry)
                for i, chunk in enumerate(chunks) if chunk
            ]
            hits = sum(f.result() for f in futures)
    p_hat = hits / samples
    return p_hat, _ci_halfwidth(p_hat, samples)


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------


def network_from_doc(doc: dict, registry=None) -> PlaNetwork:
    """Build a network from its document form: a list of relations, each
    with name, arity, parents and formula text (free variables x1..xk)."""
    relations = doc.get("relations")
    if not isinstance(relations, list):
        raise PlaError("network document needs a 'relations' list")
    symbols = []
    parents = {}
    theta = {}
    for rel in relations:
        name, arity = rel["name"], int(rel["arity"])
        symbols.append((name, arity))
        parents[name] = tuple(rel.get("parents", ()))
        reg = registry
        if reg is None:
            from . import aggregators

            reg = aggregators.DEFAULT_REGISTRY
        theta[name] = formula_parser.parse_formula(rel["theta"], reg)
    return PlaNetwork(Signature(tuple(symbols)), parents, theta)


def network_to_doc(net: PlaNetwork) -> dict:
    return {
        "relations": [
            {
                "name": name,
                "arity": arity,
                "parents": list(net.parents[name]),
                "theta": formula_parser.format_formula(net.theta[name]),
            }
            for name, arity in net.signature.symbols
        ]
    }


def load_network(path: str, registry=None) -> PlaNetwork:
    with open(path) as handle:
        return network_from_doc(json.load(handle), registry)


def structure_to_doc(structure: Structure) -> dict:
    return {
        "domain_size": structure.domain_size,
        "relations": [
            {
                "name": name,
                "arity": arity,
                "tuples": sorted(list(t) for t in structure.interp[name]),
            }
            for name, arity in structure.signature.symbols
        ],
    }


def structure_from_doc(doc: dict) -> Structure:
    symbols = tuple((rel["name"], int(rel["arity"])) for rel in doc["relations"])
    interp = {
        rel["name"]: {tuple(t) for t in rel["tuples"]} for rel in doc["relations"]
    }
    structure = Structure(Signature(symbols), int(doc["domain_size"]), interp)
    structure.validate()
    return structure


def load_structure(path: str) -> Structure:
    with open(path) as handle:
        return structure_from_doc(json.load(handle))
