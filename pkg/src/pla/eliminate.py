"""The compiler pass: rewrite a formula over an aggregation-free network
into an asymptotically equivalent basic probability formula, by computing
limit probabilities of complete types, the proportion tables they induce for
each aggregation node, and the aggregation function's limit on the resulting
support spectra.  Also the Monte Carlo harnesses that check convergence and
saturation empirically.
"""

from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass
from typing import Optional, Sequence

from . import aggregators
from .aggregators import SupportSpectrum
from .errors import PlaError
from .logic import (
    Agg,
    And,
    AtomicType,
    BasicProbabilityFormula,
    EqualityType,
    Formula,
    Implies,
    Not,
    Or,
    Variable,
    WeightedMean,
    enumerate_complete_types,
    equality_pattern,
    evaluate,
    fold_to_bpf,
    free_vars,
    has_aggregation,
    satisfying_bound_tuples,
)
from .network import PlaNetwork, ValueSet, WorldSampler, validate
from .parser import format_formula

COLLAPSE_TOL = 1e-12


class NetworkHasAggregation(PlaError):
    """Elimination requires every network formula to be aggregation-free."""


class IncompleteType(PlaError):
    pass


def dim_y(p_eq: EqualityType, xs: Sequence[Variable], ys: Sequence[Variable]) -> int:
    """Number of equality classes consisting purely of bound variables; the
    number of extensions of a parameter tuple grows like n to this power."""
    ys_set = set(ys)
    return sum(1 for block in p_eq.blocks if all(v in ys_set for v in block))


def limit_prob_type(net: PlaNetwork, p: AtomicType, registry=None) -> float:
    """Limit probability that a tuple with the type's equality pattern
    realizes the type; for aggregation-free networks this is an n-independent
    product of network formula values and their complements."""
    strat = validate(net)
    if not strat.aggregation_free:
        raise NetworkHasAggregation("network formulas contain aggregation functions")
    return _limit_prob_type(net, p, registry)


def _limit_prob_type(net: PlaNetwork, p: AtomicType, registry) -> float:
    if p.signature != net.signature:
        raise ValueError("type signature does not match the network signature")
    if not p.is_complete():
        raise IncompleteType("type leaves relation literals undecided")
    struct, _ = p.canonical_structure()
    prob = 1.0
    for (name, ctuple), sign in p.literals:
        theta = net.theta[name]
        variables = net.theta_variables(name)
        assignment = {v: c + 1 for v, c in zip(variables, ctuple)}
        v = evaluate(struct, theta, assignment, registry)
        prob *= v if sign else 1.0 - v
    return prob


# ---------------------------------------------------------------------------
# Alpha tables
# ---------------------------------------------------------------------------


@dataclass
class AlphaEntry:
    extension: AtomicType
    values: tuple[float, ...]  # one body value per aggregation slot
    beta: float
    alpha: Optional[float]  # None when the row's gamma is 0


@dataclass
class AlphaRow:
    base: AtomicType
    gamma: float
    entries: list[AlphaEntry]

    def sum_alpha(self) -> Optional[float]:
        if self.gamma <= 0.0:
            return None
        return math.fsum(e.alpha for e in self.entries)


@dataclass
class AlphaTable:
    xs: tuple[Variable, ...]
    ys: tuple[Variable, ...]
    dim: int
    rows: list[AlphaRow]

    def to_dict(self) -> dict:
        return {
            "params": [v.name for v in self.xs],
            "bound": [v.name for v in self.ys],
            "dim": self.dim,
            "rows": [
                {
                    "base": _type_text(row.base),
                    "gamma": row.gamma,
                    "sum_alpha": row.sum_alpha(),
                    "entries": [
                        {
                            "extension": _type_text(e.extension),
                            "values": list(e.values),
                            "beta": e.beta,
                            "alpha": e.alpha,
                        }
                        for e in row.entries
                    ],
                }
                for row in self.rows
            ],
        }


def _type_text(atype: AtomicType) -> str:
    return format_formula(atype.to_formula())


def alphas(
    net: PlaNetwork,
    xs: Sequence[Variable],
    ys: Sequence[Variable],
    p_eq: EqualityType,
    bodies: Sequence[BasicProbabilityFormula],
    registry=None,
) -> AlphaTable:
    """Enumerate the complete types extending the equality constraint,
    grouped by their restriction to the parameters; each extension carries
    its limit probability, its proportion alpha relative to the group, and
    the constant each body takes on it."""
    strat = validate(net)
    if not strat.aggregation_free:
        raise NetworkHasAggregation("network formulas contain aggregation functions")
    dim = dim_y(p_eq, xs, ys)
    if dim == 0:
        raise PlaError("degenerate aggregation (dimension 0) has no alpha table")
    universe = set(xs) | set(ys)
    for body in bodies:
        if not set(body.variables) <= universe:
            stray = sorted(v.name for v in set(body.variables) - universe)
            raise ValueError("body variables %s outside the aggregation" % stray)
    constraint = AtomicType.make(net.signature, p_eq, {})
    groups: dict[AtomicType, list[AtomicType]] = {}
    for p in enumerate_complete_types(net.signature, p_eq.variables, constraint):
        groups.setdefault(p.restrict(xs), []).append(p)
    rows = []
    for base, extensions in groups.items():
        gamma = _limit_prob_type(net, base, registry)
        entries = []
        for p in extensions:
            struct, assignment = p.canonical_structure()
            values = tuple(b.value_on(struct, assignment) for b in bodies)
            beta = _limit_prob_type(net, p, registry)
            alpha = beta / gamma if gamma > 0.0 else None
            entries.append(AlphaEntry(p, values, beta, alpha))
        rows.append(AlphaRow(base, gamma, entries))
    return AlphaTable(tuple(xs), tuple(ys), dim, rows)


def _row_spectra(row: AlphaRow, arity: int) -> tuple[SupportSpectrum, ...]:
    # zero-proportion extensions cannot occur in the limit and are dropped
    entries = [e for e in row.entries if e.alpha > 0.0]
    return tuple(
        SupportSpectrum(tuple((e.values[m], e.alpha) for e in entries)).merged()
        for m in range(arity)
    )


# ---------------------------------------------------------------------------
# The elimination pass
# ---------------------------------------------------------------------------


@dataclass
class AggNodeRecord:
    func: str
    params: tuple[Variable, ...]
    bound: tuple[Variable, ...]
    dim: int
    table: Optional[AlphaTable]
    limits: list[tuple[AtomicType, float]]
    warnings: list[str]

    def to_dict(self) -> dict:
        return {
            "function": self.func,
            "params": [v.name for v in self.params],
            "bound": [v.name for v in self.bound],
            "dim": self.dim,
            "table": self.table.to_dict() if self.table is not None else None,
            "limits": [
                {"type": _type_text(q), "value": d} for q, d in self.limits
            ],
            "warnings": self.warnings,
        }


@dataclass
class EliminationReport:
    input_formula: Formula
    output: BasicProbabilityFormula
    agg_nodes: list[AggNodeRecord]
    warnings: list[str]

    def to_dict(self) -> dict:
        return {
            "input": format_formula(self.input_formula),
            "output": format_formula(self.output.to_formula()),
            "output_conjuncts": [
                {"type": _type_text(t), "value": c} for t, c in self.output.conjuncts
            ],
            "aggregation_nodes": [r.to_dict() for r in self.agg_nodes],
            "warnings": self.warnings,
        }


def _luk_not(v):
    return 1.0 - v[0]


def _luk_and(v):
    return min(v[0], v[1])


def _luk_or(v):
    return max(v[0], v[1])


def _luk_implies(v):
    return min(1.0, 1.0 - v[0] + v[1])


def _luk_wm(v):
    return v[0] * v[1] + (1.0 - v[0]) * v[2]


def _combine(op, children: list[BasicProbabilityFormula], signature) -> BasicProbabilityFormula:
    """Fold a propositional connective over compiled children by per-type
    arithmetic on their constants."""
    variables = tuple(
        sorted(set().union(*(c.variables for c in children)), key=lambda v: v.name)
    )
    conjuncts = []
    for atype in enumerate_complete_types(signature, variables):
        struct, assignment = atype.canonical_structure()
        values = [c.value_on(struct, assignment) for c in children]
        conjuncts.append((atype, op(values)))
    return BasicProbabilityFormula(variables, tuple(conjuncts))


def eliminate(
    net: PlaNetwork, phi: Formula, registry=None
) -> tuple[BasicProbabilityFormula, EliminationReport]:
    """Rewrite the formula into an asymptotically equivalent basic
    probability formula with respect to the network's world distributions.

    Aggregation-free subformulas fold exactly; each aggregation node is
    replaced by one conjunct per parameter type, whose value is the
    function's limit over the node's support spectrum for that type.
    """
    if registry is None:
        registry = aggregators.DEFAULT_REGISTRY
    strat = validate(net)
    if not strat.aggregation_free:
        raise NetworkHasAggregation(
            "elimination requires aggregation-free network formulas"
        )
    sig = net.signature
    warnings: list[str] = []
    agg_nodes: list[AggNodeRecord] = []

    def compile_node(node: Formula) -> BasicProbabilityFormula:
        if not has_aggregation(node):
            return fold_to_bpf(node, sig)
        if isinstance(node, Not):
            return _combine(_luk_not, [compile_node(node.sub)], sig)
        if isinstance(node, And):
            return _combine(_luk_and, [compile_node(node.left), compile_node(node.right)], sig)
        if isinstance(node, Or):
            return _combine(_luk_or, [compile_node(node.left), compile_node(node.right)], sig)
        if isinstance(node, Implies):
            return _combine(_luk_implies, [compile_node(node.left), compile_node(node.right)], sig)
        if isinstance(node, WeightedMean):
            children = [compile_node(node.weight), compile_node(node.left), compile_node(node.right)]
            return _combine(_luk_wm, children, sig)
        if isinstance(node, Agg):
            return compile_agg(node)
        raise TypeError("not a formula: %r" % (node,))

    def compile_agg(node: Agg) -> BasicProbabilityFormula:
        func = registry.get(node.func)
        bodies = [compile_node(b) for b in node.bodies]
        if len(bodies) != func.arity:
            raise PlaError(
                "%s takes %d bodies, got %d" % (func.name, func.arity, len(bodies))
            )
        xs, ys, eq = node.params, node.bound, node.eq_type
        dim = dim_y(eq, xs, ys)
        node_warnings: list[str] = []
        conjuncts: list[tuple[AtomicType, float]] = []
        table = None
        if dim == 0:
            # every bound variable is equated with a parameter: the single
            # matching tuple is a renaming, so the function applies exactly
            # to length-1 value sequences
            q_eq = eq.restrict(xs)
            constraint = AtomicType.make(sig, q_eq, {})
            rename = {}
            for block in eq.blocks:
                anchor = next(v for v in block if v not in set(ys))
                for v in block:
                    rename[v] = anchor
            for q in enumerate_complete_types(sig, xs, constraint):
                struct, assignment = q.canonical_structure()
                full = dict(assignment)
                for y in ys:
                    full[y] = assignment[rename[y]]
                seqs = [[b.value_on(struct, full)] for b in bodies]
                conjuncts.append((q, aggregators.apply(func, *seqs)))
        else:
            if func.limit_method == "none":
                raise aggregators.NoLimitMethod(
                    "%s has no limit method; cannot eliminate it" % func.name
                )
            table = alphas(net, xs, ys, eq, bodies, registry)
            for row in table.rows:
                if row.gamma <= 0.0:
                    node_warnings.append(
                        "type %s has limit probability 0; its compiled value 1 "
                        "is arbitrary" % _type_text(row.base)
                    )
                    conjuncts.append((row.base, 1.0))
                    continue
                d = aggregators.limit(func, _row_spectra(row, func.arity))
                conjuncts.append((row.base, d))
            if func.limit_method == "numeric":
                node_warnings.append(
                    "%s limits estimated numerically (stabilized to %g)"
                    % (func.name, aggregators.NUMERIC_LIMIT_TOL)
                )
        # the conjuncts cover only types compatible with the node's equality
        # constraint; complete the case split so the output is exhaustive
        covered = {t for t, _ in conjuncts}
        for t in enumerate_complete_types(sig, xs):
            if t not in covered:
                conjuncts.append((t, 1.0))
                node_warnings.append(
                    "type %s is outside the aggregation's equality constraint "
                    "(empty range); compiled value 1 is arbitrary" % _type_text(t)
                )
        record = AggNodeRecord(
            func=node.func,
            params=tuple(xs),
            bound=tuple(ys),
            dim=dim,
            table=table,
            limits=list(conjuncts),
            warnings=node_warnings,
        )
        agg_nodes.append(record)
        warnings.extend(node_warnings)
        return BasicProbabilityFormula(tuple(xs), tuple(conjuncts))

    output = compile_node(phi)
    values = [c for _, c in output.conjuncts]
    if values and max(values) - min(values) <= COLLAPSE_TOL and len(values) > 1:
        top = AtomicType.make(sig, EqualityType.from_blocks((), ()), {})
        output = BasicProbabilityFormula(output.variables, ((top, values[0]),))
    report = EliminationReport(phi, output, agg_nodes, warnings)
    return output, report


# ---------------------------------------------------------------------------
# Convergence experiment
# ---------------------------------------------------------------------------


@dataclass
class ExperimentRow:
    n: int
    epsilon: float
    p_exceed: Optional[float]
    ci_exceed: Optional[float]
    near: list[tuple[float, float, float]]  # (d, p_near, ci)
    p_in_set: Optional[float]
    ci_in_set: Optional[float]


@dataclass
class ExperimentTable:
    rows: list[ExperimentRow]
    constants: tuple[float, ...]
    value_set: Optional[ValueSet]

    def header(self) -> list[str]:
        cols = ["n", "epsilon"]
        if self.rows and self.rows[0].p_exceed is not None:
            cols += ["p_exceed", "ci_exceed"]
            for i in range(len(self.constants)):
                cols += ["d_%d" % i, "p_near_%d" % i, "ci_%d" % i]
        if self.value_set is not None:
            cols += ["p_value_set", "ci_value_set"]
        return cols

    def to_csv(self) -> str:
        lines = [",".join(self.header())]
        for row in self.rows:
            cells = [str(row.n), repr(row.epsilon)]
            if row.p_exceed is not None:
                cells += [repr(row.p_exceed), repr(row.ci_exceed)]
                for d, p, ci in row.near:
                    cells += [repr(d), repr(p), repr(ci)]
            if self.value_set is not None:
                cells += [repr(row.p_in_set), repr(row.ci_in_set)]
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "constants": list(self.constants),
            "value_set": str(self.value_set) if self.value_set else None,
            "rows": [
                {
                    "n": r.n,
                    "epsilon": r.epsilon,
                    "p_exceed": r.p_exceed,
                    "ci_exceed": r.ci_exceed,
                    "near": [
                        {"d": d, "p_near": p, "ci": ci} for d, p, ci in r.near
                    ],
                    "p_in_set": r.p_in_set,
                    "ci_in_set": r.ci_in_set,
                }
                for r in self.rows
            ],
        }


def _ci(p_hat: float, samples: int) -> float:
    return 1.96 * math.sqrt(p_hat * (1.0 - p_hat) / samples)


def _experiment_counts(
    net, phi, psi, n, epsilon, samples, seed, value_set, registry,
    variables, constants,
) -> tuple[int, list[int], int]:
    """Hit counts for one shard: exceedance, near each constant, in the set."""
    k = len(variables)
    sampler = WorldSampler(net, n, registry)
    rng = random.Random(seed)
    canonical = dict(zip(variables, range(1, k + 1)))
    exceed_hits = 0
    near_hits = [0] * len(constants)
    set_hits = 0
    for _ in range(samples):
        world = sampler.sample(rng)
        value_at_canonical = None
        if psi is not None:
            worst_exceeds = False
            for args in itertools.product(range(1, n + 1), repeat=k):
                assignment = dict(zip(variables, args))
                value = evaluate(world, phi, assignment, registry)
                if value_at_canonical is None and args == tuple(range(1, k + 1)):
                    value_at_canonical = value
                if abs(value - psi.value_on(world, assignment)) > epsilon:
                    worst_exceeds = True
                    break
            exceed_hits += worst_exceeds
        if value_at_canonical is None:
            value_at_canonical = evaluate(world, phi, canonical, registry)
        for i, d in enumerate(constants):
            if abs(value_at_canonical - d) <= epsilon:
                near_hits[i] += 1
        if value_set is not None and value_set.contains(value_at_canonical):
            set_hits += 1
    return exceed_hits, near_hits, set_hits


def convergence_experiment(
    net: PlaNetwork,
    phi: Formula,
    psi: Optional[BasicProbabilityFormula] = None,
    n_grid: Sequence[int] = (),
    epsilon: float = 0.1,
    samples: int = 1000,
    seed=0,
    value_set: Optional[ValueSet] = None,
    registry=None,
    workers: int = 1,
) -> ExperimentTable:
    """Monte Carlo estimates, per domain size: the probability that some
    parameter tuple separates the formula from its compiled form by more
    than epsilon, the probability that the formula's value lands within
    epsilon of each compiled constant, and optionally the probability that
    it lands in a value set.  Output is seed-reproducible with one worker."""
    if psi is None and value_set is None:
        raise ValueError("need a compiled formula or a value set to test against")
    if samples < 1:
        raise ValueError("samples must be >= 1")
    variables = tuple(sorted(free_vars(phi), key=lambda v: v.name))
    k = len(variables)
    constants = psi.constants() if psi is not None else ()
    rows = []
    for n in n_grid:
        if n < k:
            raise ValueError("domain size %d cannot host %d distinct parameters" % (n, k))
        base_seed = seed * 1_000_003 + n
        if workers <= 1:
            exceed_hits, near_hits, set_hits = _experiment_counts(
                net, phi, psi, n, epsilon, samples, base_seed, value_set,
                registry, variables, constants,
            )
        else:
            chunks = [samples // workers] * workers
            for i in range(samples - sum(chunks)):
                chunks[i] += 1
            from concurrent.futures import ProcessPoolExecutor

            with ProcessPoolExecutor(max_workers=workers) as pool:
                futures = [
                    pool.submit(
                        _experiment_counts, net, phi, psi, n, epsilon, chunk,
                        base_seed + 0x9E3779B9 * (i + 1), value_set, registry,
                        variables, constants,
                    )
                    for i, chunk in enumerate(chunks) if chunk
                ]
                parts = [f.result() for f in futures]
            exceed_hits = sum(p[0] for p in parts)
            near_hits = [sum(p[1][i] for p in parts) for i in range(len(constants))]
            set_hits = sum(p[2] for p in parts)
        p_exceed = exceed_hits / samples if psi is not None else None
        rows.append(
            ExperimentRow(
                n=n,
                epsilon=epsilon,
                p_exceed=p_exceed,
                ci_exceed=_ci(p_exceed, samples) if psi is not None else None,
                near=[
                    (d, near_hits[i] / samples, _ci(near_hits[i] / samples, samples))
                    for i, d in enumerate(constants)
                ],
                p_in_set=set_hits / samples if value_set is not None else None,
                ci_in_set=_ci(set_hits / samples, samples) if value_set is not None else None,
            )
        )
    return ExperimentTable(rows, constants, value_set)


# ---------------------------------------------------------------------------
# Saturation diagnostic
# ---------------------------------------------------------------------------


@dataclass
class SaturationResult:
    frequency: float
    alpha: float
    dim: int
    lower: float
    upper: float
    samples: int

    def to_dict(self) -> dict:
        return {
            "frequency": self.frequency,
            "alpha": self.alpha,
            "dim": self.dim,
            "lower": self.lower,
            "upper": self.upper,
            "samples": self.samples,
        }


def saturation_diagnostic(
    net: PlaNetwork,
    p: AtomicType,
    q: AtomicType,
    delta: float,
    n: int,
    samples: int,
    seed,
    alpha: Optional[float] = None,
    registry=None,
) -> SaturationResult:
    """Empirical probability that a sampled world has, for every parameter
    tuple realizing the base type, an extension count within the band
    [alpha/(1+delta), alpha*(1+delta)] * n^dim."""
    strat = validate(net)
    if not strat.aggregation_free:
        raise NetworkHasAggregation("network formulas contain aggregation functions")
    xs = q.variables
    ys = tuple(v for v in p.variables if v not in set(xs))
    if p.restrict(xs) != q:
        raise ValueError("base type must be the restriction of the extension type")
    dim = dim_y(p.eq, xs, ys)
    if dim == 0:
        raise ValueError("extension type has dimension 0; nothing to saturate")
    if alpha is None:
        beta = _limit_prob_type(net, p, registry)
        gamma = _limit_prob_type(net, q, registry)
        if gamma <= 0.0:
            raise PlaError("base type has limit probability 0")
        alpha = beta / gamma
    lower = alpha / (1.0 + delta) * n ** dim
    upper = alpha * (1.0 + delta) * n ** dim

    q_pattern = q.eq.pattern()
    base_tuples = [
        args
        for args in itertools.product(range(1, n + 1), repeat=len(xs))
        if equality_pattern(args) == q_pattern
    ]
    blocks = p.eq.blocks
    xs_set = set(xs)
    visible = [any(v in xs_set for v in block) for block in blocks]
    extension_slots = [
        (name, ctuple, sign)
        for (name, ctuple), sign in p.literals
        if any(not visible[c] for c in ctuple)
    ]
    anchors = [block[0] for block in blocks]

    sampler = WorldSampler(net, n, registry)
    rng = random.Random(seed)
    hits = 0
    for _ in range(samples):
        world = sampler.sample(rng)
        interp = world.interp
        ok = True
        for args in base_tuples:
            assignment = dict(zip(xs, args))
            if not q.realized_by(world, assignment):
                continue
            count = 0
            for combo in satisfying_bound_tuples(p.eq, ys, assignment, n):
                full = assignment | combo
                class_values = [full[a] for a in anchors]
                if all(
                    (tuple(class_values[c] for c in ctuple) in interp[name]) == sign
                    for name, ctuple, sign in extension_slots
                ):
                    count += 1
            if not (lower <= count <= upper):
                ok = False
                break
        hits += ok
    return SaturationResult(hits / samples, alpha, dim, lower, upper, samples)
