"""Core logic: signatures, finite structures, formulas and their [0,1]-valued
semantics, complete atomic types, and folding of aggregation-free formulas
into basic probability formulas.

Truth values live in [0, 1].  The propositional connectives use the
Lukasiewicz semantics (min/max for and/or, ``min(1, 1 - a + b)`` for
implication), which agrees with the classical tables on {0, 1}.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Mapping, Optional, Sequence, Union

from .errors import PlaError


class EmptyAggregationRange(PlaError):
    """No bound tuple satisfies the equality constraint and the aggregation
    function declares no empty-input value."""


class NotAggregationFree(PlaError):
    """Operation requires a formula without aggregation nodes."""


# ---------------------------------------------------------------------------
# Signatures, structures, variables
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Signature:
    """A finite relational signature: named relation symbols with arity >= 1."""

    symbols: tuple[tuple[str, int], ...]

    def __post_init__(self):
        names = [name for name, _ in self.symbols]
        if len(set(names)) != len(names):
            raise ValueError("duplicate relation symbol names: %r" % (names,))
        for name, arity in self.symbols:
            if arity < 1:
                raise ValueError("arity of %s must be >= 1, got %d" % (name, arity))

    @classmethod
    def of(cls, *symbols: tuple[str, int]) -> "Signature":
        return cls(tuple(symbols))

    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.symbols)

    def arity(self, name: str) -> int:
        for sym, arity in self.symbols:
            if sym == name:
                return arity
        raise KeyError("unknown relation symbol %r" % name)

    def __contains__(self, name: str) -> bool:
        return any(sym == name for sym, _ in self.symbols)


EMPTY_SIGNATURE = Signature(())


@dataclass
class Structure:
    """A finite structure with domain [n] = {1, ..., n}; a possible world."""

    signature: Signature
    domain_size: int
    interp: dict[str, set[tuple[int, ...]]] = field(default_factory=dict)

    def __post_init__(self):
        if self.domain_size < 1:
            raise ValueError("domain size must be >= 1")
        for name in self.signature.names():
            self.interp.setdefault(name, set())

    def validate(self) -> None:
        for name, tuples in self.interp.items():
            arity = self.signature.arity(name)
            for tup in tuples:
                if len(tup) != arity:
                    raise ValueError("tuple %r has wrong arity for %s" % (tup, name))
                if any(not (1 <= e <= self.domain_size) for e in tup):
                    raise ValueError("tuple %r outside domain [%d]" % (tup, self.domain_size))

    def holds(self, name: str, args: tuple[int, ...]) -> bool:
        return args in self.interp[name]

    def permuted(self, perm: Mapping[int, int]) -> "Structure":
        """The isomorphic copy of this structure under a domain permutation."""
        interp = {
            name: {tuple(perm[e] for e in tup) for tup in tuples}
            for name, tuples in self.interp.items()
        }
        return Structure(self.signature, self.domain_size, interp)

    def key(self) -> tuple:
        """Canonical hashable form, e.g. for counting sampled worlds."""
        return tuple(
            (name, tuple(sorted(self.interp[name]))) for name in self.signature.names()
        )


@dataclass(frozen=True)
class Variable:
    name: str

    def __repr__(self):
        return "Variable(%r)" % self.name


Assignment = Mapping[Variable, int]


def _var_key(v: Variable) -> str:
    return v.name


# ---------------------------------------------------------------------------
# Equality types and atomic types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EqualityType:
    """A complete description of equalities among a tuple of variables,
    i.e. a partition of the variables into equality classes.

    Blocks are kept in canonical order: sorted by first occurrence of a
    member in ``variables``, members in ``variables`` order.
    """

    variables: tuple[Variable, ...]
    blocks: tuple[tuple[Variable, ...], ...]

    @classmethod
    def from_blocks(
        cls, variables: Sequence[Variable], blocks: Sequence[Sequence[Variable]]
    ) -> "EqualityType":
        variables = tuple(variables)
        if len(set(variables)) != len(variables):
            raise ValueError("variables must be distinct")
        seen: set[Variable] = set()
        for block in blocks:
            for v in block:
                if v in seen:
                    raise ValueError("variable %s in two blocks" % v.name)
                seen.add(v)
        if seen != set(variables):
            raise ValueError("blocks must partition the variables")
        pos = {v: i for i, v in enumerate(variables)}
        norm = tuple(
            tuple(sorted(block, key=pos.get))
            for block in sorted(blocks, key=lambda b: min(pos[v] for v in b))
        )
        return cls(variables, norm)

    @classmethod
    def all_distinct(cls, variables: Sequence[Variable]) -> "EqualityType":
        return cls.from_blocks(variables, [[v] for v in variables])

    @classmethod
    def all_partitions(cls, variables: Sequence[Variable]) -> list["EqualityType"]:
        """All complete equality types over ``variables`` in a deterministic
        order (restricted-growth strings, lexicographically)."""
        variables = tuple(variables)
        if not variables:
            return [cls.from_blocks((), ())]
        result = []

        def grow(i: int, blocks: list[list[Variable]]):
            if i == len(variables):
                result.append(cls.from_blocks(variables, [list(b) for b in blocks]))
                return
            v = variables[i]
            for b in blocks:
                b.append(v)
                grow(i + 1, blocks)
                b.pop()
            blocks.append([v])
            grow(i + 1, blocks)
            blocks.pop()

        grow(0, [])
        return result

    @cached_property
    def class_index(self) -> dict[Variable, int]:
        return {v: i for i, block in enumerate(self.blocks) for v in block}

    def same_class(self, u: Variable, v: Variable) -> bool:
        return self.class_index[u] == self.class_index[v]

    def satisfied_by(self, assignment: Assignment) -> bool:
        values = []
        for block in self.blocks:
            val = assignment[block[0]]
            if any(assignment[v] != val for v in block[1:]):
                return False
            values.append(val)
        return len(set(values)) == len(values)

    def restrict(self, variables: Sequence[Variable]) -> "EqualityType":
        keep = [v for v in self.variables if v in set(variables)]
        blocks = [
            [v for v in block if v in set(keep)]
            for block in self.blocks
        ]
        return EqualityType.from_blocks(keep, [b for b in blocks if b])

    def pattern(self) -> tuple[int, ...]:
        """Class index per variable; equal tuples mean isomorphic patterns."""
        return tuple(self.class_index[v] for v in self.variables)


def equality_pattern(values: Sequence[int]) -> tuple[int, ...]:
    """Canonical equality pattern of a concrete tuple (restricted-growth string)."""
    seen: dict[int, int] = {}
    out = []
    for v in values:
        out.append(seen.setdefault(v, len(seen)))
    return tuple(out)


Literal = tuple[str, tuple[int, ...]]  # relation name, tuple of class indices


@dataclass(frozen=True)
class AtomicType:
    """A consistent set of literals over a signature: an equality type plus,
    for relation slots (symbol + tuple of equality classes), a three-valued
    mark (positive / negative / undecided, the latter simply absent).
    """

    signature: Signature
    eq: EqualityType
    literals: tuple[tuple[Literal, bool], ...]

    @classmethod
    def make(
        cls,
        signature: Signature,
        eq: EqualityType,
        decided: Mapping[Literal, bool] | None = None,
    ) -> "AtomicType":
        decided = dict(decided or {})
        num_classes = len(eq.blocks)
        names = signature.names()
        for (name, ctuple), _ in decided.items():
            if name not in signature:
                raise ValueError("literal over unknown symbol %r" % name)
            if len(ctuple) != signature.arity(name):
                raise ValueError("literal arity mismatch for %r" % name)
            if any(not (0 <= c < num_classes) for c in ctuple):
                raise ValueError("literal class index out of range for %r" % name)
        order = {name: i for i, name in enumerate(names)}
        lits = tuple(
            sorted(decided.items(), key=lambda kv: (order[kv[0][0]], kv[0][1]))
        )
        return cls(signature, eq, lits)

    @classmethod
    def complete(
        cls,
        signature: Signature,
        variables: Sequence[Variable],
        blocks: Sequence[Sequence[Variable]],
        positive: Sequence[tuple[str, Sequence[Variable]]] = (),
    ) -> "AtomicType":
        """Build a complete type: the given relation literals are positive,
        every other slot negative."""
        eq = EqualityType.from_blocks(variables, blocks)
        decided: dict[Literal, bool] = {}
        for name, arity in signature.symbols:
            for ctuple in itertools.product(range(len(eq.blocks)), repeat=arity):
                decided[(name, ctuple)] = False
        for name, args in positive:
            ctuple = tuple(eq.class_index[v] for v in args)
            decided[(name, ctuple)] = True
        return cls.make(signature, eq, decided)

    @cached_property
    def literal_map(self) -> dict[Literal, bool]:
        return dict(self.literals)

    @property
    def variables(self) -> tuple[Variable, ...]:
        return self.eq.variables

    def slot_count(self) -> int:
        k = len(self.eq.blocks)
        return sum(k ** arity for _, arity in self.signature.symbols)

    def is_complete(self) -> bool:
        return len(self.literals) == self.slot_count()

    def restrict(self, variables: Sequence[Variable]) -> "AtomicType":
        """All literals whose variables can be chosen inside ``variables``."""
        keep = set(variables)
        surviving = [i for i, b in enumerate(self.eq.blocks) if any(v in keep for v in b)]
        remap = {old: new for new, old in enumerate(surviving)}
        eq = self.eq.restrict(variables)
        decided = {
            (name, tuple(remap[c] for c in ctuple)): sign
            for (name, ctuple), sign in self.literals
            if all(c in remap for c in ctuple)
        }
        return AtomicType.make(self.signature, eq, decided)

    def realized_by(self, structure: Structure, assignment: Assignment) -> bool:
        if not self.eq.satisfied_by(assignment):
            return False
        values = [assignment[block[0]] for block in self.eq.blocks]
        for (name, ctuple), sign in self.literals:
            args = tuple(values[c] for c in ctuple)
            if (args in structure.interp[name]) != sign:
                return False
        return True

    def canonical_structure(self) -> tuple[Structure, dict[Variable, int]]:
        """A smallest structure realizing this type: element i+1 per class i.

        Requires the type to be complete (undecided slots default to absent).
        """
        n = max(1, len(self.eq.blocks))
        interp: dict[str, set[tuple[int, ...]]] = {name: set() for name in self.signature.names()}
        for (name, ctuple), sign in self.literals:
            if sign:
                interp[name].add(tuple(c + 1 for c in ctuple))
        assignment = {v: self.eq.class_index[v] + 1 for v in self.eq.variables}
        return Structure(self.signature, n, interp), assignment

    def to_formula(self) -> "Formula":
        """The conjunction of one witness literal per decided fact."""
        parts: list[Formula] = []
        vs = self.eq.variables
        for i, u in enumerate(vs):
            for v in vs[i + 1 :]:
                if self.eq.same_class(u, v):
                    parts.append(Eq(u, v))
                else:
                    parts.append(Not(Eq(u, v)))
        reps = [block[0] for block in self.eq.blocks]
        for (name, ctuple), sign in self.literals:
            atom = Atom(name, tuple(reps[c] for c in ctuple))
            parts.append(atom if sign else Not(atom))
        if not parts:
            return Const(1.0)
        out = parts[0]
        for p in parts[1:]:
            out = And(out, p)
        return out


def realizes(structure: Structure, atype: AtomicType, assignment: Assignment) -> bool:
    """True iff every literal of the type holds under the assignment."""
    return atype.realized_by(structure, assignment)


def enumerate_complete_types(
    signature: Signature,
    variables: Sequence[Variable],
    constraint: Optional[AtomicType] = None,
) -> list[AtomicType]:
    """All complete atomic types over ``variables`` extending ``constraint``,
    enumerated deterministically (equality partition first, then literal
    sign vector)."""
    variables = tuple(variables)
    if constraint is not None:
        if not set(constraint.variables) <= set(variables):
            raise ValueError("constraint variables must be a subset")
    result = []
    for eq in EqualityType.all_partitions(variables):
        fixed: dict[Literal, bool] = {}
        if constraint is not None:
            if eq.restrict(constraint.variables) != constraint.eq:
                continue
            embed = {
                i: eq.class_index[block[0]]
                for i, block in enumerate(constraint.eq.blocks)
            }
            for (name, ctuple), sign in constraint.literals:
                fixed[(name, tuple(embed[c] for c in ctuple))] = sign
        slots = [
            (name, ctuple)
            for name, arity in signature.symbols
            for ctuple in itertools.product(range(len(eq.blocks)), repeat=arity)
        ]
        free = [s for s in slots if s not in fixed]
        for signs in itertools.product((False, True), repeat=len(free)):
            decided = dict(fixed)
            decided.update(zip(free, signs))
            result.append(AtomicType.make(signature, eq, decided))
    return result


# ---------------------------------------------------------------------------
# Formulas
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Const:
    value: float

    def __post_init__(self):
        if not (0.0 <= self.value <= 1.0):
            raise ValueError("constant %r outside [0, 1]" % (self.value,))


@dataclass(frozen=True)
class Eq:
    left: Variable
    right: Variable


@dataclass(frozen=True)
class Atom:
    symbol: str
    args: tuple[Variable, ...]


@dataclass(frozen=True)
class Not:
    sub: "Formula"


@dataclass(frozen=True)
class And:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Or:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Implies:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class WeightedMean:
    """weight*left + (1 - weight)*right, all three being formulas."""

    weight: "Formula"
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Agg:
    """Aggregation node: apply the named function to the tuples of body
    values collected over all bound tuples satisfying the equality type.

    ``eq_type`` is complete over the union of the node's free and bound
    variables; the free variables are exactly ``eq_type.variables`` minus
    ``bound``.
    """

    func: str
    bodies: tuple["Formula", ...]
    bound: tuple[Variable, ...]
    eq_type: EqualityType

    def __post_init__(self):
        if not self.bodies:
            raise ValueError("aggregation needs at least one body")
        if not self.bound:
            raise ValueError("aggregation must bind at least one variable")
        if len(set(self.bound)) != len(self.bound):
            raise ValueError("bound variables must be distinct")
        eq_vars = set(self.eq_type.variables)
        if not set(self.bound) <= eq_vars:
            raise ValueError("bound variables must appear in the equality type")
        for body in self.bodies:
            if not free_vars(body) <= eq_vars:
                raise ValueError("body free variables must appear in the equality type")
        # canonical variable order: free variables sorted by name, then the
        # bound variables in binder order
        bound = set(self.bound)
        canonical = tuple(
            sorted((v for v in self.eq_type.variables if v not in bound), key=_var_key)
        ) + tuple(self.bound)
        if canonical != self.eq_type.variables:
            object.__setattr__(
                self,
                "eq_type",
                EqualityType.from_blocks(canonical, self.eq_type.blocks),
            )

    @property
    def params(self) -> tuple[Variable, ...]:
        """The node's free variables, in equality-type order."""
        bound = set(self.bound)
        return tuple(v for v in self.eq_type.variables if v not in bound)


Formula = Union[Const, Eq, Atom, Not, And, Or, Implies, WeightedMean, Agg]


def free_vars(phi: Formula) -> frozenset[Variable]:
    if isinstance(phi, Const):
        return frozenset()
    if isinstance(phi, Eq):
        return frozenset((phi.left, phi.right))
    if isinstance(phi, Atom):
        return frozenset(phi.args)
    if isinstance(phi, Not):
        return free_vars(phi.sub)
    if isinstance(phi, (And, Or, Implies)):
        return free_vars(phi.left) | free_vars(phi.right)
    if isinstance(phi, WeightedMean):
        return free_vars(phi.weight) | free_vars(phi.left) | free_vars(phi.right)
    if isinstance(phi, Agg):
        return frozenset(phi.params)
    raise TypeError("not a formula: %r" % (phi,))


def subformulas(phi: Formula) -> Iterator[Formula]:
    yield phi
    if isinstance(phi, Not):
        yield from subformulas(phi.sub)
    elif isinstance(phi, (And, Or, Implies)):
        yield from subformulas(phi.left)
        yield from subformulas(phi.right)
    elif isinstance(phi, WeightedMean):
        yield from subformulas(phi.weight)
        yield from subformulas(phi.left)
        yield from subformulas(phi.right)
    elif isinstance(phi, Agg):
        for body in phi.bodies:
            yield from subformulas(body)


def relation_symbols(phi: Formula) -> set[str]:
    return {f.symbol for f in subformulas(phi) if isinstance(f, Atom)}


def has_aggregation(phi: Formula) -> bool:
    return any(isinstance(f, Agg) for f in subformulas(phi))


def function_rank(phi: Formula) -> int:
    """0 for aggregation-free formulas; an aggregation node adds the number
    of variables it binds on top of its deepest body."""
    if isinstance(phi, (Const, Eq, Atom)):
        return 0
    if isinstance(phi, Not):
        return function_rank(phi.sub)
    if isinstance(phi, (And, Or, Implies)):
        return max(function_rank(phi.left), function_rank(phi.right))
    if isinstance(phi, WeightedMean):
        return max(
            function_rank(phi.weight), function_rank(phi.left), function_rank(phi.right)
        )
    if isinstance(phi, Agg):
        return max(function_rank(b) for b in phi.bodies) + len(phi.bound)
    raise TypeError("not a formula: %r" % (phi,))


def minimal_signature(phi: Formula) -> Signature:
    """Signature consisting of the relation symbols occurring in the formula."""
    arities: dict[str, int] = {}
    for f in subformulas(phi):
        if isinstance(f, Atom):
            if f.symbol in arities and arities[f.symbol] != len(f.args):
                raise ValueError("symbol %r used with two arities" % f.symbol)
            arities[f.symbol] = len(f.args)
    return Signature(tuple(sorted(arities.items())))


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def satisfying_bound_tuples(
    eq_type: EqualityType,
    bound: Sequence[Variable],
    assignment: Assignment,
    n: int,
) -> Iterator[dict[Variable, int]]:
    """Assignments of the bound variables for which the combined assignment
    satisfies the equality type.

    Classes containing a free variable are pinned to its assigned value
    (the equality type may equate bound with free variables); the remaining
    classes range injectively over the unused domain elements.
    """
    bound_set = set(bound)
    pinned: list[tuple[int, int]] = []  # (class index, value)
    open_classes: list[int] = []
    for i, block in enumerate(eq_type.blocks):
        free_members = [v for v in block if v not in bound_set]
        if free_members:
            vals = {assignment[v] for v in free_members}
            if len(vals) != 1:
                return  # the free part already violates the equality type
            pinned.append((i, vals.pop()))
        else:
            open_classes.append(i)
    pinned_values = [val for _, val in pinned]
    if len(set(pinned_values)) != len(pinned_values):
        return  # two distinct classes forced to the same element
    available = [e for e in range(1, n + 1) if e not in set(pinned_values)]
    class_value = dict(pinned)
    for combo in itertools.permutations(available, len(open_classes)):
        for cls, val in zip(open_classes, combo):
            class_value[cls] = val
        yield {v: class_value[eq_type.class_index[v]] for v in bound}


def evaluate(
    structure: Structure,
    phi: Formula,
    assignment: Optional[Assignment] = None,
    registry=None,
) -> float:
    """The value of the formula in the structure under the assignment,
    per the [0,1]-valued semantics."""
    if registry is None:
        from . import aggregators

        registry = aggregators.DEFAULT_REGISTRY
    return _eval(structure, phi, dict(assignment or {}), registry)


def _eval(structure: Structure, phi: Formula, a: dict, registry) -> float:
    if isinstance(phi, Atom):
        args = tuple(a[v] for v in phi.args)
        return 1.0 if args in structure.interp[phi.symbol] else 0.0
    if isinstance(phi, Const):
        return phi.value
    if isinstance(phi, And):
        return min(_eval(structure, phi.left, a, registry), _eval(structure, phi.right, a, registry))
    if isinstance(phi, Or):
        return max(_eval(structure, phi.left, a, registry), _eval(structure, phi.right, a, registry))
    if isinstance(phi, Not):
        return 1.0 - _eval(structure, phi.sub, a, registry)
    if isinstance(phi, Implies):
        return min(
            1.0,
            1.0 - _eval(structure, phi.left, a, registry) + _eval(structure, phi.right, a, registry),
        )
    if isinstance(phi, Eq):
        return 1.0 if a[phi.left] == a[phi.right] else 0.0
    if isinstance(phi, WeightedMean):
        w = _eval(structure, phi.weight, a, registry)
        return w * _eval(structure, phi.left, a, registry) + (1.0 - w) * _eval(
            structure, phi.right, a, registry
        )
    if isinstance(phi, Agg):
        func = registry.get(phi.func)
        if len(phi.bodies) != func.arity:
            raise PlaError(
                "aggregation function %s takes %d sequences, got %d bodies"
                % (func.name, func.arity, len(phi.bodies))
            )
        seqs: list[list[float]] = [[] for _ in phi.bodies]
        saved = {v: a.get(v) for v in phi.bound}
        for combo in satisfying_bound_tuples(phi.eq_type, phi.bound, a, structure.domain_size):
            a.update(combo)
            for i, body in enumerate(phi.bodies):
                seqs[i].append(_eval(structure, body, a, registry))
        for v, old in saved.items():
            if old is None:
                a.pop(v, None)
            else:
                a[v] = old
        if not seqs[0]:
            if func.empty_value is not None:
                return func.empty_value
            raise EmptyAggregationRange(
                "no bound tuple satisfies the equality constraint of %s[...] "
                "at domain size %d" % (phi.func, structure.domain_size)
            )
        from . import aggregators

        return aggregators.apply(func, *seqs)
    raise TypeError("not a formula: %r" % (phi,))


# ---------------------------------------------------------------------------
# Basic probability formulas and folding
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BasicProbabilityFormula:
    """Conjunction of (complete type -> constant) implications; the
    aggregation-free normal form."""

    variables: tuple[Variable, ...]
    conjuncts: tuple[tuple[AtomicType, float], ...]

    def constants(self) -> tuple[float, ...]:
        seen: list[float] = []
        for _, c in self.conjuncts:
            if not any(abs(c - s) <= 1e-12 for s in seen):
                seen.append(c)
        return tuple(sorted(seen))

    def value_on(self, structure: Structure, assignment: Assignment) -> float:
        """Same value as evaluating ``to_formula()``: the minimum over
        conjuncts, an implication being its constant when the type is
        realized and 1 otherwise."""
        out = 1.0
        for atype, c in self.conjuncts:
            if c < out and atype.realized_by(structure, assignment):
                out = c
        return out

    def to_formula(self) -> Formula:
        if not self.conjuncts:
            return Const(1.0)
        parts = []
        for atype, c in self.conjuncts:
            antecedent = atype.to_formula()
            parts.append(Implies(antecedent, Const(c)))
        out = parts[0]
        for p in parts[1:]:
            out = And(out, p)
        return out


def fold_to_bpf(
    phi: Formula, signature: Optional[Signature] = None
) -> BasicProbabilityFormula:
    """Fold an aggregation-free formula into an exactly equivalent basic
    probability formula: one conjunct per complete atomic type over the free
    variables, carrying the constant value the formula takes on that type."""
    if has_aggregation(phi):
        raise NotAggregationFree("formula contains aggregation nodes")
    if signature is None:
        signature = minimal_signature(phi)
    variables = tuple(sorted(free_vars(phi), key=_var_key))
    conjuncts = []
    for atype in enumerate_complete_types(signature, variables):
        struct, assignment = atype.canonical_structure()
        value = evaluate(struct, phi, assignment)
        conjuncts.append((atype, value))
    return BasicProbabilityFormula(variables, tuple(conjuncts))
