"""Shared fixtures: golden networks and random formula/structure generators."""

import itertools
import random

import pytest

from pla import (
    Agg,
    And,
    Atom,
    Const,
    Eq,
    EqualityType,
    Implies,
    Not,
    Or,
    Signature,
    Structure,
    Variable,
    WeightedMean,
    free_vars,
)
from pla.network import network_from_doc

PR_DOC = {
    "relations": [
        {"name": "P", "arity": 1, "parents": [], "theta": "0.5"},
        {
            "name": "R",
            "arity": 1,
            "parents": ["P"],
            "theta": "(P(x1) -> 0.9) & (!P(x1) -> 0.2)",
        },
    ]
}

REMARK_DOC = {
    "relations": [
        {
            "name": "R",
            "arity": 1,
            "parents": [],
            "theta": "invlen[x1 = x1 & y = y : y : y != x1]",
        }
    ]
}

BINARY_DOC = {
    "relations": [
        {"name": "E", "arity": 2, "parents": [], "theta": "wm(x1 = x2; 0.9; 0.3)"}
    ]
}


@pytest.fixture
def pr_net():
    return network_from_doc(PR_DOC)


@pytest.fixture
def remark_net():
    return network_from_doc(REMARK_DOC)


@pytest.fixture
def binary_net():
    return network_from_doc(BINARY_DOC)


TEST_SIG = Signature.of(("P", 1), ("Q", 1), ("E", 2))

X, Y, Z = Variable("x"), Variable("y"), Variable("z")


def random_structure(rng: random.Random, sig: Signature, n: int) -> Structure:
    interp = {}
    for name, arity in sig.symbols:
        interp[name] = {
            args
            for args in itertools.product(range(1, n + 1), repeat=arity)
            if rng.random() < 0.5
        }
    return Structure(sig, n, interp)


def random_agg_free(rng: random.Random, sig: Signature, variables, depth: int):
    """Random aggregation-free formula with free variables among the pool."""
    if depth == 0 or rng.random() < 0.3:
        kind = rng.choice(("const", "atom", "eq"))
        if kind == "const":
            return Const(round(rng.uniform(0.0, 1.0), 3))
        if kind == "eq":
            return Eq(rng.choice(variables), rng.choice(variables))
        name, arity = rng.choice(sig.symbols)
        return Atom(name, tuple(rng.choice(variables) for _ in range(arity)))
    kind = rng.choice(("not", "and", "or", "implies", "wm"))
    if kind == "not":
        return Not(random_agg_free(rng, sig, variables, depth - 1))
    left = random_agg_free(rng, sig, variables, depth - 1)
    right = random_agg_free(rng, sig, variables, depth - 1)
    if kind == "and":
        return And(left, right)
    if kind == "or":
        return Or(left, right)
    if kind == "implies":
        return Implies(left, right)
    return WeightedMean(random_agg_free(rng, sig, variables, depth - 1), left, right)


def random_formula(rng: random.Random, sig: Signature, variables, depth: int,
                   agg_funcs=("am", "gm", "max", "min", "noisy-or", "invlen")):
    """Random formula that may contain aggregation nodes.  Aggregations bind
    one fresh variable over a body mentioning at most one outer variable, so
    the bound range is nonempty whenever the domain has >= 2 elements."""
    if depth > 0 and rng.random() < 0.25:
        bound = Variable("b%d" % rng.randrange(10 ** 6))
        outer = rng.choice(variables)
        body = random_formula(rng, sig, [outer, bound], depth - 1, agg_funcs)
        if bound not in free_vars(body):
            name, _ = rng.choice([s for s in sig.symbols if s[1] == 1])
            body = And(body, Or(Atom(name, (bound,)), Not(Atom(name, (bound,)))))
        pool = sorted(free_vars(body) - {bound}, key=lambda v: v.name)
        if pool and rng.random() < 0.5:
            eq = EqualityType.from_blocks(pool + [bound], [[v] for v in pool] + [[bound]])
        elif pool:
            eq = EqualityType.from_blocks(pool + [bound], [[pool[0], bound]] + [[v] for v in pool[1:]])
        else:
            eq = EqualityType.from_blocks([bound], [[bound]])
        return Agg(rng.choice(agg_funcs), (body,), (bound,), eq)
    return random_agg_free(rng, sig, variables, max(depth - 1, 0))
