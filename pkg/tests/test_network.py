"""Networks: validation, sampling, exact enumeration, event probabilities."""

import math
import random

import pytest

from pla import (
    Atom,
    Const,
    Signature,
    Structure,
    ValueSet,
    Variable,
    evaluate,
    parse_formula,
    validate,
)
from pla.network import (
    ArityMismatch,
    CycleDetected,
    PlaNetwork,
    ThetaUsesNonParent,
    TooManyWorlds,
    WorldSampler,
    exact_distribution,
    exact_event_probability,
    mc_event_probability,
    network_from_doc,
    network_to_doc,
    sample,
    structure_from_doc,
    structure_to_doc,
    world_count,
)

from conftest import X


def binom_sigma(n, p):
    return math.sqrt(n * p * (1.0 - p))


class TestValidate:
    def test_pr_ranks(self, pr_net):
        strat = validate(pr_net)
        assert strat.rank == {"P": 0, "R": 1}
        assert strat.strata == [["P"], ["P", "R"]]
        assert strat.aggregation_free

    def test_remark_not_aggregation_free(self, remark_net):
        strat = validate(remark_net)
        assert strat.rank == {"R": 0}
        assert not strat.aggregation_free

    def test_self_loop_is_a_cycle(self):
        net = PlaNetwork(Signature.of(("R", 1)), {"R": ("R",)}, {"R": Const(0.5)})
        with pytest.raises(CycleDetected):
            validate(net)

    def test_two_cycle(self):
        net = PlaNetwork(
            Signature.of(("A", 1), ("B", 1)),
            {"A": ("B",), "B": ("A",)},
            {"A": Const(0.5), "B": Const(0.5)},
        )
        with pytest.raises(CycleDetected):
            validate(net)

    def test_theta_must_use_parents_only(self):
        net = PlaNetwork(
            Signature.of(("R", 1)),
            {"R": ()},
            {"R": Atom("R", (Variable("x1"),))},
        )
        with pytest.raises(ThetaUsesNonParent):
            validate(net)

    def test_theta_variables_must_fit_arity(self):
        net = PlaNetwork(
            Signature.of(("P", 1), ("R", 1)),
            {"P": (), "R": ("P",)},
            {"P": Const(0.5), "R": Atom("P", (Variable("x2"),))},
        )
        with pytest.raises(ArityMismatch):
            validate(net)

    def test_doc_round_trip(self, pr_net):
        doc = network_to_doc(pr_net)
        again = network_from_doc(doc)
        assert network_to_doc(again) == doc


class TestSample:
    def test_bernoulli_root(self, pr_net):
        hits = sum(sample(pr_net, 1, seed).holds("P", (1,)) for seed in range(400))
        assert abs(hits - 200) <= 3 * binom_sigma(400, 0.5)

    def test_deterministic_given_seed(self, pr_net):
        a = sample(pr_net, 4, 123)
        b = sample(pr_net, 4, 123)
        c = sample(pr_net, 4, 124)
        assert a.key() == b.key()
        assert a.key() != c.key() or a.interp != {}  # different seed, almost surely different

    def test_conditional_frequency_reads_theta(self, pr_net):
        n, worlds = 20, 400
        sampler = WorldSampler(pr_net, n)
        rng = random.Random(7)
        given_p, r_and_p = 0, 0
        for _ in range(worlds):
            world = sampler.sample(rng)
            for e in range(1, n + 1):
                if world.holds("P", (e,)):
                    given_p += 1
                    r_and_p += world.holds("R", (e,))
        freq = r_and_p / given_p
        assert abs(freq - 0.9) <= 3 * binom_sigma(given_p, 0.9) / given_p

    def test_remark_marginal_is_one_over_n_minus_one(self, remark_net):
        n, worlds = 10, 3000
        sampler = WorldSampler(remark_net, n)
        rng = random.Random(11)
        hits = sum(sampler.sample(rng).holds("R", (1,)) for _ in range(worlds))
        target = 1.0 / (n - 1)
        assert abs(hits / worlds - target) <= 3 * binom_sigma(worlds, target) / worlds


class TestExactDistribution:
    def test_pr_world_table_at_n1(self, pr_net):
        dist = exact_distribution(pr_net, 1)
        probs = [w.probability for w in dist]
        # worlds in bitmask order: (noP,noR), (noP,R), (P,noR), (P,R)
        assert probs == pytest.approx([0.4, 0.1, 0.05, 0.45], abs=1e-9)

    def test_normalization(self, pr_net, binary_net):
        for n in (1, 2, 3):
            dist = exact_distribution(pr_net, n)
            assert abs(sum(w.probability for w in dist) - 1.0) <= 1e-9
        dist = exact_distribution(binary_net, 2)
        assert len(dist) == 16
        assert abs(sum(w.probability for w in dist) - 1.0) <= 1e-9

    def test_empty_signature_single_world(self):
        net = PlaNetwork(Signature(()), {}, {})
        dist = exact_distribution(net, 3)
        assert len(dist) == 1
        assert dist[0].probability == 1.0

    def test_world_cap(self, pr_net):
        assert world_count(pr_net, 3) == 64
        with pytest.raises(TooManyWorlds):
            exact_distribution(pr_net, 3, world_cap=63)


class TestEventProbabilities:
    def test_exact_atom_event(self, pr_net):
        phi = parse_formula("R(x)")
        p = exact_event_probability(pr_net, 1, phi, {X: 1}, ValueSet.point(1.0))
        assert p == pytest.approx(0.55, abs=1e-12)

    def test_full_value_set(self, pr_net):
        phi = parse_formula("R(x)")
        assert exact_event_probability(pr_net, 2, phi, {X: 1}, ValueSet.full()) == pytest.approx(1.0, abs=1e-12)

    def test_constant_formula(self, pr_net):
        assert exact_event_probability(
            pr_net, 1, Const(0.3), {}, ValueSet.point(0.3)
        ) == pytest.approx(1.0, abs=1e-12)

    def test_mc_matches_exact_within_three_cis(self, pr_net):
        phi = parse_formula("P(x) & R(x)")
        for n in (1, 2, 3):
            exact = exact_event_probability(pr_net, n, phi, {X: 1}, ValueSet.point(1.0))
            est, ci = mc_event_probability(
                pr_net, n, phi, {X: 1}, ValueSet.point(1.0), samples=4000, seed=n
            )
            assert abs(est - exact) <= 3 * max(ci, 1e-3)

    def test_mc_full_set_is_certain(self, pr_net):
        est, ci = mc_event_probability(
            pr_net, 2, parse_formula("R(x)"), {X: 1}, ValueSet.full(), samples=50, seed=1
        )
        assert est == 1.0
        assert ci == 0.0

    def test_mc_workers_shard(self, pr_net):
        phi = parse_formula("R(x)")
        est, _ = mc_event_probability(
            pr_net, 2, phi, {X: 1}, ValueSet.point(1.0), samples=2000, seed=5, workers=2
        )
        exact = exact_event_probability(pr_net, 2, phi, {X: 1}, ValueSet.point(1.0))
        assert abs(est - exact) <= 0.05

    def test_remark_max_event(self, remark_net):
        phi = parse_formula("max[R(x) : x : x = x]")
        n = 100
        est, ci = mc_event_probability(
            remark_net, n, phi, {}, ValueSet.point(1.0), samples=3000, seed=3
        )
        target = 1.0 - (1.0 - 1.0 / (n - 1)) ** n
        assert abs(est - target) <= 3 * max(ci, 1e-3)


class TestInvarianceProperties:
    def test_isomorphic_worlds_carry_equal_probability(self, pr_net, binary_net):
        rng = random.Random(19)
        for net, n in ((pr_net, 2), (pr_net, 3), (binary_net, 2)):
            dist = exact_distribution(net, n)
            by_key = {w.structure.key(): w.probability for w in dist}
            for _ in range(100):
                perm = list(range(1, n + 1))
                rng.shuffle(perm)
                mapping = {i + 1: perm[i] for i in range(n)}
                w = rng.choice(dist)
                image = w.structure.permuted(mapping)
                assert abs(by_key[image.key()] - w.probability) <= 1e-12

    def test_parametric_invariance(self, binary_net):
        phi = parse_formula("E(x, y)")
        x, y = Variable("x"), Variable("y")
        pairs_same_pattern = [((1, 2), (2, 3)), ((1, 2), (3, 1)), ((1, 1), (2, 2))]
        for (a1, a2), (b1, b2) in pairs_same_pattern:
            pa = exact_event_probability(binary_net, 3, phi, {x: a1, y: a2}, ValueSet.point(1.0))
            pb = exact_event_probability(binary_net, 3, phi, {x: b1, y: b2}, ValueSet.point(1.0))
            assert abs(pa - pb) <= 1e-12

    def test_conditional_probability_matches_theta(self, pr_net):
        # group sampled worlds by the rank-0 stratum and compare the
        # conditional frequency of R(1) with theta evaluated there
        n, worlds = 3, 8000
        sampler = WorldSampler(pr_net, n)
        rng = random.Random(23)
        groups = {}
        for _ in range(worlds):
            world = sampler.sample(rng)
            key = tuple(sorted(world.interp["P"]))
            total, hits = groups.get(key, (0, 0))
            groups[key] = (total + 1, hits + world.holds("R", (1,)))
        theta = pr_net.theta["R"]
        for key, (total, hits) in groups.items():
            if total < 200:
                continue
            lower = Structure(pr_net.signature, n, {"P": set(key), "R": set()})
            expected = evaluate(lower, theta, {Variable("x1"): 1})
            assert abs(hits / total - expected) <= 3 * binom_sigma(total, expected) / total

    def test_sampler_matches_enumerator(self, pr_net):
        n, draws = 2, 100_000
        dist = exact_distribution(pr_net, n)
        weights = {w.structure.key(): w.probability for w in dist}
        counts = dict.fromkeys(weights, 0)
        sampler = WorldSampler(pr_net, n)
        rng = random.Random(29)
        for _ in range(draws):
            counts[sampler.sample(rng).key()] += 1
        for key, p in weights.items():
            sigma = binom_sigma(draws, p)
            assert abs(counts[key] - draws * p) <= 3 * max(sigma, 1.0)


class TestValueSet:
    def test_parse_point_and_intervals(self):
        s = ValueSet.parse("0:0.2,0.8:1")
        assert s.contains(0.1) and s.contains(0.9) and not s.contains(0.5)
        assert ValueSet.parse("1").contains(1.0)
        assert not ValueSet.parse("1").contains(0.999)

    def test_str_round_trip(self):
        s = ValueSet.parse("0.25,0.5:0.75")
        assert ValueSet.parse(str(s)) == s


class TestStructureDocs:
    def test_round_trip(self, pr_net):
        world = sample(pr_net, 3, 77)
        doc = structure_to_doc(world)
        again = structure_from_doc(doc)
        assert again.key() == world.key()
        assert again.domain_size == 3
