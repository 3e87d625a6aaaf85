"""Expression-tree GP: evaluation, operators, selection, canonical form."""

import math
import random

import pytest

from coevomarket.lob import ASK, BID, PriceBounds
from coevomarket.stgp import (EvalContext, GenParams, Individual, Population,
                              canonicalize, crossover, eval_tree, format_tree,
                              initial_population, iter_paths, parse_tree,
                              point_mutate, quote_from_tree, random_tree,
                              select_parent, subtree_at, tree_depth,
                              tree_size, validate_tree)

CALC_EXPR = ("A", ("M", 3, 2), ("D", 10, ("S", 5, 3)))
SEED_GENOME = ("S", ("S", "Pbest", 1), "LIMIT")
BLOAT_CHAIN_TEXT = "(S,(S,(S,(S,(S,(S,(S,(S,(S,(S,Pbest,1),7),7),1),1),7),1),1),7),1)"


def _ctx(best_same=None, limit=100, fallback=None):
    return EvalContext(best_same=best_same, limit=limit,
                       bounds=PriceBounds(1, 500),
                       best_same_fallback=fallback)


# --- parsing and printing ---

def test_parse_print_round_trip_on_assorted_literals():
    for text in ("(A,(M,3,2),(D,10,(S,5,3)))",
                 "(S,(S,Pbest,1),LIMIT)",
                 BLOAT_CHAIN_TEXT,
                 "Pbest", "LIMIT", "7", "-3", "2.5"):
        assert format_tree(parse_tree(text)) == text


def test_parse_tolerates_whitespace():
    assert parse_tree("( S , ( S , Pbest , 1 ) , LIMIT )") == SEED_GENOME


def test_parse_print_round_trip_on_random_trees():
    rng = random.Random(2024)
    for _ in range(300):
        t = random_tree(rng, max_depth=6)
        assert parse_tree(format_tree(t)) == t


@pytest.mark.parametrize("text", [
    "(Q,1,2)", "(A,1)", "(A,1,2,3)", "(A,1,", "A,1,2)", "(A,1,2))",
    "(A,foo,2)", "()", "", "(S,(S,Pbest,1),LIMIT)x",
])
def test_parse_rejects_malformed_genomes(text):
    with pytest.raises(ValueError):
        parse_tree(text)


def test_validate_tree_checks_structure_and_depth():
    validate_tree(SEED_GENOME)
    validate_tree(parse_tree(BLOAT_CHAIN_TEXT))  # deep genomes parse fine
    with pytest.raises(ValueError):
        validate_tree(("A", 1))
    with pytest.raises(ValueError):
        validate_tree(("A", "nope", 2))
    with pytest.raises(ValueError):
        validate_tree(parse_tree(BLOAT_CHAIN_TEXT), max_depth=8)


def test_tree_measures():
    assert tree_depth(SEED_GENOME) == 3
    assert tree_size(SEED_GENOME) == 5
    assert tree_depth("Pbest") == 1
    assert tree_size(7) == 1


# --- evaluation ---

def test_eval_mixed_arithmetic_expression():
    assert eval_tree(CALC_EXPR, _ctx()) == 11


def test_protected_division_by_zero_yields_one():
    assert eval_tree(("D", 5, 0), _ctx()) == 1
    assert eval_tree(("D", 5, ("S", 3, 3)), _ctx()) == 1
    assert eval_tree(("D", 0, 0), _ctx()) == 1


def test_eval_reads_terminals_from_context():
    assert eval_tree(("S", ("S", "Pbest", 1), 7), _ctx(best_same=100)) == 92
    assert eval_tree("LIMIT", _ctx(limit=42)) == 42
    assert eval_tree("Pbest", _ctx(best_same=None, limit=60)) == 60
    assert eval_tree("Pbest", _ctx(best_same=None, fallback=1)) == 1


def test_eval_is_total_on_pathological_trees():
    # integer division whose float result overflows saturates to infinity
    assert eval_tree(("D", ("M", 10 ** 200, 10 ** 200), 7), _ctx()) == math.inf
    assert eval_tree(("D", ("M", 10 ** 200, 10 ** 200), -7), _ctx()) == -math.inf
    # mixed int/float addition past float range saturates instead of raising
    assert eval_tree(("A", ("M", 10 ** 200, 10 ** 200), 1.5), _ctx()) == math.inf
    assert eval_tree(("S", 1.5, ("M", 10 ** 200, 10 ** 200)), _ctx()) == -math.inf


def test_quote_from_tree_seller_examples():
    ctx = _ctx(best_same=50, limit=40)
    assert quote_from_tree(("S", "Pbest", 1), ctx, ASK) == 49
    ctx = _ctx(best_same=60, limit=40)
    assert quote_from_tree(("S", "Pbest", 34), ctx, ASK) == 40  # clamped to limit


def test_quote_from_tree_buyer_clamps_to_limit_and_bounds():
    ctx = _ctx(limit=150)
    assert quote_from_tree(10 ** 9, ctx, BID) == 150
    assert quote_from_tree(-5, ctx, BID) == 1
    ctx = _ctx(limit=490)
    assert quote_from_tree(10 ** 9, ctx, ASK) == 500


def test_quote_from_tree_rounds_fractional_values():
    ctx = _ctx(limit=400)
    assert quote_from_tree(("D", 7, 2), ctx, BID) == 4  # 3.5 rounds to 4
    assert quote_from_tree(("D", "LIMIT", 3), ctx, BID) == 133


def test_quote_improvement_mode_offsets_from_limit():
    ctx = _ctx(best_same=100, limit=150)
    # v = Pbest - 1 - LIMIT = -51; improvement quote = 150 - 51 = 99
    assert quote_from_tree(SEED_GENOME, ctx, BID, mode="improvement") == 99
    with pytest.raises(ValueError):
        quote_from_tree(SEED_GENOME, ctx, BID, mode="nonsense")


def test_quote_nan_falls_back_to_limit():
    inf_tree = ("M", 10 ** 400, 10 ** 400)
    nan_tree = ("S", ("D", inf_tree, 1), ("D", inf_tree, 1))
    v = eval_tree(nan_tree, _ctx())
    assert math.isnan(v)
    assert quote_from_tree(nan_tree, _ctx(limit=120), BID) == 120


# --- genetic operators ---

def test_crossover_at_roots_swaps_whole_trees():
    class RootPicker:
        def randrange(self, n):
            return 0  # the root path is always first in pre-order

    c1, c2 = crossover(SEED_GENOME, CALC_EXPR, RootPicker())
    assert c1 == CALC_EXPR
    assert c2 == SEED_GENOME


def test_crossover_of_single_terminals_swaps_them():
    rng = random.Random(1)
    c1, c2 = crossover("Pbest", 7, rng)
    assert (c1, c2) == (7, "Pbest")


def test_crossover_closure_over_random_pairs():
    rng = random.Random(424242)
    for _ in range(10 ** 4):
        p1 = random_tree(rng, max_depth=rng.randint(1, 8))
        p2 = random_tree(rng, max_depth=rng.randint(1, 8))
        c1, c2 = crossover(p1, p2, rng, max_depth=8)
        validate_tree(c1, max_depth=8)
        validate_tree(c2, max_depth=8)


def test_crossover_depth_violations_fall_back_to_parent():
    deep = parse_tree(BLOAT_CHAIN_TEXT)  # depth 11
    rng = random.Random(77)
    for _ in range(50):
        c1, c2 = crossover(SEED_GENOME, SEED_GENOME, rng, max_depth=3)
        assert tree_depth(c1) <= 3 or c1 == SEED_GENOME
        assert tree_depth(c2) <= 3 or c2 == SEED_GENOME
    # grafting the deep tree into a small one must never exceed the cap
    for _ in range(50):
        c1, c2 = crossover(SEED_GENOME, deep, rng, max_depth=8)
        assert tree_depth(c1) <= 8 or c1 == SEED_GENOME
        assert tree_depth(c2) <= 11  # parent copy of the deep tree is legal


def test_point_mutate_zero_rate_is_identity():
    rng = random.Random(5)
    for _ in range(100):
        t = random_tree(rng, max_depth=6)
        assert point_mutate(t, rng, 0.0) == t


def test_point_mutate_rate_one_changes_every_mutable_node():
    rng = random.Random(6)
    t = ("S", ("S", "Pbest", 1), "LIMIT")
    m = point_mutate(t, rng, 1.0, const_pool=(1, 7))
    assert m[0] != "S"
    assert m[1][0] != "S"
    assert m[1][1] == "LIMIT"  # the only other variable
    assert m[1][2] == 7  # the only alternative constant
    assert m[2] == "Pbest"


def test_point_mutate_preserves_structure():
    rng = random.Random(7)
    for _ in range(10 ** 4):
        t = random_tree(rng, max_depth=5)
        m = point_mutate(t, rng, 0.3)
        assert tree_size(m) == tree_size(t)
        assert tree_depth(m) == tree_depth(t)
        validate_tree(m)


def test_point_mutate_constant_outside_pool_can_move_into_pool():
    rng = random.Random(8)
    m = point_mutate(34, rng, 1.0, const_pool=(1, 7))
    assert m in (1, 7)


def test_select_parent_rejects_empty_population():
    with pytest.raises(ValueError):
        select_parent(Population(individuals=[], generation=1),
                      random.Random(0))


def test_select_parent_equal_fitness_is_symmetric():
    pop = Population([Individual(genome=1, fitness=2.0, id="a"),
                      Individual(genome=2, fitness=2.0, id="b")])
    rng = random.Random(99)
    n = 10 ** 5
    hits = sum(select_parent(pop, rng).id == "a" for _ in range(n))
    assert abs(hits / n - 0.5) < 0.01


def test_select_parent_matches_shifted_fitness_ratios():
    # fitnesses [0, 10] with eps_sel = 0.1: P(a) = 0.1/10.2, P(b) = 10.1/10.2
    pop = Population([Individual(genome=1, fitness=0.0, id="a"),
                      Individual(genome=2, fitness=10.0, id="b")])
    rng = random.Random(123)
    n = 10 ** 6
    hits = sum(select_parent(pop, rng, eps_sel=0.1).id == "a"
               for _ in range(n))
    assert abs(hits / n - 0.1 / 10.2) < 0.01
    # all-zero fitness stays well-defined and uniform
    zero = Population([Individual(genome=i, fitness=0.0, id=str(i))
                       for i in range(4)])
    picks = {select_parent(zero, rng).id for _ in range(200)}
    assert picks == {"0", "1", "2", "3"}


# --- canonicalization ---

def test_canonicalize_collapses_long_subtraction_chain():
    assert canonicalize(parse_tree(BLOAT_CHAIN_TEXT)) == ("S", "Pbest", 34)
    assert format_tree(canonicalize(parse_tree(BLOAT_CHAIN_TEXT))) == "(S,Pbest,34)"


def test_canonicalize_folds_pure_constant_trees():
    assert canonicalize(CALC_EXPR) == 11
    assert canonicalize(("D", 7, 2)) == 3.5
    assert canonicalize(("A", ("M", 2, 3), ("S", 10, 4))) == 12


def test_canonicalize_terminal_fixed_points():
    assert canonicalize("LIMIT") == "LIMIT"
    assert canonicalize("Pbest") == "Pbest"
    assert canonicalize(7) == 7


def test_canonicalize_merges_signs():
    assert canonicalize(("A", ("S", "Pbest", 5), 2)) == ("S", "Pbest", 3)
    assert canonicalize(("S", ("A", "LIMIT", 5), 2)) == ("A", "LIMIT", 3)
    assert canonicalize(("S", ("A", "Pbest", 2), 2)) == "Pbest"


def test_canonicalize_leaves_non_chain_structure_alone():
    t = ("M", ("A", "Pbest", 1), 2)
    assert canonicalize(t) == t
    t = ("S", ("A", "Pbest", "Pbest"), 3)  # two variables: not collapsible
    assert canonicalize(t) == t
    t = ("S", 3, "Pbest")  # negatively signed variable stays as written
    assert canonicalize(t) == t


def test_canonicalize_float_chains_not_collapsed():
    # float constants are folded pairwise but never reassociated
    t = ("A", ("A", "Pbest", 0.5), 0.25)
    assert canonicalize(t) == t


def test_canonicalize_idempotent_on_random_trees():
    rng = random.Random(11)
    for _ in range(500):
        t = random_tree(rng, max_depth=7)
        c = canonicalize(t)
        assert canonicalize(c) == c


def test_canonicalize_preserves_semantics_exactly():
    # the load-bearing property: 10^3 random trees, 10^2 contexts each
    rng = random.Random(314)
    for _ in range(1000):
        t = random_tree(rng, max_depth=6)
        c = canonicalize(t)
        validate_tree(c)
        for _ in range(100):
            ctx = _ctx(best_same=rng.randint(1, 500) if rng.random() < 0.8
                       else None,
                       limit=rng.randint(1, 500))
            assert eval_tree(c, ctx) == eval_tree(t, ctx)


# --- generations ---

def _tiny_template():
    from coevomarket.harness import RosterEntry, Schedule, SessionConfig
    from coevomarket.traders import Strategy

    roster = tuple(
        [RosterEntry(f"G{i}", BID, Strategy("STGP")) for i in range(6)] +
        [RosterEntry(f"Z{i}", ASK, Strategy("ZIC")) for i in range(6)]
    )
    schedules = (Schedule(BID, 100, 200, "uniform", 50),
                 Schedule(ASK, 50, 150, "uniform", 50))
    return SessionConfig(duration=400, roster=roster, schedules=schedules,
                         seed=0, log_interval=0)


def test_run_generation_keeps_population_size_and_resets_fitness():
    from coevomarket.stgp import run_generation

    pop = initial_population(6, SEED_GENOME)
    template = _tiny_template()
    for _ in range(3):
        pop, stats = run_generation(pop, template, GenParams(), seed=5)
        assert len(pop.individuals) == 6
        assert all(ind.fitness == 0.0 for ind in pop.individuals)
        assert stats.mean_size > 0
    assert pop.generation == 4


def test_run_generation_without_variation_resamples_parent_genomes():
    from coevomarket.stgp import run_generation

    pop = initial_population(6, SEED_GENOME)
    # diversify deterministically so the resampling claim is non-trivial
    rng = random.Random(1)
    pop = Population([Individual(genome=random_tree(rng, 4), fitness=0.0,
                                 id=f"i{k}")
                      for k in range(6)])
    parents = {format_tree(ind.genome) for ind in pop.individuals}
    params = GenParams(p_x=0.0, p_mut=0.0)
    next_pop, _ = run_generation(pop, _tiny_template(), params, seed=9)
    assert all(format_tree(ind.genome) in parents
               for ind in next_pop.individuals)


def test_run_generation_is_deterministic():
    from coevomarket.stgp import run_generation

    results = []
    for _ in range(2):
        pop = initial_population(6, SEED_GENOME)
        pop, stats = run_generation(pop, _tiny_template(), GenParams(), seed=3)
        results.append((stats, [format_tree(i.genome)
                                for i in pop.individuals]))
    assert results[0] == results[1]


def test_run_generation_requires_matching_seat_count():
    from coevomarket.stgp import run_generation

    pop = initial_population(4, SEED_GENOME)
    with pytest.raises(ValueError):
        run_generation(pop, _tiny_template(), GenParams(), seed=0)


def test_run_experiment_yields_one_stats_row_per_generation():
    from coevomarket.stgp import run_experiment

    series = run_experiment(_tiny_template(), SEED_GENOME, 4, GenParams(),
                            seed=21)
    assert [s.gen for s in series] == [1, 2, 3, 4]
    assert all(s.elite is not None for s in series)
