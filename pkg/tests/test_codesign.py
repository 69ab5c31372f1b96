import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from robodesign.codesign import (
    Antichain,
    Block,
    Diagram,
    DivergenceError,
    Edge,
    FiniteSetPoset,
    FlatPoset,
    Mdpi,
    MultisetPoset,
    NumericPoset,
    OppositePoset,
    PosetError,
    ProductPoset,
    antichain_merge,
    check_monotone,
    compose_parallel,
    compose_series,
    identity_mdpi,
    tabulated_mdpi,
)

NUM = NumericPoset("num")
PAIR = ProductPoset("pair", (NUM, NUM))


class TestPosets:
    @given(st.floats(-10, 10), st.floats(-10, 10), st.floats(-10, 10))
    def test_numeric_partial_order(self, a, b, c):
        assert NUM.leq(a, a)
        if NUM.leq(a, b) and NUM.leq(b, a):
            assert a == b
        if NUM.leq(a, b) and NUM.leq(b, c):
            assert NUM.leq(a, c)

    @given(
        st.frozensets(st.integers(0, 5), max_size=4),
        st.frozensets(st.integers(0, 5), max_size=4),
        st.frozensets(st.integers(0, 5), max_size=4),
    )
    def test_set_inclusion_partial_order(self, a, b, c):
        p = FiniteSetPoset("sets")
        assert p.leq(a, a)
        if p.leq(a, b) and p.leq(b, a):
            assert a == b
        if p.leq(a, b) and p.leq(b, c):
            assert p.leq(a, c)

    def test_opposite_reverses(self):
        opp = OppositePoset("turn-radius", inner=NUM)
        assert opp.leq(5.0, 3.0)
        assert not opp.leq(3.0, 5.0)

    def test_multiset_order(self):
        p = MultisetPoset("pipes")
        assert p.leq(("cam",), ("cam", "cam"))
        assert p.leq(("cam", "lidar"), ("cam", "cam", "lidar"))
        assert not p.leq(("cam", "cam"), ("cam", "lidar"))

    def test_flat_with_bottom(self):
        p = FlatPoset("shape", bottom="none")
        assert p.leq("none", "a")
        assert p.leq("a", "a")
        assert not p.leq("a", "b")

    def test_numeric_snap(self):
        p = NumericPoset("speed", step=0.5)
        assert p.canon(1.26) == 1.5
        assert p.leq(1.26, 1.4)  # both snap to 1.5


class TestAntichainMerge:
    def test_dominated_point_removed(self):
        out = antichain_merge([((1, 2), ()), ((2, 1), ()), ((2, 2), ())], PAIR)
        assert out.point_set() == {(1, 2), (2, 1)}

    def test_singleton(self):
        out = antichain_merge([((3, 3), (("x", 1),))], PAIR)
        assert out.point_set() == {(3, 3)}

    def test_chain_collapses(self):
        out = antichain_merge([(1.0, ()), (2.0, ()), (3.0, ())], NUM)
        assert out.point_set() == {1.0}

    def test_idempotent(self):
        items = [((1, 2), ()), ((2, 1), ()), ((2, 2), ())]
        once = antichain_merge(items, PAIR)
        twice = antichain_merge([(p, once.impls_for(p)) for p in once.points], PAIR)
        assert once.point_set() == twice.point_set()

    def test_equal_points_merge_impls(self):
        out = antichain_merge([((1, 1), (("a", 0),)), ((1, 1), (("b", 1),))], PAIR)
        assert len(out.impls_for((1, 1))) == 2

    def test_antichain_validates(self):
        with pytest.raises(PosetError):
            Antichain(PAIR, ((1, 1), (2, 2)))


def computer_table():
    # functionality: compute; resource: price
    return tabulated_mdpi(
        "computer",
        NumericPoset("gflops"),
        NumericPoset("chf"),
        {1.0: 100.0, 2.0: 300.0},
    )


class TestCompose:
    def test_series_with_identity(self):
        d = computer_table()
        composed = compose_series(d, identity_mdpi("id", NumericPoset("chf")))
        assert composed.at(1.0).point_set() == d.at(1.0).point_set()

    def test_series_tabulated_ceiling(self):
        # h1(f) = {2}, table {1: 10, 2: 20, 3: 30} with ceiling lookup -> {20}
        first = tabulated_mdpi("a", NUM, NumericPoset("mid"), {2.0: 2.0})
        second = tabulated_mdpi(
            "b", NumericPoset("mid"), NumericPoset("out"), {1.0: 10.0, 2.0: 20.0, 3.0: 30.0}
        )
        composed = compose_series(first, second)
        assert composed.at(1.5).point_set() == {20.0}

    def test_series_infeasibility_propagates(self):
        first = tabulated_mdpi("a", NUM, NumericPoset("mid"), {2.0: 2.0})
        second = tabulated_mdpi("b", NumericPoset("mid"), NumericPoset("out"), {1.0: 10.0})
        composed = compose_series(first, second)
        assert composed.at(5.0).is_empty()  # first is already infeasible
        assert composed.at(1.0).is_empty()  # second cannot serve 2.0

    def test_series_poset_mismatch(self):
        with pytest.raises(PosetError):
            compose_series(computer_table(), computer_table())

    def test_parallel_products(self):
        d1 = tabulated_mdpi("a", NUM, NUM, {1.0: 10.0, 5.0: 12.0})
        d2 = tabulated_mdpi("b", NUM, NUM, {1.0: 7.0})
        par = compose_parallel(d1, d2)
        out = par.at((1.0, 1.0))
        assert out.point_set() == {(10.0, 7.0)}

    def test_parallel_infeasible_side(self):
        d1 = tabulated_mdpi("a", NUM, NUM, {1.0: 10.0})
        d2 = tabulated_mdpi("b", NUM, NUM, {1.0: 7.0})
        par = compose_parallel(d1, d2)
        assert par.at((2.0, 1.0)).is_empty()

    def test_parallel_merges_pairs(self):
        d1 = Mdpi(
            "two",
            NUM,
            PAIR,
            lambda f: antichain_merge([((1.0, 2.0), ()), ((2.0, 1.0), ())], PAIR),
        )
        d2 = tabulated_mdpi("one", NUM, NUM, {1.0: 5.0})
        par = compose_parallel(d1, d2)
        out = par.at((0.0, 1.0))
        assert out.point_set() == {((1.0, 2.0), 5.0), ((2.0, 1.0), 5.0)}


class TestMonotoneChecker:
    def test_tabulated_is_monotone(self):
        d = computer_table()
        pairs = [(0.5, 1.0), (1.0, 2.0), (0.0, 2.0)]
        assert check_monotone(d, pairs) == []

    def test_detects_violation(self):
        bad = Mdpi(
            "bad",
            NUM,
            NUM,
            lambda f: antichain_merge([(10.0 - f, ())], NUM),
        )
        assert check_monotone(bad, [(1.0, 2.0)]) == [(1.0, 2.0)]


def single_computing_diagram():
    gflops = NumericPoset("gflops")
    chf = NumericPoset("chf")
    catalog = [("none", 0.0, 0.0), ("A", 1.0, 100.0), ("B", 2.0, 300.0)]

    def h(f: tuple) -> Antichain:
        demand = f[0]
        items = [
            ((price,), ((("computer", name),),))
            for name, cap, price in catalog
            if cap >= demand
        ]
        return antichain_merge(items, ProductPoset("res", (chf,)))

    block = Block(
        name="computing",
        f_wires=("compute",),
        f_posets=(gflops,),
        r_wires=("price",),
        r_posets=(chf,),
        h=h,
    )
    return Diagram(
        blocks=[block],
        edges=[],
        objective=lambda asg: (asg.values[("computing", "price")],),
        objective_poset=ProductPoset("objective", (chf,)),
    )


class TestDiagramSingleBlock:
    def test_demand_one_gets_cheap_computer(self):
        d = single_computing_diagram()
        sol = d.solve_fix_fun_min_res({("computing", "compute"): 1.0})
        assert sol.antichain.point_set() == {(100.0,)}
        impls = sol.antichain.impls_for((100.0,))
        assert (("computer", "A"),) in impls

    def test_demand_between_catalog_steps(self):
        d = single_computing_diagram()
        sol = d.solve_fix_fun_min_res({("computing", "compute"): 1.5})
        assert sol.antichain.point_set() == {(300.0,)}

    def test_demand_above_catalog_infeasible(self):
        d = single_computing_diagram()
        sol = d.solve_fix_fun_min_res({("computing", "compute"): 99.0})
        assert sol.antichain.is_empty()

    def test_zero_demand_floor(self):
        d = single_computing_diagram()
        sol = d.solve_fix_fun_min_res({("computing", "compute"): 0.0})
        assert sol.antichain.point_set() == {(0.0,)}

    def test_fix_res_max_fun(self):
        d = single_computing_diagram()
        gflops = NumericPoset("gflops")
        candidates = [{("computing", "compute"): v} for v in (0.0, 1.0, 2.0)]
        out = d.solve_fix_res_max_fun(
            (150.0,), candidates, gflops, lambda dem: dem[("computing", "compute")]
        )
        assert out.point_set() == {1.0}
        out0 = d.solve_fix_res_max_fun(
            (0.0,), candidates, gflops, lambda dem: dem[("computing", "compute")]
        )
        assert out0.point_set() == {0.0}
        out_inf = d.solve_fix_res_max_fun(
            (math.inf,), candidates, gflops, lambda dem: dem[("computing", "compute")]
        )
        assert out_inf.point_set() == {2.0}


def looped_diagram(iteration_cap=10_000):
    """Two blocks with a feedback wire carrying a flat 'shape' value."""
    load_p = NumericPoset("load")
    chf = NumericPoset("chf")
    shape_p = FlatPoset("shape", bottom="none")
    catalog = [("small", 5.0, 1.0), ("big", 50.0, 3.0)]

    def consumer_h(f: tuple) -> Antichain:
        demand, shape = f
        load = demand + (0.0 if shape == "none" else 1.0)
        return antichain_merge(
            [((load,), ((("consumer", shape),),))], ProductPoset("r", (load_p,))
        )

    def provider_h(f: tuple) -> Antichain:
        (load,) = f
        items = [
            ((shape, price), ((("provider", shape),),))
            for shape, cap, price in catalog
            if cap >= load
        ]
        return antichain_merge(items, ProductPoset("r", (shape_p, chf)))

    consumer = Block(
        "consumer", ("demand", "shape"), (load_p, shape_p), ("load",), (load_p,), consumer_h
    )
    provider = Block(
        "provider", ("load",), (load_p,), ("shape", "price"), (shape_p, chf), provider_h
    )
    return Diagram(
        blocks=[consumer, provider],
        edges=[
            Edge(src=("consumer", "load"), dst=("provider", "load")),
            Edge(
                src=("provider", "shape"),
                dst=("consumer", "shape"),
                loop=True,
                loop_bottom="none",
            ),
        ],
        objective=lambda asg: (asg.values[("provider", "price")],),
        objective_poset=ProductPoset("objective", (chf,)),
        iteration_cap=iteration_cap,
    )


class TestDiagramLoop:
    def test_kleene_converges(self):
        d = looped_diagram()
        sol = d.solve_fix_fun_min_res({("consumer", "demand"): 2.0})
        # both shapes can carry load 3; the cheap one wins
        assert sol.antichain.point_set() == {(1.0,)}
        assert sol.iterations <= 5

    def test_kleene_needs_big_shape(self):
        d = looped_diagram()
        sol = d.solve_fix_fun_min_res({("consumer", "demand"): 30.0})
        assert sol.antichain.point_set() == {(3.0,)}

    def test_kleene_infeasible(self):
        d = looped_diagram()
        sol = d.solve_fix_fun_min_res({("consumer", "demand"): 500.0})
        assert sol.antichain.is_empty()

    def test_iteration_cap_raises(self):
        d = looped_diagram(iteration_cap=1)
        with pytest.raises(DivergenceError):
            d.solve_fix_fun_min_res({("consumer", "demand"): 2.0})

    def test_ascent_is_monotone_in_demand(self):
        d = looped_diagram()
        low = d.solve_fix_fun_min_res({("consumer", "demand"): 2.0})
        high = d.solve_fix_fun_min_res({("consumer", "demand"): 30.0})
        for p in low.antichain.points:
            assert any(p[0] <= q[0] for q in high.antichain.points)
