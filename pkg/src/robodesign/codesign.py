"""Generic monotone co-design machinery: posets, antichains, MDPIs, diagrams.

A design block maps demanded functionality to the minimal antichain of
resources that can provide it, with concrete implementation choices attached
to every antichain point. Blocks compose in series and parallel, and diagrams
wire resource demands of one block to functionalities of another; feedback
edges are solved by Kleene ascent from the bottom of the loop wire.

All functionality axes used here are finite (numeric axes are snapped onto
declared grids), so fixed points are reached exactly, by set equality.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Callable, Hashable, Iterable, Mapping, Optional, Sequence

Point = Hashable
ImplTrace = tuple  # tuple of (block name, implementation id) pairs


class PosetError(ValueError):
    pass


class DivergenceError(RuntimeError):
    """Kleene ascent exceeded the iteration cap."""


@dataclass(frozen=True)
class Poset:
    """Base partial order; subclasses override leq and optionally canon."""

    name: str

    def leq(self, a: Point, b: Point) -> bool:
        raise NotImplementedError

    def canon(self, a: Point) -> Point:
        return a


@dataclass(frozen=True)
class NumericPoset(Poset):
    """Totally ordered floats, optionally snapped onto a grid step."""

    unit: str = ""
    step: Optional[float] = None

    def leq(self, a, b) -> bool:
        return self.canon(a) <= self.canon(b)

    def canon(self, a):
        if self.step is None:
            return float(a)
        return round(float(a) / self.step) * self.step


@dataclass(frozen=True)
class OppositePoset(Poset):
    """Order-reversed view of another poset (e.g. minimum turning radius)."""

    inner: Poset = None

    def leq(self, a, b) -> bool:
        return self.inner.leq(b, a)

    def canon(self, a):
        return self.inner.canon(a)


@dataclass(frozen=True)
class FiniteSetPoset(Poset):
    """Frozensets ordered by inclusion."""

    def leq(self, a, b) -> bool:
        return frozenset(a) <= frozenset(b)

    def canon(self, a):
        return frozenset(a)


@dataclass(frozen=True)
class MultisetPoset(Poset):
    """Sorted tuples with repetition, ordered by multiset inclusion."""

    def leq(self, a, b) -> bool:
        ca, cb = Counter(a), Counter(b)
        return all(cb[k] >= v for k, v in ca.items())

    def canon(self, a):
        return tuple(sorted(a))


@dataclass(frozen=True)
class FlatPoset(Poset):
    """Distinct elements are incomparable except for an optional bottom."""

    bottom: Optional[Point] = None

    def leq(self, a, b) -> bool:
        return a == b or a == self.bottom

    def canon(self, a):
        return a


@dataclass(frozen=True)
class ProductPoset(Poset):
    """Componentwise order on tuples."""

    components: tuple[Poset, ...] = ()

    def leq(self, a, b) -> bool:
        if len(a) != len(self.components) or len(b) != len(self.components):
            raise PosetError(f"{self.name}: tuple arity mismatch")
        return all(p.leq(x, y) for p, x, y in zip(self.components, a, b))

    def canon(self, a):
        return tuple(p.canon(x) for p, x in zip(self.components, a))


@dataclass
class Antichain:
    """Pairwise-incomparable points with implementation sets attached."""

    poset: Poset
    points: tuple[Point, ...]
    impls: dict[Point, tuple[ImplTrace, ...]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        pts = tuple(self.poset.canon(p) for p in self.points)
        for a, b in itertools.combinations(pts, 2):
            if self.poset.leq(a, b) or self.poset.leq(b, a):
                raise PosetError(f"antichain points are comparable: {a!r}, {b!r}")
        self.points = pts
        self.impls = {self.poset.canon(k): v for k, v in self.impls.items()}

    @classmethod
    def empty(cls, poset: Poset) -> "Antichain":
        return cls(poset, ())

    def is_empty(self) -> bool:
        return not self.points

    def point_set(self) -> frozenset:
        return frozenset(self.points)

    def impls_for(self, point: Point) -> tuple[ImplTrace, ...]:
        return self.impls.get(self.poset.canon(point), ())


def antichain_merge(
    items: Iterable[tuple[Point, tuple[ImplTrace, ...]]], poset: Poset
) -> Antichain:
    """Minimal elements of the given points; idempotent, implementations merged."""
    canon_items: list[tuple[Point, tuple[ImplTrace, ...]]] = []
    for point, impls in items:
        canon_items.append((poset.canon(point), tuple(impls)))

    merged: dict[Point, tuple[ImplTrace, ...]] = {}
    order: list[Point] = []
    for point, impls in canon_items:
        if point in merged:
            merged[point] = merged[point] + tuple(
                i for i in impls if i not in merged[point]
            )
        else:
            merged[point] = impls
            order.append(point)

    minimal: list[Point] = []
    for p in order:
        dominated = False
        for q in order:
            if q == p:
                continue
            if poset.leq(q, p) and not poset.leq(p, q):
                dominated = True
                break
        if not dominated:
            minimal.append(p)
    return Antichain(poset, tuple(minimal), {p: merged[p] for p in minimal})


@dataclass
class Mdpi:
    """A monotone design block: functionality -> minimal resource antichain."""

    name: str
    f_poset: Poset
    r_poset: Poset
    h: Callable[[Point], Antichain]
    _memo: dict = field(default_factory=dict)

    def at(self, f: Point) -> Antichain:
        key = self.f_poset.canon(f)
        if key not in self._memo:
            out = self.h(key)
            if out.poset != self.r_poset:
                raise PosetError(f"{self.name}: h returned antichain on the wrong poset")
            self._memo[key] = out
        return self._memo[key]


def tabulated_mdpi(
    name: str,
    f_poset: Poset,
    r_poset: Poset,
    table: Mapping[Point, Point],
) -> Mdpi:
    """Ceiling lookup over a finite table: h(f) uses the least tabulated key >= f."""

    keys = list(table.keys())

    def h(f: Point) -> Antichain:
        feasible = [k for k in keys if f_poset.leq(f, k)]
        if not feasible:
            return Antichain.empty(r_poset)
        items = [
            (table[k], ((name, k),))
            for k in feasible
        ]
        return antichain_merge(items, r_poset)

    return Mdpi(name, f_poset, r_poset, h)


def identity_mdpi(name: str, poset: Poset) -> Mdpi:
    def h(f: Point) -> Antichain:
        return Antichain(poset, (poset.canon(f),), {poset.canon(f): ((name, "id"),)})

    return Mdpi(name, poset, poset, h)


def compose_series(d1: Mdpi, d2: Mdpi) -> Mdpi:
    """Feed every minimal resource of d1 into d2 and re-minimize."""
    if d1.r_poset != d2.f_poset:
        raise PosetError(
            f"series mismatch: {d1.name} provides {d1.r_poset.name}, "
            f"{d2.name} consumes {d2.f_poset.name}"
        )

    def h(f: Point) -> Antichain:
        mid = d1.at(f)
        items = []
        for r1 in mid.points:
            inner = d2.at(r1)
            for r2 in inner.points:
                for impl1 in mid.impls_for(r1) or ((),):
                    for impl2 in inner.impls_for(r2) or ((),):
                        items.append((r2, (tuple(impl1) + tuple(impl2),)))
        return antichain_merge(items, d2.r_poset)

    return Mdpi(f"{d1.name};{d2.name}", d1.f_poset, d2.r_poset, h)


def compose_parallel(d1: Mdpi, d2: Mdpi) -> Mdpi:
    """Independent blocks side by side on product posets."""
    f_poset = ProductPoset(f"({d1.f_poset.name}x{d2.f_poset.name})", (d1.f_poset, d2.f_poset))
    r_poset = ProductPoset(f"({d1.r_poset.name}x{d2.r_poset.name})", (d1.r_poset, d2.r_poset))

    def h(f: Point) -> Antichain:
        f1, f2 = f
        a1, a2 = d1.at(f1), d2.at(f2)
        items = []
        for r1 in a1.points:
            for r2 in a2.points:
                for impl1 in a1.impls_for(r1) or ((),):
                    for impl2 in a2.impls_for(r2) or ((),):
                        items.append(((r1, r2), (tuple(impl1) + tuple(impl2),)))
        return antichain_merge(items, r_poset)

    return Mdpi(f"{d1.name}|{d2.name}", f_poset, r_poset, h)


def check_monotone(
    mdpi: Mdpi, nested_pairs: Sequence[tuple[Point, Point]]
) -> list[tuple[Point, Point]]:
    """Sample-test monotonicity; returns violating (f_low, f_high) pairs.

    For f_low <= f_high every point of h(f_low) must be dominated by the
    requirement of serving f_high, i.e. lie below some point of h(f_high).
    """
    violations = []
    for f_low, f_high in nested_pairs:
        if not mdpi.f_poset.leq(f_low, f_high):
            raise PosetError("pairs must be ordered f_low <= f_high")
        low = mdpi.at(f_low)
        high = mdpi.at(f_high)
        if high.is_empty():
            continue  # infeasible above is always consistent
        for p in low.points:
            if not any(mdpi.r_poset.leq(p, q) for q in high.points):
                violations.append((f_low, f_high))
                break
    return violations


# --- Diagrams ----------------------------------------------------------------


@dataclass
class Block:
    """A named diagram node with ordered functionality and resource wires."""

    name: str
    f_wires: tuple[str, ...]
    f_posets: tuple[Poset, ...]
    r_wires: tuple[str, ...]
    r_posets: tuple[Poset, ...]
    h: Callable[[tuple], Antichain]  # over ProductPoset(r_posets)

    def r_product(self) -> ProductPoset:
        return ProductPoset(f"{self.name}.resources", self.r_posets)

    def f_index(self, wire: str) -> int:
        return self.f_wires.index(wire)

    def r_index(self, wire: str) -> int:
        return self.r_wires.index(wire)


@dataclass(frozen=True)
class Edge:
    """Co-design constraint: the consumer's demand flows to the provider.

    ``src`` is a (block, resource wire) pair, ``dst`` a (block, functionality
    wire) pair; the provider must offer at least the demanded value. Multiple
    edges into one wire are combined with ``sum`` or ``union``. A loop edge
    feeds a block that evaluates earlier than the demand's producer and is
    resolved by Kleene ascent.
    """

    src: tuple[str, str]
    dst: tuple[str, str]
    combine: str = "single"
    loop: bool = False
    loop_bottom: Any = None


@dataclass
class Assignment:
    values: dict[tuple[str, str], Any]
    impls: ImplTrace

    def copy_with(self, new_values: dict, extra_impl) -> "Assignment":
        vals = dict(self.values)
        vals.update(new_values)
        return Assignment(vals, self.impls + tuple(extra_impl))


@dataclass
class DiagramSolution:
    antichain: Antichain
    iterations: int
    assignments: list[Assignment]


@dataclass
class Diagram:
    """A multigraph of blocks with demand-flow edges and optional loops."""

    blocks: list[Block]
    edges: list[Edge]
    objective: Callable[[Assignment], tuple]
    objective_poset: ProductPoset
    iteration_cap: int = 10_000

    def __post_init__(self) -> None:
        self._by_name = {b.name: b for b in self.blocks}
        if len(self._by_name) != len(self.blocks):
            raise ValueError("block names must be unique")
        for e in self.edges:
            src_block = self._by_name[e.src[0]]
            dst_block = self._by_name[e.dst[0]]
            src_poset = src_block.r_posets[src_block.r_index(e.src[1])]
            dst_poset = dst_block.f_posets[dst_block.f_index(e.dst[1])]
            if type(src_poset) is not type(dst_poset):
                raise PosetError(
                    f"edge {e.src} -> {e.dst} connects mismatched poset kinds"
                )

    def _topo_order(self) -> list[Block]:
        deps: dict[str, set[str]] = {b.name: set() for b in self.blocks}
        for e in self.edges:
            if not e.loop:
                deps[e.dst[0]].add(e.src[0])
        order: list[str] = []
        remaining = dict(deps)
        while remaining:
            ready = sorted(n for n, d in remaining.items() if d <= set(order))
            if not ready:
                raise ValueError("diagram has an unflagged cycle")
            order.extend(ready)
            for n in ready:
                del remaining[n]
        return [self._by_name[n] for n in order]

    def _incoming(self, block: str, wire: str) -> list[Edge]:
        return [e for e in self.edges if e.dst == (block, wire)]

    def _combine(self, edge_values: list, combine: str):
        if combine == "sum":
            return sum(edge_values)
        if combine == "union":
            out = frozenset()
            for v in edge_values:
                out |= frozenset(v)
            return out
        if len(edge_values) != 1:
            raise ValueError("multiple edges into a wire need a combine rule")
        return edge_values[0]

    def _evaluate_pass(
        self,
        demand: Mapping[tuple[str, str], Any],
        loop_values: dict[Edge, frozenset],
    ) -> tuple[list[Assignment], dict[Edge, set]]:
        assignments = [Assignment({}, ())]
        order = self._topo_order()
        for block in order:
            next_assignments: list[Assignment] = []
            for asg in assignments:
                branches: list[tuple[list, Assignment]] = [([], asg)]
                for wire in block.f_wires:
                    incoming = self._incoming(block.name, wire)
                    if not incoming:
                        key = (block.name, wire)
                        if key not in demand:
                            raise ValueError(f"unbound functionality wire {key}")
                        for vals, _ in branches:
                            vals.append(demand[key])
                        continue
                    loops = [e for e in incoming if e.loop]
                    plain = [e for e in incoming if not e.loop]
                    if plain:
                        combine = plain[0].combine
                        if any(e.combine != combine for e in plain):
                            raise ValueError("edges into one wire must share a combine rule")
                        for vals, base in branches:
                            vals.append(
                                self._combine([base.values[e.src] for e in plain], combine)
                            )
                    if loops:
                        if len(loops) != 1:
                            raise ValueError("at most one loop edge per wire")
                        edge = loops[0]
                        expanded = []
                        for vals, base in branches:
                            for lv in sorted(loop_values[edge], key=repr):
                                nv = list(vals)
                                nv.append(lv)
                                nb = Assignment(dict(base.values), base.impls)
                                nb.values[("loop", f"{edge.dst[0]}.{edge.dst[1]}")] = lv
                                expanded.append((nv, nb))
                        branches = expanded
                for vals, base in branches:
                    result = block.h(tuple(vals))
                    for point in result.points:
                        impls = result.impls_for(point) or ((),)
                        for impl in impls:
                            new_vals = {
                                (block.name, w): v for w, v in zip(block.r_wires, point)
                            }
                            next_assignments.append(base.copy_with(new_vals, impl))
            assignments = next_assignments

        violations: dict[Edge, set] = {e: set() for e in self.edges if e.loop}
        surviving: list[Assignment] = []
        for asg in assignments:
            ok = True
            for edge in violations:
                demanded = asg.values.get(edge.src)
                used = asg.values.get(("loop", f"{edge.dst[0]}.{edge.dst[1]}"))
                dst_block = self._by_name[edge.dst[0]]
                poset = dst_block.f_posets[dst_block.f_index(edge.dst[1])]
                if demanded is None:
                    continue
                if used is None or not poset.leq(demanded, used):
                    violations[edge].add(poset.canon(demanded))
                    ok = False
            if ok:
                surviving.append(asg)
        return surviving, violations

    def solve_fix_fun_min_res(
        self, demand: Mapping[tuple[str, str], Any]
    ) -> DiagramSolution:
        """Minimal resources for the demanded functionality.

        Loop wires start at their declared bottom and are grown by Kleene
        ascent until the demanded loop values stabilize; the ascent is an
        ascending chain of value sets, so it terminates on finite universes.
        """
        loop_edges = [e for e in self.edges if e.loop]
        loop_values: dict[Edge, frozenset] = {
            e: frozenset({e.loop_bottom}) for e in loop_edges
        }
        iterations = 0
        while True:
            iterations += 1
            if iterations > self.iteration_cap:
                names = [f"{e.src} -> {e.dst}" for e in loop_edges]
                raise DivergenceError(f"Kleene ascent exceeded cap on loops: {names}")
            assignments, violations = self._evaluate_pass(demand, loop_values)
            grew = False
            for edge, missing in violations.items():
                new_set = loop_values[edge] | frozenset(missing)
                if new_set != loop_values[edge]:
                    loop_values[edge] = new_set
                    grew = True
            if not grew:
                break

        items = []
        for asg in assignments:
            vec = self.objective(asg)
            items.append((vec, (asg.impls,)))
        chain = antichain_merge(items, self.objective_poset)
        kept = set(chain.points)
        kept_assignments = [
            asg for asg in assignments if self.objective_poset.canon(self.objective(asg)) in kept
        ]
        return DiagramSolution(chain, iterations, kept_assignments)

    def solve_fix_res_max_fun(
        self,
        budget: tuple,
        demand_candidates: Sequence[Mapping[tuple[str, str], Any]],
        demand_poset: Poset,
        demand_key: Callable[[Mapping], Point],
    ) -> Antichain:
        """Maximal functionality antichain affordable within the budget.

        The dual query by order reversal, evaluated over the diagram's
        declared (finite) demand grid.
        """
        feasible = []
        for demand in demand_candidates:
            solution = self.solve_fix_fun_min_res(demand)
            if any(
                self.objective_poset.leq(p, budget) for p in solution.antichain.points
            ):
                feasible.append((demand_key(demand), ((("demand", demand_key(demand)),),)))
        return antichain_merge(feasible, OppositePoset("budget-dual", inner=demand_poset))
