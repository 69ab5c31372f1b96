"""Sensor selection and placement as an exact multi-weighted set cover.

Requirement atoms (class, env, theta bin, cell) must each be covered by a
selected candidate whose coverage matches the same class and environment,
with at most one candidate per mount point. The weighted 0/1 program is
solved exactly by branch and bound, and the Pareto front over raw resources
is swept with low-discrepancy weight vectors.

The weighted-sum sweep recovers only supported Pareto points; the exhaustive
enumeration helpers used by the oracles also see unsupported ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .percperf import CoverageSet
from .percreq import RequirementSet

ResourceVec = tuple[float, float, float, float]  # price CHF, mass kg, power W, GFLOPS

RESOURCE_NAMES = ("price_chf", "mass_kg", "power_w", "compute_gflops")


class CoverInfeasibleError(RuntimeError):
    """Infeasibility certificate: uncoverable atoms and/or mount conflicts."""

    def __init__(self, message: str, uncoverable_atoms=(), mount_rows=()):
        super().__init__(message)
        self.uncoverable_atoms = tuple(uncoverable_atoms)
        self.mount_rows = tuple(mount_rows)


@dataclass(frozen=True)
class CoverCandidate:
    """One selectable mounted pipeline, reduced to what the solver needs."""

    id: str
    mount: str
    pipeline_id: str
    resources: ResourceVec


@dataclass
class CoverInstance:
    """A concrete set-cover instance: atoms, candidates, matrices.

    ``masks[l]`` is the coverage bitmask of candidate l over the atom list and
    plays the role of column l of the binary coverage matrix. ``mount_groups``
    are the exclusivity rows: index sets of candidates sharing a mount point.
    """

    atoms: tuple
    candidates: tuple[CoverCandidate, ...]
    masks: tuple[int, ...]
    costs: np.ndarray  # (L, W) normalized to [0, 1]
    mount_groups: tuple[tuple[int, ...], ...]
    normalizers: tuple[float, ...]

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    @property
    def n_candidates(self) -> int:
        return len(self.candidates)

    @property
    def n_weights(self) -> int:
        return int(self.costs.shape[1]) if self.costs.size else self.costs.shape[1]

    def full_mask(self) -> int:
        return (1 << self.n_atoms) - 1

    def mount_of(self, idx: int) -> str:
        return self.candidates[idx].mount


@dataclass(frozen=True)
class Selection:
    """A feasible selection: chosen candidate indices plus cost summaries."""

    chosen: tuple[int, ...]
    weighted_cost: float
    resources: ResourceVec

    def ids(self, instance: CoverInstance) -> tuple[str, ...]:
        return tuple(instance.candidates[i].id for i in self.chosen)


@dataclass
class FrontPoint:
    resources: ResourceVec
    selections: tuple[Selection, ...]
    weights: tuple[tuple[float, ...], ...]


@dataclass
class ParetoFront:
    points: list[FrontPoint]

    def __post_init__(self) -> None:
        vecs = [p.resources for p in self.points]
        for i, a in enumerate(vecs):
            for j, b in enumerate(vecs):
                if i != j and dominates(a, b):
                    raise ValueError(f"front is not an antichain: {a} dominates {b}")

    def resource_vectors(self) -> set[ResourceVec]:
        return {p.resources for p in self.points}


def dominates(a: Sequence[float], b: Sequence[float]) -> bool:
    """True iff a is componentwise <= b and strictly better somewhere."""
    return all(x <= y + 1e-12 for x, y in zip(a, b)) and any(
        x < y - 1e-12 for x, y in zip(a, b)
    )


def antichain_min(vectors: Iterable[tuple]) -> list[tuple]:
    """Minimal elements under componentwise order, preserving first-seen order."""
    vecs = list(vectors)
    out = []
    for i, v in enumerate(vecs):
        if any(dominates(w, v) for w in vecs if w != v):
            continue
        if v not in out:
            out.append(v)
    return out


def sum_resources(parts: Iterable[ResourceVec]) -> ResourceVec:
    acc = [0.0, 0.0, 0.0, 0.0]
    for p in parts:
        for k in range(4):
            acc[k] += p[k]
    return tuple(acc)


def build_instance(
    requirements: RequirementSet,
    coverages: Sequence[CoverageSet],
    candidates: Sequence[CoverCandidate],
    normalizers: Sequence[float],
) -> CoverInstance:
    """Populate the coverage and mount-exclusivity matrices.

    Atoms are enumerated in sorted key order, coverage is exact cell-set
    membership, and costs are normalized by the catalog-wide maxima given in
    ``normalizers``. Atoms no candidate covers raise an infeasibility
    certificate before any solving happens.
    """
    if len(coverages) != len(candidates):
        raise ValueError("need exactly one coverage set per candidate")
    if any(n <= 0 for n in normalizers):
        raise ValueError("normalizers must be positive")
    atoms = tuple(requirements.atoms())
    masks = []
    for cov in coverages:
        if cov.grid != requirements.grid:
            raise ValueError("coverage grid does not match requirement grid")
        mask = 0
        for n, (class_id, env, theta_idx, cell) in enumerate(atoms):
            if cell in cov.cells_for(class_id, env, theta_idx).cells:
                mask |= 1 << n
        masks.append(mask)

    costs = np.zeros((len(candidates), len(normalizers)))
    for l, cand in enumerate(candidates):
        if len(cand.resources) != len(normalizers):
            raise ValueError("resource vector length does not match normalizers")
        for j, (raw, norm) in enumerate(zip(cand.resources, normalizers)):
            c = raw / norm
            if not -1e-9 <= c <= 1.0 + 1e-9:
                raise ValueError(
                    f"normalized cost {c:.3f} for {cand.id!r} outside [0, 1]"
                )
            costs[l, j] = min(max(c, 0.0), 1.0)

    groups: dict[str, list[int]] = {}
    for idx, cand in enumerate(candidates):
        groups.setdefault(cand.mount, []).append(idx)
    mount_groups = tuple(tuple(v) for _, v in sorted(groups.items()))

    union = 0
    for m in masks:
        union |= m
    uncovered = [atoms[n] for n in range(len(atoms)) if not (union >> n) & 1]
    if uncovered:
        raise CoverInfeasibleError(
            f"{len(uncovered)} requirement atoms are covered by no candidate",
            uncoverable_atoms=uncovered,
        )

    return CoverInstance(
        atoms=atoms,
        candidates=tuple(candidates),
        masks=tuple(masks),
        costs=costs,
        mount_groups=mount_groups,
        normalizers=tuple(normalizers),
    )


def _radical_inverse(index: int, base: int) -> float:
    inv = 0.0
    f = 1.0 / base
    i = index
    while i > 0:
        inv += f * (i % base)
        i //= base
        f /= base
    return inv


def _first_primes(n: int) -> list[int]:
    primes = []
    k = 2
    while len(primes) < n:
        if all(k % p for p in primes):
            primes.append(k)
        k += 1
    return primes


def halton_weights(n_objectives: int, n_points: int) -> list[tuple[float, ...]]:
    """Low-discrepancy weight vectors on the simplex.

    Halton points in the unit cube (bases are the first W primes, starting at
    index 1) normalized by their coordinate sum; every output is nonnegative
    and sums to one within 1e-12.
    """
    if n_objectives < 1 or n_points < 1:
        raise ValueError("need at least one objective and one point")
    if n_objectives == 1:
        return [(1.0,) for _ in range(n_points)]
    bases = _first_primes(n_objectives)
    out = []
    index = 1
    while len(out) < n_points:
        point = [_radical_inverse(index, b) for b in bases]
        index += 1
        total = sum(point)
        if total <= 0.0:
            continue
        w = tuple(x / total for x in point)
        assert abs(sum(w) - 1.0) <= 1e-12
        out.append(w)
    return out


def _greedy_cover(instance: CoverInstance, wc: np.ndarray) -> Optional[list[int]]:
    """Greedy incumbent for the branch-and-bound upper bound."""
    covered = 0
    full = instance.full_mask()
    chosen: list[int] = []
    used_mounts: set[str] = set()
    while covered != full:
        best_idx, best_ratio = -1, 0.0
        for l in range(instance.n_candidates):
            if instance.mount_of(l) in used_mounts or l in chosen:
                continue
            gain = bin(instance.masks[l] & ~covered).count("1")
            if gain == 0:
                continue
            ratio = gain / max(wc[l], 1e-12)
            if ratio > best_ratio:
                best_ratio, best_idx = ratio, l
        if best_idx < 0:
            return None
        chosen.append(best_idx)
        covered |= instance.masks[best_idx]
        used_mounts.add(instance.mount_of(best_idx))
    return sorted(chosen)


def solve_cover(
    instance: CoverInstance, weights: Sequence[float]
) -> Selection:
    """Exact optimum of the weighted 0/1 cover by branch and bound.

    The incumbent comes from a greedy cover; the lower bound charges every
    uncovered atom the cheapest weighted cost among candidates covering it
    divided by that candidate's coverage count. Among optima the selection
    with the lexicographically smallest index set wins.
    """
    w = np.asarray(weights, dtype=float)
    if w.shape != (instance.costs.shape[1],):
        raise ValueError("weight vector length mismatch")
    if abs(float(w.sum()) - 1.0) > 1e-9 or (w < -1e-15).any():
        raise ValueError("weights must be nonnegative and sum to one")

    n = instance.n_atoms
    full = instance.full_mask()
    if n == 0:
        return Selection((), 0.0, (0.0, 0.0, 0.0, 0.0))

    L = instance.n_candidates
    wc = instance.costs @ w if L else np.zeros(0)
    cover_counts = [max(bin(m).count("1"), 1) for m in instance.masks]
    unit_costs = [wc[l] / cover_counts[l] for l in range(L)]
    # per atom: candidate indices covering it, cheapest unit cost first
    atom_candidates: list[list[int]] = [[] for _ in range(n)]
    for l in range(L):
        m = instance.masks[l]
        while m:
            low = m & -m
            atom_candidates[low.bit_length() - 1].append(l)
            m ^= low
    for lst in atom_candidates:
        lst.sort(key=lambda l: (unit_costs[l], l))

    best_cost = math.inf
    best_chosen: Optional[tuple[int, ...]] = None
    greedy = _greedy_cover(instance, wc)
    if greedy is not None:
        best_cost = float(sum(wc[l] for l in greedy))
        best_chosen = tuple(greedy)

    mount_of = [instance.mount_of(l) for l in range(L)]

    def lower_bound(covered: int, start: int, used: frozenset) -> float:
        lb = 0.0
        for a in range(n):
            if (covered >> a) & 1:
                continue
            unit = None
            for l in atom_candidates[a]:
                if l >= start and mount_of[l] not in used:
                    unit = unit_costs[l]
                    break
            if unit is None:
                return math.inf
            lb += unit
        return lb

    def consider(cost: float, chosen: tuple[int, ...]) -> None:
        nonlocal best_cost, best_chosen
        if cost < best_cost - 1e-12:
            best_cost, best_chosen = cost, chosen
        elif abs(cost - best_cost) <= 1e-12 and (
            best_chosen is None or chosen < best_chosen
        ):
            best_cost, best_chosen = min(cost, best_cost), chosen

    def dfs(idx: int, covered: int, cost: float, chosen: tuple[int, ...], used: frozenset) -> None:
        if covered == full:
            consider(cost, chosen)
            return
        if idx >= L:
            return
        if cost + lower_bound(covered, idx, used) > best_cost + 1e-12:
            return
        if mount_of[idx] not in used:
            dfs(
                idx + 1,
                covered | instance.masks[idx],
                cost + float(wc[idx]),
                chosen + (idx,),
                used | {mount_of[idx]},
            )
        dfs(idx + 1, covered, cost, chosen, used)

    dfs(0, 0, 0.0, (), frozenset())

    if best_chosen is None:
        conflict_rows = [
            g for g in instance.mount_groups if len(g) > 1
        ]
        raise CoverInfeasibleError(
            "no feasible selection under mount exclusivity",
            mount_rows=conflict_rows,
        )
    resources = sum_resources(instance.candidates[l].resources for l in best_chosen)
    return Selection(best_chosen, best_cost, resources)


def verify_selection(instance: CoverInstance, selection: Selection) -> bool:
    """Re-check A x >= 1 and F x <= 1 independently of the solver."""
    covered = 0
    for l in selection.chosen:
        covered |= instance.masks[l]
    if covered != instance.full_mask():
        return False
    for group in instance.mount_groups:
        if sum(1 for l in selection.chosen if l in group) > 1:
            return False
    return len(set(selection.chosen)) == len(selection.chosen)


def enumerate_cover(
    instance: CoverInstance, weights: Sequence[float]
) -> Optional[Selection]:
    """Brute-force optimum over all 2^L subsets; None when infeasible."""
    L = instance.n_candidates
    if L > 22:
        raise ValueError("exhaustive enumeration limited to 22 candidates")
    w = np.asarray(weights, dtype=float)
    wc = instance.costs @ w if L else np.zeros(0)
    full = instance.full_mask()
    best: Optional[tuple[float, tuple[int, ...]]] = None
    for subset in range(1 << L):
        covered = 0
        ok = True
        for group in instance.mount_groups:
            if bin(subset & _group_mask(group)).count("1") > 1:
                ok = False
                break
        if not ok:
            continue
        for l in range(L):
            if (subset >> l) & 1:
                covered |= instance.masks[l]
        if covered != full:
            continue
        chosen = tuple(l for l in range(L) if (subset >> l) & 1)
        cost = float(sum(wc[l] for l in chosen))
        key = (cost, chosen)
        if best is None or cost < best[0] - 1e-12 or (abs(cost - best[0]) <= 1e-12 and chosen < best[1]):
            best = key
    if best is None:
        return None
    cost, chosen = best
    return Selection(chosen, cost, sum_resources(instance.candidates[l].resources for l in chosen))


def _group_mask(group: tuple[int, ...]) -> int:
    m = 0
    for l in group:
        m |= 1 << l
    return m


def enumerate_feasible_selections(instance: CoverInstance) -> list[tuple[int, ...]]:
    """All feasible selections (cover complete, mounts exclusive)."""
    L = instance.n_candidates
    if L > 22:
        raise ValueError("exhaustive enumeration limited to 22 candidates")
    full = instance.full_mask()
    out = []
    group_masks = [_group_mask(g) for g in instance.mount_groups]
    for subset in range(1 << L):
        if any(bin(subset & gm).count("1") > 1 for gm in group_masks):
            continue
        covered = 0
        for l in range(L):
            if (subset >> l) & 1:
                covered |= instance.masks[l]
        if covered == full:
            out.append(tuple(l for l in range(L) if (subset >> l) & 1))
    return out


def enumerate_front(instance: CoverInstance) -> list[ResourceVec]:
    """True Pareto front over raw resources by exhaustive enumeration."""
    vecs = [
        sum_resources(instance.candidates[l].resources for l in chosen)
        for chosen in enumerate_feasible_selections(instance)
    ]
    return antichain_min(vecs)


def pareto_sweep(
    instance: CoverInstance,
    n_weights: int,
) -> ParetoFront:
    """Solve per Halton weight vector and antichain-filter the raw resources.

    Identical resource vectors are merged, keeping every distinct selection
    and the weights that produced them attached to the front point.
    """
    weights = halton_weights(instance.costs.shape[1], n_weights)
    by_resources: dict[ResourceVec, dict] = {}
    for w in weights:
        sol = solve_cover(instance, w)  # infeasibility raises on the first solve
        slot = by_resources.setdefault(sol.resources, {"selections": {}, "weights": []})
        slot["selections"][sol.chosen] = sol
        slot["weights"].append(w)

    minimal = antichain_min(by_resources.keys())
    points = [
        FrontPoint(
            resources=vec,
            selections=tuple(
                by_resources[vec]["selections"][c]
                for c in sorted(by_resources[vec]["selections"])
            ),
            weights=tuple(by_resources[vec]["weights"]),
        )
        for vec in sorted(minimal)
    ]
    return ParetoFront(points)


def front_to_csv(front: ParetoFront, instance: CoverInstance) -> str:
    """CSV export: resources, selection ids, first producing weight vector."""
    lines = ["price_chf,mass_kg,power_w,compute_gflops,selection_ids,weights"]
    for p in front.points:
        sel = p.selections[0]
        ids = ";".join(sel.ids(instance))
        wstr = ";".join(f"{x:.6f}" for x in p.weights[0])
        lines.append(
            f"{p.resources[0]:.6f},{p.resources[1]:.6f},{p.resources[2]:.6f},"
            f"{p.resources[3]:.6f},{ids},{wstr}"
        )
    return "\n".join(lines) + "\n"
