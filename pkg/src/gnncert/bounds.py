"""Bounds on the probability that an adversarial message reaches a target node.

Everything here computes or bounds one number per (receptive field, adversary
budget): the worst-case probability that at least one message from attacker
controlled nodes survives random edge deletion and node ablation and arrives
at the target.  The smoothed classifier's certified radius is the largest
budget for which that probability stays small enough.

Exact values come from inclusion-exclusion over simple paths (small fields),
a branch recursion (tree-shaped fields), or a closed form (ablation-only
smoothing).  Upper bounds come from treating paths / sources as independent:
the per-source product bound, the multiplicative combination of the top
sources, and the (weaker) union bound.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import NotATreeError, ResourceLimitError
from .graph import ReceptiveField, canonical_edge
from .smoothing import SmoothingConfig

DEFAULT_MAX_IE_TERMS = 2 ** 20
DEFAULT_SUBSET_CAP = 50_000

METHODS = frozenset({
    "node-ablation-exact",
    "single-source",
    "multiplicative",
    "union",
    "inclusion-exclusion-exact",
    "tree-exact",
    "monte-carlo",
    "levine-reference",
})


@dataclass(frozen=True)
class DeltaBound:
    """An arrival-probability value tagged with how it was computed.

    ``raw`` keeps the unclamped union sum (which can exceed 1); ``stderr``
    accompanies Monte-Carlo estimates; ``worst_set`` reports the maximizing
    attacker subset found by exact enumeration; ``node`` identifies the
    source of a single-source bound.
    """

    value: float
    method: str
    rho: int
    d_min: int = 0
    node: int | None = None
    raw: float | None = None
    stderr: float | None = None
    worst_set: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"bound value {self.value} outside [0, 1]")


def _product_one_minus(values) -> float:
    """Stable product of (1 - x) factors; log-space once factors get tiny."""
    factors = [1.0 - float(x) for x in values]
    if any(f <= 0.0 for f in factors):
        return 0.0
    if min(factors, default=1.0) < 1e-12:
        return math.exp(math.fsum(math.log(f) for f in factors))
    out = 1.0
    for f in factors:
        out *= f
    return out


def _clip01(x: float) -> float:
    return min(1.0, max(0.0, x))


# ---------------------------------------------------------------------------
# closed forms


def delta_node_ablation_exact(p_abl: float, rho: int) -> DeltaBound:
    """Arrival probability under ablation-only smoothing: 1 - p_abl**rho.

    With no edge deletion, messages are stopped only at their source, so the
    arrival event is simply "at least one attacked node is not ablated".
    """
    if rho < 0:
        raise ValueError("rho must be >= 0")
    value = 0.0 if rho == 0 else 1.0 - p_abl ** rho
    return DeltaBound(value=_clip01(value), method="node-ablation-exact", rho=rho)


def max_certifiable_radius(p_abl: float) -> int:
    """Largest budget certifiable under ablation-only smoothing.

    Certification requires the arrival probability 1 - p_abl**rho to stay
    below 1/2, i.e. p_abl above the rho-th root of 1/2.  Probabilities at or
    below 1/2 certify nothing.  The threshold comparison carries a small
    slack (1e-2 on the exponent ratio) so that ablation probabilities quoted
    to three decimals, e.g. 0.933 for radius 10, land on the radius they
    name rather than one below it.
    """
    if not 0.0 < p_abl < 1.0:
        raise ValueError(f"p_abl must be in (0, 1), got {p_abl}")
    if p_abl <= 0.5:
        return 0
    ratio = math.log(0.5) / math.log(p_abl)
    return int(math.floor(ratio + 1e-2))


def levine_delta(n: int, keep: int, rho: int) -> DeltaBound:
    """Reference arrival probability under uniform keep-exactly-k ablation.

    This is the bounding constant of ablation schemes that retain exactly
    ``keep`` of ``n`` elements: 1 - C(n-rho, keep) / C(n, keep).  Kept for
    comparison; the expectation-matched independent scheme is strictly
    tighter for rho > 1.
    """
    if rho < 0 or keep < 0 or n < 0:
        raise ValueError("n, keep, rho must be >= 0")
    if rho == 0:
        return DeltaBound(value=0.0, method="levine-reference", rho=0)
    if keep > n - rho:
        return DeltaBound(value=1.0, method="levine-reference", rho=rho)
    value = 1.0 - math.comb(n - rho, keep) / math.comb(n, keep)
    return DeltaBound(value=_clip01(value), method="levine-reference", rho=rho)


# ---------------------------------------------------------------------------
# single-source bound and combinations


def delta_single_source(rf: ReceptiveField, w: int, cfg: SmoothingConfig) -> DeltaBound:
    """Upper bound on the probability that messages from ``w`` arrive.

    The target itself arrives unless ablated.  For any other source the
    bound multiplies per-path interception probabilities as if paths were
    independent, which is exact for 1- and 2-layer fields (paths from one
    source cannot share edges there) and an upper bound in general.  A node
    outside the field has no qualifying path, hence probability 0.
    """
    if w == rf.target:
        return DeltaBound(value=_clip01(1.0 - cfg.p_abl), method="single-source",
                          rho=1, node=w)
    plist = rf.paths.get(w, ())
    if not plist:
        return DeltaBound(value=0.0, method="single-source", rho=1, node=w)
    keep = 1.0 - cfg.p_del
    none_arrives = _product_one_minus(keep ** len(q) for q in plist)
    value = (1.0 - cfg.p_abl) * (1.0 - none_arrives)
    return DeltaBound(value=_clip01(value), method="single-source", rho=1, node=w)


def _sorted_values(singles) -> list[float]:
    """Descending bound values; ties broken by ascending node index."""
    keyed = []
    for i, s in enumerate(singles):
        if isinstance(s, DeltaBound):
            keyed.append((-s.value, s.node if s.node is not None else i, s.value))
        else:
            keyed.append((-float(s), i, float(s)))
    keyed.sort()
    return [v for _, _, v in keyed]


def delta_multiplicative(singles, rho: int, d_min: int = 0) -> DeltaBound:
    """Combine the top-rho single-source bounds as if sources were independent.

    1 - prod_i (1 - value_i) over the rho largest values.  Fewer candidates
    than rho means all of them are used.
    """
    if rho < 0:
        raise ValueError("rho must be >= 0")
    top = _sorted_values(singles)[:rho]
    value = 1.0 - _product_one_minus(top)
    return DeltaBound(value=_clip01(value), method="multiplicative",
                      rho=rho, d_min=d_min)


def delta_union(singles, rho: int, d_min: int = 0) -> DeltaBound:
    """Sum of the top-rho single-source bounds, clamped to 1.

    The unclamped sum is kept in ``raw``; it is not a probability and can
    exceed 1, which is why the multiplicative bound is preferred.
    """
    if rho < 0:
        raise ValueError("rho must be >= 0")
    top = _sorted_values(singles)[:rho]
    raw = math.fsum(top)
    return DeltaBound(value=min(1.0, raw), method="union", rho=rho,
                      d_min=d_min, raw=raw)


# ---------------------------------------------------------------------------
# exact values for a fixed attacked set


def delta_exact_ie(
    rf: ReceptiveField,
    attacked,
    cfg: SmoothingConfig,
    max_terms: int = DEFAULT_MAX_IE_TERMS,
) -> DeltaBound:
    """Exact arrival probability for a fixed attacked set, by inclusion-exclusion.

    Every nonempty subset of the attacked nodes' simple paths contributes
    ``(1-p_del)**a * (1-p_abl)**b`` with alternating sign, where ``a`` counts
    distinct edges and ``b`` distinct source nodes on the subset.  An
    attacked target composes in independently: it arrives iff not ablated,
    regardless of edges.  Refuses (rather than approximates) when 2**paths
    exceeds ``max_terms``.
    """
    attacked = set(int(w) for w in attacked)
    sources = sorted(attacked - {rf.target})

    path_list: list[tuple[int, int]] = []   # (edge_bits, source_bits)
    edge_ids: dict[tuple[int, int], int] = {}
    for si, w in enumerate(sources):
        for q in rf.paths.get(w, ()):
            bits = 0
            for e in q:
                key = canonical_edge(e, rf.directed)
                if key not in edge_ids:
                    edge_ids[key] = len(edge_ids)
                bits |= 1 << edge_ids[key]
            path_list.append((bits, 1 << si))

    if (1 << len(path_list)) > max_terms:
        raise ResourceLimitError(
            f"inclusion-exclusion over {len(path_list)} paths needs "
            f"2**{len(path_list)} terms (> {max_terms}); use the tree or "
            f"multiplicative method"
        )

    keep_e = 1.0 - cfg.p_del
    keep_n = 1.0 - cfg.p_abl
    terms: list[float] = []

    def expand(i: int, ebits: int, sbits: int, size: int) -> None:
        if i == len(path_list):
            if size:
                t = keep_e ** ebits.bit_count() * keep_n ** sbits.bit_count()
                terms.append(t if size % 2 else -t)
            return
        expand(i + 1, ebits, sbits, size)
        pe, ps = path_list[i]
        expand(i + 1, ebits | pe, sbits | ps, size + 1)

    expand(0, 0, 0, 0)
    p_paths = _clip01(math.fsum(terms))

    if rf.target in attacked:
        value = 1.0 - (1.0 - p_paths) * cfg.p_abl
    else:
        value = p_paths
    return DeltaBound(value=_clip01(value), method="inclusion-exclusion-exact",
                      rho=len(attacked))


def _tree_children(rf: ReceptiveField) -> dict[int, list[int]]:
    """Child lists of the field's message tree, or raise if it is not a tree."""
    out_count: dict[int, int] = {w: 0 for w in rf.members}
    children: dict[int, list[int]] = {w: [] for w in rf.members}
    for a, b in rf.path_edges:
        out_count[a] += 1
        children[b].append(a)
    for w in rf.members:
        expected = 0 if w == rf.target else 1
        if out_count[w] != expected:
            raise NotATreeError(
                f"node {w} has {out_count[w]} outgoing message edges; the "
                f"receptive field of {rf.target} is not a tree"
            )
    if len(rf.path_edges) != len(rf.members) - 1:
        raise NotATreeError(
            f"receptive field of {rf.target} has {len(rf.path_edges)} message "
            f"edges over {len(rf.members)} members; not a tree"
        )
    for lst in children.values():
        lst.sort()
    return children


def is_tree(rf: ReceptiveField) -> bool:
    try:
        _tree_children(rf)
        return True
    except NotATreeError:
        return False


def delta_tree_exact(rf: ReceptiveField, attacked, cfg: SmoothingConfig) -> DeltaBound:
    """Exact arrival probability on a tree-shaped receptive field.

    Branches of a tree are independent, so the probability that a node
    receives an adversarial message decomposes over its subtrees:

        arrive(i) = 1 - p_abl * (1 - via_branches(i))   if i is attacked
        arrive(i) = via_branches(i)                     otherwise
        via_branches(i) = 1 - prod_j (1 - (1 - p_del) * arrive(j))

    with the product over i's children (empty for leaves).
    """
    attacked = set(int(w) for w in attacked)
    children = _tree_children(rf)

    def arrive(i: int) -> float:
        via = 1.0 - _product_one_minus(
            (1.0 - cfg.p_del) * arrive(j) for j in children[i]
        )
        if i in attacked:
            return 1.0 - cfg.p_abl * (1.0 - via)
        return via

    return DeltaBound(value=_clip01(arrive(rf.target)), method="tree-exact",
                      rho=len(attacked))


# ---------------------------------------------------------------------------
# worst case over attacker placements


def delta_worst_case(
    rf: ReceptiveField,
    rho: int,
    d_min: int,
    cfg: SmoothingConfig,
    method: str = "multiplicative",
    subset_cap: int = DEFAULT_SUBSET_CAP,
    max_terms: int = DEFAULT_MAX_IE_TERMS,
) -> DeltaBound:
    """Bound the arrival probability over all attacker placements of size rho.

    Candidates are field members at hop distance >= d_min (d_min = 1 models
    a target the adversary cannot control, e.g. under a skip connection).
    ``multiplicative`` and ``union`` combine the top-rho single-source
    bounds; ``exact-enumeration`` maximizes the exact probability over every
    size-rho candidate subset and reports the argmax, refusing when the
    subset count exceeds ``subset_cap``.
    """
    if method not in {"multiplicative", "union", "exact-enumeration"}:
        raise ValueError(f"unknown worst-case method {method!r}")
    candidates = rf.candidates(d_min)
    if rho <= 0 or not candidates:
        tag = "inclusion-exclusion-exact" if method == "exact-enumeration" else method
        return DeltaBound(value=0.0, method=tag, rho=max(rho, 0), d_min=d_min,
                          raw=0.0 if method == "union" else None)

    if method in {"multiplicative", "union"}:
        singles = [delta_single_source(rf, w, cfg) for w in candidates]
        combine = delta_multiplicative if method == "multiplicative" else delta_union
        out = combine(singles, rho, d_min=d_min)
        return out

    r = min(rho, len(candidates))
    n_subsets = math.comb(len(candidates), r)
    if n_subsets > subset_cap:
        raise ResourceLimitError(
            f"{n_subsets} candidate subsets exceed cap {subset_cap}; use the "
            f"multiplicative or union method"
        )
    tree = is_tree(rf)
    best = None
    best_set: tuple[int, ...] | None = None
    for subset in itertools.combinations(candidates, r):
        if tree:
            b = delta_tree_exact(rf, subset, cfg)
        else:
            b = delta_exact_ie(rf, subset, cfg, max_terms=max_terms)
        if best is None or b.value > best:
            best = b.value
            best_set = subset
    return DeltaBound(value=best, method="tree-exact" if tree else
                      "inclusion-exclusion-exact", rho=rho, d_min=d_min,
                      worst_set=best_set)


def delta_greedy_probe(
    rf: ReceptiveField,
    rho: int,
    d_min: int,
    cfg: SmoothingConfig,
    max_terms: int = DEFAULT_MAX_IE_TERMS,
) -> DeltaBound:
    """Lower-bound probe: exact arrival probability of one greedy placement.

    Plays the adversary heuristically, preferring nodes close to the target
    and spreading the budget over different first-hop branches (independent
    branches maximize the chance some message survives).  The result is the
    exact probability for that single placement, hence a lower bound on the
    true worst case.  Diagnostic only: never use it as a certificate value.
    """
    candidates = rf.candidates(d_min)
    if rho <= 0 or not candidates:
        return DeltaBound(value=0.0, method="inclusion-exclusion-exact",
                          rho=max(rho, 0), d_min=d_min, worst_set=())

    def branch_of(w: int) -> int:
        if w == rf.target:
            return rf.target
        shortest = min(rf.paths[w], key=len)
        return shortest[-1][0]      # neighbor delivering into the target

    by_branch: dict[int, list[int]] = {}
    for w in sorted(candidates, key=lambda w: (rf.distance[w], w)):
        by_branch.setdefault(branch_of(w), []).append(w)
    queues = [by_branch[b] for b in sorted(by_branch)]
    chosen: list[int] = []
    while len(chosen) < min(rho, len(candidates)):
        for q in queues:
            if q and len(chosen) < min(rho, len(candidates)):
                chosen.append(q.pop(0))
    chosen_set = tuple(sorted(chosen))

    if is_tree(rf):
        value = delta_tree_exact(rf, chosen_set, cfg).value
        method = "tree-exact"
    else:
        value = delta_exact_ie(rf, chosen_set, cfg, max_terms=max_terms).value
        method = "inclusion-exclusion-exact"
    return DeltaBound(value=value, method=method, rho=rho, d_min=d_min,
                      worst_set=chosen_set)


def worst_case_curve(
    rf: ReceptiveField,
    d_min: int,
    cfg: SmoothingConfig,
    method: str = "multiplicative",
    rho_max: int | None = None,
    subset_cap: int = DEFAULT_SUBSET_CAP,
    max_terms: int = DEFAULT_MAX_IE_TERMS,
) -> list[DeltaBound]:
    """Worst-case bounds for every budget 1..rho_max (default: attack surface)."""
    if rho_max is None:
        rho_max = rf.attack_surface(d_min)
    if method in {"multiplicative", "union"}:
        singles = [delta_single_source(rf, w, cfg) for w in rf.candidates(d_min)]
        combine = delta_multiplicative if method == "multiplicative" else delta_union
        return [combine(singles, rho, d_min=d_min) for rho in range(1, rho_max + 1)]
    return [
        delta_worst_case(rf, rho, d_min, cfg, method=method,
                         subset_cap=subset_cap, max_terms=max_terms)
        for rho in range(1, rho_max + 1)
    ]


# ---------------------------------------------------------------------------
# Monte-Carlo oracle


def delta_monte_carlo(
    rf: ReceptiveField,
    attacked,
    cfg: SmoothingConfig,
    samples: int,
    seed: int | None = None,
) -> DeltaBound:
    """Estimate the arrival probability for a fixed attacked set by sampling.

    Simulates edge deletion and node ablation, then checks by k-hop backward
    reachability whether any attacked, non-ablated node stays connected to
    the target in the surviving graph.  The reachability sweep shares no
    logic with the path-product or inclusion-exclusion computations, so it
    serves as an independent check on them.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    attacked = sorted(set(int(w) for w in attacked))
    rng = np.random.default_rng(cfg.seed if seed is None else seed)

    directed_edges = sorted(rf.path_edges)
    logical = sorted({canonical_edge(e, rf.directed) for e in directed_edges})
    eid = {e: i for i, e in enumerate(logical)}
    coin_of = [eid[canonical_edge(e, rf.directed)] for e in directed_edges]
    sources = [w for w in attacked if w != rf.target]
    src_pos = {w: i for i, w in enumerate(sources)}

    hits = 0
    chunk = 20_000
    done = 0
    while done < samples:
        b = min(chunk, samples - done)
        kept = (rng.random((b, len(logical))) >= cfg.p_del
                if logical else np.ones((b, 0), dtype=bool))
        abl = rng.random((b, len(sources) + 1)) < cfg.p_abl

        # within[:, x]: node x reaches the target within <= hop surviving hops
        within = np.zeros((b, max(rf.members | {rf.target}) + 1), dtype=bool)
        within[:, rf.target] = True
        frontier = within.copy()
        for _ in range(rf.k):
            new = np.zeros_like(within)
            for (a, c), coin in zip(directed_edges, coin_of):
                new[:, a] |= frontier[:, c] & kept[:, coin]
            frontier = new & ~within
            within |= frontier

        arrived = np.zeros(b, dtype=bool)
        if rf.target in attacked:
            arrived |= ~abl[:, -1]
        for w in sources:
            arrived |= within[:, w] & ~abl[:, src_pos[w]]
        hits += int(arrived.sum())
        done += b

    p_hat = hits / samples
    stderr = math.sqrt(max(p_hat * (1.0 - p_hat), 0.0) / samples)
    return DeltaBound(value=p_hat, method="monte-carlo", rho=len(attacked),
                      stderr=stderr)
