"""Monte-Carlo estimation of the smoothed classifier and the certificate rule.

The smoothed prediction for a node is the majority vote of the base
classifier over interception samples.  A first round of ``n0`` samples fixes
the majority and runner-up classes; a disjoint round of ``n1`` samples feeds
one-sided Clopper-Pearson bounds on their probabilities (Bonferroni split
alpha/2 + alpha/2 so both hold simultaneously).  A budget rho is certified
when the lower bound minus the worst-case arrival probability still beats
the upper bound plus it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np
from scipy import special

from .errors import InsufficientSamplesError
from .graph import Graph, ReceptiveField
from .gcn import GnnModel, VoteTable, normalized_adjacency, _relu
from .smoothing import SmoothingConfig
from . import smoothing
from .bounds import DeltaBound

CP_BISECTION_TOL = 1e-10


def _beta_quantile(q: float, a: float, b: float) -> float:
    """Quantile of Beta(a, b) by bisection on the regularized incomplete beta."""
    lo, hi = 0.0, 1.0
    while hi - lo > CP_BISECTION_TOL:
        mid = 0.5 * (lo + hi)
        if special.betainc(a, b, mid) < q:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def clopper_pearson(successes: int, n: int, alpha_side: float, side: str) -> float:
    """Exact one-sided Bernoulli confidence bound.

    ``side='lower'``: the alpha_side quantile of Beta(successes,
    n - successes + 1), with the 0-successes boundary pinned at 0.
    ``side='upper'``: the (1 - alpha_side) quantile of
    Beta(successes + 1, n - successes), with the all-successes boundary
    pinned at 1.
    """
    if not 0 <= successes <= n or n <= 0:
        raise ValueError(f"invalid counts: {successes} successes of {n}")
    if not 0.0 < alpha_side < 1.0:
        raise ValueError(f"alpha_side must be in (0, 1), got {alpha_side}")
    if side == "lower":
        if successes == 0:
            return 0.0
        return _beta_quantile(alpha_side, successes, n - successes + 1)
    if side == "upper":
        if successes == n:
            return 1.0
        return _beta_quantile(1.0 - alpha_side, successes + 1, n - successes)
    raise ValueError(f"side must be 'lower' or 'upper', got {side!r}")


@dataclass(frozen=True)
class VoteTally:
    """Vote counts for one node: selection round fixes classes, second round counts."""

    node: int
    counts: np.ndarray      # per-class counts over the certification round
    y_star: int
    y_tilde: int
    n0: int
    n1: int
    alpha: float


@dataclass(frozen=True)
class CertificateResult:
    node: int
    prediction: int
    abstain: bool
    p_lower: float
    p_upper: float
    certified_radius: dict[int, int]    # d_min -> largest certified budget
    correct: bool | None = None


def _predictions_per_sample(model: GnnModel, g: Graph, cfg: SmoothingConfig,
                            n_samples: int, nodes: np.ndarray) -> np.ndarray:
    """(n_samples, len(nodes)) predicted classes, one smoothed forward per sample.

    Samples are keyed by index, so evaluating one sampled graph for many
    nodes at once gives bitwise the same votes as per-node evaluation.
    """
    out = np.empty((n_samples, len(nodes)), dtype=np.int64)
    skip_part = (_relu(g.features @ model.w1) @ model.w2) if model.skip else None
    for i in range(n_samples):
        s = smoothing.sample(g, cfg, i)
        if s.ablated.any():
            x = g.features.copy()
            x[s.ablated] = cfg.token
        else:
            x = g.features
        a_hat = normalized_adjacency(g.n, g.edges[s.edge_mask])
        scores = a_hat @ _relu(a_hat @ x @ model.w1) @ model.w2
        if skip_part is not None:
            scores = scores + skip_part
        out[i] = np.argmax(scores[nodes], axis=1)
    return out


def estimate_all(
    classifier: GnnModel | VoteTable,
    g: Graph | None,
    nodes,
    cfg: SmoothingConfig,
    n0: int,
    n1: int,
    alpha: float,
) -> dict[int, VoteTally]:
    """Vote tallies for many nodes, sharing one sample stream.

    Selection uses sample indices 0..n0-1 and the tally uses n0..n0+n1-1, so
    the class choice is independent of the counts the confidence bounds see.
    """
    if n0 < 1 or n1 < 1:
        raise ValueError("n0 and n1 must be >= 1")
    nodes = np.asarray(sorted(int(v) for v in nodes), dtype=np.int64)

    if isinstance(classifier, VoteTable):
        classes = max(classifier.classes, 2)
        preds = np.empty((n0 + n1, len(nodes)), dtype=np.int64)
        for j, v in enumerate(nodes):
            per_node = classifier.votes.get(int(v), {})
            for i in range(n0 + n1):
                if i not in per_node:
                    raise InsufficientSamplesError(
                        f"vote table lacks sample {i} for node {v} "
                        f"(need {n0 + n1} samples)"
                    )
                preds[i, j] = per_node[i]
    else:
        classes = classifier.classes
        preds = _predictions_per_sample(classifier, g, cfg, n0 + n1, nodes)

    out: dict[int, VoteTally] = {}
    for j, v in enumerate(nodes):
        sel = np.bincount(preds[:n0, j], minlength=classes)
        y_star = int(np.argmax(sel))
        runner = sel.copy()
        runner[y_star] = -1
        y_tilde = int(np.argmax(runner))
        counts = np.bincount(preds[n0:, j], minlength=classes)
        out[int(v)] = VoteTally(node=int(v), counts=counts, y_star=y_star,
                                y_tilde=y_tilde, n0=n0, n1=n1, alpha=alpha)
    return out


def estimate(classifier, g, v: int, cfg: SmoothingConfig,
             n0: int, n1: int, alpha: float) -> VoteTally:
    return estimate_all(classifier, g, [v], cfg, n0, n1, alpha)[int(v)]


def confidence_bounds(tally: VoteTally) -> tuple[float, float]:
    """Simultaneous (Bonferroni alpha/2) lower/upper bounds on the two classes."""
    p_lower = clopper_pearson(int(tally.counts[tally.y_star]), tally.n1,
                              tally.alpha / 2.0, "lower")
    p_upper = clopper_pearson(int(tally.counts[tally.y_tilde]), tally.n1,
                              tally.alpha / 2.0, "upper")
    return p_lower, p_upper


def certified_radius(
    tally: VoteTally,
    delta_curve: Callable[[int], DeltaBound],
    rho_max_scan: int,
    binary: bool = False,
) -> tuple[int, float, float, bool]:
    """Largest certified budget for one node under one arrival-bound curve.

    Abstains (radius 0) when the bounds overlap.  Otherwise budget rho is
    certified iff p_lower - delta(rho) > p_upper + delta(rho), or in binary
    mode iff p_lower - delta(rho) > 1/2.  The scan stops at the first
    failure; the curve is non-decreasing in rho so nothing beyond certifies.
    """
    p_lower, p_upper = confidence_bounds(tally)
    radius, abstain = _scan_radius(p_lower, p_upper, delta_curve,
                                   rho_max_scan, binary)
    return radius, p_lower, p_upper, abstain


def _scan_radius(p_lower, p_upper, delta_curve, rho_max_scan, binary) -> tuple[int, bool]:
    if p_lower <= p_upper:
        return 0, True
    radius = 0
    for rho in range(1, rho_max_scan + 1):
        delta = delta_curve(rho).value
        ok = (p_lower - delta > 0.5) if binary else \
            (p_lower - delta > p_upper + delta)
        if not ok:
            break
        radius = rho
    return radius, False


def certify(
    tally: VoteTally,
    delta_curves: Mapping[int, Callable[[int], DeltaBound]],
    rho_max_scan: int | Mapping[int, int],
    label: int | None = None,
    binary: bool = False,
) -> CertificateResult:
    """Certificate for one node across the requested minimum attacker distances.

    ``rho_max_scan`` may be a single scan bound or one per minimum distance
    (budgets beyond the attack surface are vacuous, so the surface size is
    the natural bound).
    """
    p_lower, p_upper = confidence_bounds(tally)
    radii: dict[int, int] = {}
    abstain = False
    for d_min in sorted(delta_curves):
        bound = (rho_max_scan[d_min] if isinstance(rho_max_scan, Mapping)
                 else rho_max_scan)
        radii[d_min], abstain = _scan_radius(
            p_lower, p_upper, delta_curves[d_min], bound, binary
        )
    correct = None if label is None else bool(tally.y_star == label and not abstain)
    return CertificateResult(
        node=tally.node, prediction=tally.y_star, abstain=abstain,
        p_lower=p_lower, p_upper=p_upper, certified_radius=radii,
        correct=correct,
    )


# ---------------------------------------------------------------------------
# summaries


def report(results, fields: Mapping[int, ReceptiveField]) -> dict:
    """Aggregate certificates into curves and scalar metrics.

    Emits, per minimum distance: the certified-ratio step curve over integer
    radii, the certified-accuracy curve (correct, non-abstaining, and
    certified), the normalized curve over radius / attack-surface size, and
    the areas under both.  The unnormalized area is the plain step sum over
    integer radii; the normalized area is a trapezoid over the node-specific
    breakpoints.  Nodes with an empty attack surface count as fully
    certified (normalized radius 1) unless they abstained.
    """
    results = list(results)
    if not results:
        raise ValueError("no results to report")
    d_mins = sorted({dm for r in results for dm in r.certified_radius})
    have_labels = all(r.correct is not None for r in results)

    summary: dict = {
        "nodes": len(results),
        "abstain_rate": float(np.mean([r.abstain for r in results])),
        "clean_accuracy": (
            float(np.mean([bool(r.correct) for r in results]))
            if have_labels else None
        ),
        "per_d_min": {},
        "conventions": {
            "aucrc": "sum of certified ratio over integer radii 0..max",
            "aucrc_normalized": "trapezoid over radius/attack-surface breakpoints in [0,1]",
            "attack_surface": "receptive-field members at hop distance >= d_min",
            "empty_surface": "normalized radius 1 unless abstained",
        },
    }

    for dm in d_mins:
        radii = np.array([r.certified_radius.get(dm, 0) for r in results])
        max_r = int(radii.max()) if len(radii) else 0
        ratio = [float(np.mean(radii >= r)) for r in range(max_r + 1)]
        entry: dict = {
            "certified_ratio": ratio,
            "aucrc": float(math.fsum(ratio)),
        }
        if have_labels:
            good = np.array([bool(r.correct) for r in results])
            entry["certified_accuracy"] = [
                float(np.mean(good & (radii >= r))) for r in range(max_r + 1)
            ]
            entry["aucrc_accuracy"] = float(math.fsum(entry["certified_accuracy"]))

        norm = []
        for res, r in zip(results, radii):
            surface = fields[res.node].attack_surface(dm)
            if surface > 0:
                norm.append(min(1.0, r / surface))
            else:
                norm.append(0.0 if res.abstain else 1.0)
        norm = np.array(norm)
        xs = sorted({0.0, 1.0, *map(float, norm)})
        ys = [float(np.mean(norm >= x)) for x in xs]
        entry["normalized_curve"] = {"x": xs, "ratio": ys}
        entry["aucrc_normalized"] = float(np.trapezoid(ys, xs))
        summary["per_d_min"][dm] = entry

    return summary
