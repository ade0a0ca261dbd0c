"""Affordance-map metrics and the analytic pinch-success protocol.

KLD is taken as KL(gt || pred), the usual saliency-benchmark direction:
``sum_i gt_i * ln(gt_i / (pred_i + eta))`` with ``eta = 1e-12``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import DegenerateLabels, ShapeMismatch, UnassignedPart
from .grasp import DEFAULT_GRASP_CONFIG, GraspCandidate, label_grasp

KLD_ETA = 1e-12
DEFAULT_GRIPPER = {"max_width": 0.08, "max_force": 1000.0, "same_surface_angle_deg": 30.0}


@dataclass(frozen=True)
class MetricsReport:
    kld: float
    sim: float
    auc_j: float


@dataclass(frozen=True)
class SuccessReport:
    top1: float
    top5: float
    topn: float
    n: int
    ranks: tuple = field(default=())  # 1-based rank of first success per instance, 0 = none


def _pair(pred, gt) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(getattr(pred, "prob", pred), dtype=np.float64).reshape(-1)
    g = np.asarray(getattr(gt, "prob", gt), dtype=np.float64).reshape(-1)
    if p.shape != g.shape:
        raise ShapeMismatch(f"prediction has {p.size} values, ground truth {g.size}")
    return p, g


def kld(pred, gt, eta: float = KLD_ETA) -> float:
    p, g = _pair(pred, gt)
    mask = g > 0
    return float(np.sum(g[mask] * np.log(g[mask] / (p[mask] + eta))))


def sim(pred, gt) -> float:
    p, g = _pair(pred, gt)
    return float(np.minimum(p, g).sum())


def auc_j(pred, gt, threshold: float | None = None) -> float:
    """Ranking AUC of ``pred`` against the positives ``gt > threshold``.

    ``threshold`` defaults to the uniform level ``1/n``.  The ROC curve is
    swept over every distinct prediction value and integrated with the
    trapezoidal rule, so ties are handled exactly (a constant map scores 0.5).
    """
    p, g = _pair(pred, gt)
    thr = 1.0 / g.size if threshold is None else threshold
    pos = g > thr
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabels(f"ground truth has {n_pos} positives and {n_neg} negatives")
    order = np.argsort(-p, kind="stable")
    ps, labs = p[order], pos[order]
    # last index of each distinct value (descending) closes one ROC step
    ends = np.r_[np.flatnonzero(np.diff(ps) != 0), ps.size - 1]
    tp = np.cumsum(labs)[ends]
    fp = np.cumsum(~labs)[ends]
    tpr = np.r_[0.0, tp / n_pos]
    fpr = np.r_[0.0, fp / n_neg]
    return float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1]) / 2.0))


def map_metrics(pred, gt, eta: float = KLD_ETA, threshold: float | None = None) -> MetricsReport:
    return MetricsReport(kld(pred, gt, eta), sim(pred, gt), auc_j(pred, gt, threshold))


# ---------------------------------------------------------------------------
# pinch evaluation


def is_same_surface(candidate: GraspCandidate, max_angle_deg: float = 30.0) -> bool:
    c1, c2 = candidate.contact1, candidate.contact2
    if c1.face >= 0 and c1.face == c2.face:
        return True
    n1 = np.asarray(c1.normal, dtype=np.float64)
    n2 = np.asarray(c2.normal, dtype=np.float64)
    cosang = np.dot(n1, n2) / (np.linalg.norm(n1) * np.linalg.norm(n2))
    return bool(cosang >= math.cos(math.radians(max_angle_deg)))


def quasi_static_success(candidate: GraspCandidate, instance, gripper: Mapping | None = None,
                         grasp_config: Mapping | None = None) -> bool:
    """Analytic pinch test: width gate, same-surface rejection, then force closure.

    Force caps are ``min(material cap, gripper max_force)``.  ``instance`` needs
    ``mass_props`` and ``assignments`` (an ``InstanceSpec`` or equivalent).
    """
    g = {**DEFAULT_GRIPPER, **(gripper or {})}
    if not np.all(np.isfinite(candidate.contact1.position)) or not np.all(np.isfinite(candidate.contact2.position)):
        return False
    width = candidate.width
    if not 0.0 < width <= g["max_width"]:
        return False
    if is_same_surface(candidate, g["same_surface_angle_deg"]):
        return False
    cfg = {**DEFAULT_GRASP_CONFIG, **(grasp_config or {}), "disturbances": []}
    try:
        label = label_grasp(candidate, instance.mass_props, instance.assignments, cfg,
                            max_force=g["max_force"])
    except UnassignedPart:
        return False  # contact on a part the instance has no material for
    return bool(label.feasible)


def topn_success(predictions: Sequence[Sequence[GraspCandidate]], instances, n: int = 1,
                 gripper: Mapping | None = None, grasp_config: Mapping | None = None) -> SuccessReport:
    """Per instance, success iff one of the first ``n`` candidates passes the pinch test."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if len(predictions) != len(instances):
        raise ShapeMismatch("one ranked candidate list per instance is required")
    depth = max(n, 5)
    ranks = []
    for cands, inst in zip(predictions, instances):
        rank = 0
        for k, cand in enumerate(list(cands)[:depth], 1):
            if quasi_static_success(cand, inst, gripper, grasp_config):
                rank = k
                break
        ranks.append(rank)
    r = np.array(ranks)
    if r.size == 0:
        return SuccessReport(0.0, 0.0, 0.0, n, ())
    hit = lambda k: float(np.mean((r >= 1) & (r <= k)))
    return SuccessReport(hit(1), hit(5), hit(n), n, tuple(int(x) for x in r))
