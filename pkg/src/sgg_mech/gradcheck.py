"""Seeded gradient suite: every analytic loss gradient against central differences."""

from __future__ import annotations

from typing import Callable, Dict, List

import numpy as np

from .geometry import BoundingBox
from .losses import (
    GradCheckReport,
    bce_relation_loss,
    bce_relation_loss_grad,
    finite_diff_grad_check,
    focal_loss,
    focal_loss_grad,
    giou_loss,
    giou_loss_grad,
    l1_box_loss,
    l1_box_loss_grad,
    rrd_loss,
    rrd_loss_grad,
    vrd_loss,
    vrd_loss_grad,
)


def _random_box(rng) -> np.ndarray:
    x1, y1 = rng.uniform(0.0, 0.7, 2)
    w, h = rng.uniform(0.05, 0.3, 2)
    return np.array([x1, y1, x1 + w, y1 + h])


def _giou_branches(p: np.ndarray, g: np.ndarray):
    iw = min(p[2], g[2]) - max(p[0], g[0])
    ih = min(p[3], g[3]) - max(p[1], g[1])
    return (p[0] > g[0], p[1] > g[1], p[2] < g[2], p[3] < g[3], iw > 0, ih > 0)


def giou_kinks(p: np.ndarray, g: np.ndarray, step: float) -> np.ndarray:
    """Coordinates whose ±step perturbation switches a min/max branch."""
    base = _giou_branches(p, g)
    mask = np.zeros(4, dtype=bool)
    for k in range(4):
        for sign in (1.0, -1.0):
            q = p.copy()
            q[k] += sign * step * 2
            if _giou_branches(q, g) != base:
                mask[k] = True
    return mask


def _giou_case(rng, step, tol):
    g = _random_box(rng)
    if rng.random() < 0.7:
        # overlapping prediction
        p = g + rng.normal(0.0, 0.05, 4)
        p[2] = max(p[2], p[0] + 0.01)
        p[3] = max(p[3], p[1] + 0.01)
    else:
        p = _random_box(rng)
    return finite_diff_grad_check(
        lambda x: giou_loss(BoundingBox(*x), BoundingBox(*g)),
        lambda x: giou_loss_grad(x, g),
        p,
        step,
        tol,
        exclude=giou_kinks(p, g, step),
        name="giou_loss",
    )


def _l1_case(rng, step, tol):
    n = int(rng.integers(1, 5))
    gt = np.array([_random_box(rng) for _ in range(n)])
    # boxes are at least 0.05 wide, so this noise never inverts a corner pair
    pred = gt + rng.normal(0.0, 0.004, gt.shape)

    def loss(x):
        return l1_box_loss([BoundingBox(*b) for b in x], [BoundingBox(*b) for b in gt])

    return finite_diff_grad_check(
        loss, lambda x: l1_box_loss_grad(x, gt), pred, step, tol,
        exclude=np.abs(pred - gt) < 4 * step, name="l1_box_loss",
    )


def _focal_case(rng, step, tol):
    y = float(rng.uniform(0.05, 0.99))
    alpha = float(rng.uniform(0.1, 1.0))
    gamma = float(rng.uniform(0.0, 3.0))
    return finite_diff_grad_check(
        lambda x: focal_loss(float(x[0]), alpha, gamma),
        lambda x: np.array([focal_loss_grad(float(x[0]), alpha, gamma)]),
        np.array([y]),
        step,
        tol,
        name="focal_loss",
    )


def _bce_case(rng, step, tol):
    shape = tuple(int(s) for s in rng.integers(1, 5, 2))
    pred = rng.uniform(0.05, 0.95, shape)
    gt = (rng.random(shape) < 0.5).astype(float)
    return finite_diff_grad_check(
        lambda x: bce_relation_loss(x, gt),
        lambda x: bce_relation_loss_grad(x, gt),
        pred,
        step,
        tol,
        name="bce_relation_loss",
    )


def _vrd_case(rng, step, tol):
    n, d = int(rng.integers(1, 9)), int(rng.integers(2, 17))
    teacher = rng.standard_normal((n, d))
    student = teacher + rng.standard_normal((n, d))
    return finite_diff_grad_check(
        lambda x: vrd_loss(x, teacher),
        lambda x: vrd_loss_grad(x, teacher),
        student,
        step,
        tol,
        exclude=np.abs(student - teacher) < 4 * step,
        name="vrd_loss",
    )


def _rrd_case(rng, step, tol):
    n, d = int(rng.integers(2, 9)), int(rng.integers(2, 17))
    teacher = rng.standard_normal((n, d))
    student = rng.standard_normal((n, d))
    return finite_diff_grad_check(
        lambda x: rrd_loss(x, teacher),
        lambda x: rrd_loss_grad(x, teacher),
        student,
        step,
        tol,
        name="rrd_loss",
    )


CASES: Dict[str, Callable] = {
    "giou_loss": _giou_case,
    "focal_loss": _focal_case,
    "bce_relation_loss": _bce_case,
    "vrd_loss": _vrd_case,
    "rrd_loss": _rrd_case,
    "l1_box_loss": _l1_case,
}


def run_gradient_suite(seed: int = 0, points: int = 100, step: float = 1e-6, tolerance: float = 1e-4) -> List[GradCheckReport]:
    """Worst-case report per loss over ``points`` seeded random inputs."""
    out = []
    for index, (name, case) in enumerate(CASES.items()):
        rng = np.random.default_rng([seed, index])
        worst = None
        checked = excluded = 0
        for _ in range(points):
            r = case(rng, step, tolerance)
            checked += r.checked
            excluded += r.excluded
            if worst is None or r.max_rel_error > worst.max_rel_error:
                worst = r
        out.append(GradCheckReport(name, worst.max_rel_error, tolerance, checked, excluded))
    return out
