"""Training objectives with closed-form gradients.

Every differentiable loss here has a ``*_grad`` companion returning the
gradient with respect to its prediction argument (student features for the
distillation terms). :func:`finite_diff_grad_check` compares the two.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import (
    EmptyInput,
    EmptyNegativeSet,
    InvalidPair,
    InvalidProbability,
    LengthMismatch,
    MissingFeature,
    NonFiniteComponent,
    ShapeMismatch,
    TooFewEdges,
)
from .geometry import BoundingBox, giou_terms


@dataclass
class EdgeFeature:
    vector: np.ndarray
    pair: Tuple[int, int]
    is_negative: bool = False

    def __post_init__(self):
        self.vector = np.asarray(self.vector, dtype=float)
        if self.pair[0] == self.pair[1]:
            raise InvalidPair(f"edge pair {self.pair} links a node to itself")
        if not np.all(np.isfinite(self.vector)):
            raise ValueError("edge feature has non-finite entries")


@dataclass(frozen=True)
class LossWeights:
    beta1: float = 0.1
    beta2: float = 0.5
    alpha_focal: float = 0.25
    gamma_focal: float = 2.0
    match_weights: Tuple[float, float, float] = (2.0, 5.0, 2.0)

    def __post_init__(self):
        values = (self.beta1, self.beta2, self.alpha_focal, self.gamma_focal) + tuple(self.match_weights)
        if any(v < 0 for v in values):
            raise ValueError("loss weights must be nonnegative")


EdgeInput = Union[Sequence[EdgeFeature], np.ndarray]


def _box_array(boxes: Sequence[BoundingBox]) -> np.ndarray:
    return np.array([b.as_list() for b in boxes], dtype=float).reshape(-1, 4)


def _edge_array(edges: EdgeInput) -> np.ndarray:
    if isinstance(edges, np.ndarray):
        return np.atleast_2d(edges).astype(float)
    if len(edges) == 0:
        return np.zeros((0, 0))
    return np.stack([e.vector for e in edges])


def negative_edges(edges: Iterable[EdgeFeature]) -> List[EdgeFeature]:
    return [e for e in edges if e.is_negative]


# --------------------------------------------------------------------------- boxes


def l1_box_loss(pred_boxes: Sequence[BoundingBox], gt_boxes: Sequence[BoundingBox]) -> float:
    """Mean over boxes of the L1 norm of the coordinate difference."""
    if len(pred_boxes) != len(gt_boxes):
        raise LengthMismatch(f"{len(pred_boxes)} predicted vs {len(gt_boxes)} ground-truth boxes")
    if not pred_boxes:
        raise EmptyInput("l1_box_loss needs at least one box")
    diff = _box_array(pred_boxes) - _box_array(gt_boxes)
    return float(np.abs(diff).sum(axis=1).mean())


def l1_box_loss_grad(pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """Gradient of :func:`l1_box_loss` w.r.t. an ``(N, 4)`` prediction array."""
    pred = np.asarray(pred, dtype=float).reshape(-1, 4)
    gt = np.asarray(gt, dtype=float).reshape(-1, 4)
    return np.sign(pred - gt) / len(pred)


def giou_loss(pred: BoundingBox, gt: BoundingBox) -> float:
    """``1 - A_inter/A_union + (A_min - A_union)/A_min``, with 0/0 read as 0."""
    inter, union, enclosing = giou_terms(pred, gt)
    iou_term = inter / union if union > 0 else 0.0
    penalty = (enclosing - union) / enclosing if enclosing > 0 else 0.0
    return 1.0 - iou_term + penalty


def giou_loss_grad(pred, gt) -> np.ndarray:
    """Gradient of :func:`giou_loss` w.r.t. the four predicted coordinates.

    At ties between edges (min/max switches) the one-sided branch taken is the
    one where the predicted edge does not win.
    """
    px1, py1, px2, py2 = _coords(pred)
    gx1, gy1, gx2, gy2 = _coords(gt)
    pw, ph = px2 - px1, py2 - py1
    area_p = pw * ph
    area_g = (gx2 - gx1) * (gy2 - gy1)

    iw = min(px2, gx2) - max(px1, gx1)
    ih = min(py2, gy2) - max(py1, gy1)
    overlap = iw > 0 and ih > 0
    inter = iw * ih if overlap else 0.0
    union = area_p + area_g - inter
    ew = max(px2, gx2) - min(px1, gx1)
    eh = max(py2, gy2) - min(py1, gy1)
    enclosing = ew * eh

    d_area = np.array([-ph, -pw, ph, pw])
    d_iw = np.array([-1.0 if px1 > gx1 else 0.0, 0.0, 1.0 if px2 < gx2 else 0.0, 0.0])
    d_ih = np.array([0.0, -1.0 if py1 > gy1 else 0.0, 0.0, 1.0 if py2 < gy2 else 0.0])
    d_inter = (d_iw * ih + d_ih * iw) if overlap else np.zeros(4)
    d_union = d_area - d_inter
    d_ew = np.array([-1.0 if px1 < gx1 else 0.0, 0.0, 1.0 if px2 > gx2 else 0.0, 0.0])
    d_eh = np.array([0.0, -1.0 if py1 < gy1 else 0.0, 0.0, 1.0 if py2 > gy2 else 0.0])
    d_enclosing = d_ew * eh + d_eh * ew

    # loss = 2 - inter/union - union/enclosing
    grad = np.zeros(4)
    if union > 0:
        grad -= (d_inter * union - inter * d_union) / union**2
    if enclosing > 0:
        grad -= (d_union * enclosing - union * d_enclosing) / enclosing**2
    return grad


def _coords(b) -> Tuple[float, float, float, float]:
    if isinstance(b, BoundingBox):
        return b.x1, b.y1, b.x2, b.y2
    x1, y1, x2, y2 = (float(v) for v in b)
    return x1, y1, x2, y2


# --------------------------------------------------------------------------- classification


def focal_loss(y_c: float, alpha: float = 0.25, gamma_focal: float = 2.0) -> float:
    """``-alpha * (1 - y_c)**gamma_focal * ln(y_c)`` for the true-class probability ``y_c``."""
    if not (0.0 < y_c <= 1.0):
        raise InvalidProbability(f"true-class probability {y_c} outside (0, 1]")
    return -alpha * (1.0 - y_c) ** gamma_focal * math.log(y_c)


def focal_loss_grad(y_c: float, alpha: float = 0.25, gamma_focal: float = 2.0) -> float:
    if not (0.0 < y_c <= 1.0):
        raise InvalidProbability(f"true-class probability {y_c} outside (0, 1]")
    q = 1.0 - y_c
    grad = -alpha * q**gamma_focal / y_c
    if gamma_focal != 0.0 and q > 0.0:
        grad += alpha * gamma_focal * q ** (gamma_focal - 1.0) * math.log(y_c)
    return grad


def _check_bce(pred, gt):
    pred = np.asarray(pred, dtype=float)
    gt = np.asarray(gt, dtype=float)
    if pred.shape != gt.shape:
        raise ShapeMismatch(f"prediction shape {pred.shape} vs target shape {gt.shape}")
    if pred.size == 0:
        raise EmptyInput("bce_relation_loss needs at least one entry")
    if np.any(pred <= 0.0) or np.any(pred >= 1.0):
        raise InvalidProbability("relation probabilities must lie strictly inside (0, 1)")
    if np.any((gt != 0.0) & (gt != 1.0)):
        raise InvalidProbability("relation targets must be binary")
    return pred, gt


def bce_relation_loss(pred, gt) -> float:
    """Binary cross-entropy averaged over all relation entries."""
    pred, gt = _check_bce(pred, gt)
    terms = gt * np.log(pred) + (1.0 - gt) * np.log1p(-pred)
    return float(-terms.sum() / pred.size)


def bce_relation_loss_grad(pred, gt) -> np.ndarray:
    pred, gt = _check_bce(pred, gt)
    return -(gt / pred - (1.0 - gt) / (1.0 - pred)) / pred.size


# --------------------------------------------------------------------------- edges & distillation


def build_edge_features(
    queries: Sequence,
    pairs: Sequence[Tuple[int, int]],
    global_rel: Optional[np.ndarray] = None,
    negative_pairs: Optional[Iterable[Tuple[int, int]]] = None,
) -> List[EdgeFeature]:
    """Concatenate subject and object query features per pair.

    ``global_rel`` (one feature-sized vector) is added to both halves.
    Pairs listed in ``negative_pairs`` are flagged as background.
    """
    negatives = set(map(tuple, negative_pairs or ()))
    out = []
    for i, j in pairs:
        if i == j:
            raise InvalidPair(f"edge pair ({i}, {j}) links a node to itself")
        fi, fj = queries[i].feature, queries[j].feature
        if fi is None or fj is None:
            raise MissingFeature(f"query {i if fi is None else j} has no feature")
        fi = np.asarray(fi, dtype=float)
        fj = np.asarray(fj, dtype=float)
        if fi.shape != fj.shape:
            raise MissingFeature(f"queries {i} and {j} have features of different size")
        if global_rel is not None:
            g = np.asarray(global_rel, dtype=float)
            fi = fi + g
            fj = fj + g
        out.append(EdgeFeature(np.concatenate([fi, fj]), (i, j), (i, j) in negatives))
    return out


def _paired(student: EdgeInput, teacher: EdgeInput) -> Tuple[np.ndarray, np.ndarray]:
    s = _edge_array(student)
    t = _edge_array(teacher)
    if s.shape[0] != t.shape[0]:
        raise LengthMismatch(f"{s.shape[0]} student vs {t.shape[0]} teacher edges")
    if s.shape != t.shape:
        raise ShapeMismatch(f"student edges {s.shape} vs teacher edges {t.shape}")
    return s, t


def vrd_loss(student: EdgeInput, teacher: EdgeInput) -> float:
    """Mean L1 distance between aligned student and teacher negative edges."""
    s, t = _paired(student, teacher)
    if s.shape[0] == 0:
        raise EmptyNegativeSet("vrd_loss needs at least one negative edge")
    return float(np.abs(s - t).sum(axis=1).mean())


def vrd_loss_grad(student: EdgeInput, teacher: EdgeInput) -> np.ndarray:
    s, t = _paired(student, teacher)
    if s.shape[0] == 0:
        raise EmptyNegativeSet("vrd_loss needs at least one negative edge")
    return np.sign(s - t) / s.shape[0]


def cosine_sim_matrix(edges: EdgeInput) -> np.ndarray:
    """Pairwise cosine similarities; entries involving a zero vector are 0."""
    e = _edge_array(edges)
    if e.shape[0] < 2:
        raise TooFewEdges("cosine similarity matrix needs at least two edges")
    norms = np.linalg.norm(e, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    unit = e / safe[:, None]
    m = unit @ unit.T
    zero = norms == 0
    m[zero, :] = 0.0
    m[:, zero] = 0.0
    return m


def rrd_loss(student: EdgeInput, teacher: EdgeInput) -> float:
    """Squared Frobenius distance between cosine structure matrices over ``|N|**2``."""
    s, t = _paired(student, teacher)
    if s.shape[0] < 2:
        raise TooFewEdges("rrd_loss needs at least two edges")
    diff = cosine_sim_matrix(s) - cosine_sim_matrix(t)
    return float((diff**2).sum() / s.shape[0] ** 2)


def rrd_loss_grad(student: EdgeInput, teacher: EdgeInput) -> np.ndarray:
    s, t = _paired(student, teacher)
    n = s.shape[0]
    if n < 2:
        raise TooFewEdges("rrd_loss needs at least two edges")
    m_s = cosine_sim_matrix(s)
    g = 2.0 * (m_s - cosine_sim_matrix(t)) / n**2
    np.fill_diagonal(g, 0.0)
    norms = np.linalg.norm(s, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    unit = s / safe[:, None]
    # d cos(e_i, e_j) / d e_i = (u_j - cos_ij * u_i) / |e_i|; entries (i, j) and (j, i) both depend on e_i
    grad = 2.0 * (g @ unit - (g * m_s).sum(axis=1)[:, None] * unit) / safe[:, None]
    grad[norms == 0] = 0.0
    return grad


# --------------------------------------------------------------------------- combined objective


@dataclass(frozen=True)
class LossComponents:
    reg: float = 0.0
    giou: float = 0.0
    obj: float = 0.0
    rel: float = 0.0
    vrd: float = 0.0
    rrd: float = 0.0


def total_loss(components: Union[LossComponents, Mapping[str, float]], weights: LossWeights = LossWeights()) -> float:
    if isinstance(components, Mapping):
        components = LossComponents(**components)
    values = (components.reg, components.giou, components.obj, components.rel, components.vrd, components.rrd)
    if not all(math.isfinite(v) for v in values):
        raise NonFiniteComponent(f"non-finite loss component in {components}")
    return (
        components.reg
        + components.giou
        + components.obj
        + components.rel
        + weights.beta1 * components.vrd
        + weights.beta2 * components.rrd
    )


# --------------------------------------------------------------------------- gradient checking


@dataclass
class GradCheckReport:
    name: str
    max_rel_error: float
    tolerance: float
    checked: int
    excluded: int = 0
    analytic: Optional[np.ndarray] = field(default=None, repr=False)
    numeric: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def central_difference(loss_fn: Callable[[np.ndarray], float], point, step: float = 1e-6, mask=None) -> np.ndarray:
    x0 = np.array(point, dtype=float)
    grad = np.zeros_like(x0)
    flat = grad.reshape(-1)
    xf = x0.reshape(-1)
    keep = np.ones(xf.size, dtype=bool) if mask is None else np.asarray(mask, dtype=bool).reshape(-1)
    for k in range(xf.size):
        if not keep[k]:
            continue
        orig = xf[k]
        xf[k] = orig + step
        f_plus = loss_fn(x0)
        xf[k] = orig - step
        f_minus = loss_fn(x0)
        xf[k] = orig
        flat[k] = (f_plus - f_minus) / (2.0 * step)
    return grad


def finite_diff_grad_check(
    loss_fn: Callable[[np.ndarray], float],
    grad_fn: Callable[[np.ndarray], np.ndarray],
    point,
    step: float = 1e-6,
    tolerance: float = 1e-4,
    exclude=None,
    name: str = "",
) -> GradCheckReport:
    """Compare ``grad_fn(point)`` with central differences of ``loss_fn``.

    ``exclude`` is an optional boolean mask of coordinates sitting on or near
    a kink; they are skipped. The error is the largest absolute disagreement
    divided by the largest gradient magnitude.
    """
    if step <= 0:
        raise ValueError("finite-difference step must be positive")
    x = np.array(point, dtype=float)
    keep = np.ones(x.shape, dtype=bool)
    if exclude is not None:
        keep &= ~np.asarray(exclude, dtype=bool).reshape(x.shape)
    analytic = np.asarray(grad_fn(x.copy()), dtype=float).reshape(x.shape)
    numeric = central_difference(loss_fn, x, step, keep)
    if not keep.any():
        return GradCheckReport(name, 0.0, tolerance, 0, int(x.size), analytic, numeric)
    a = analytic[keep]
    n = numeric[keep]
    scale = max(float(np.abs(a).max()), float(np.abs(n).max()), 1e-12)
    err = float(np.abs(a - n).max()) / scale
    return GradCheckReport(name, err, tolerance, int(keep.sum()), int((~keep).sum()), analytic, numeric)
