"""SGDet scoring: triplet matching, R@K, mR@K and base/novel split reports."""

from __future__ import annotations

import csv
import json
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Dict, Iterable, List, Mapping, Sequence, Tuple

from .errors import MalformedRecord, MissingBox, TooLarge, UnknownSplit
from .geometry import iou
from .text import Triplet, Vocabulary

DEFAULT_KS = (20, 50, 100)


class SplitSpec(str, Enum):
    JOINT = "JointBaseNovel"
    NOVEL_OBJECT = "NovelObject"
    NOVEL_RELATION = "NovelRelation"
    BASE_RELATION = "BaseRelation"
    BASE_OBJECT = "BaseObject"


@dataclass(frozen=True)
class RankedPrediction:
    triplet: Triplet
    score: float

    def __post_init__(self):
        if not self.triplet.has_boxes:
            raise MissingBox("ranked predictions need subject and object boxes")
        if self.score != self.score or self.score in (float("inf"), float("-inf")):
            raise ValueError("prediction score must be finite")


@dataclass
class RecallReport:
    values: Dict[str, Dict[str, float]] = field(default_factory=dict)
    gt_counts: Dict[str, int] = field(default_factory=dict)

    def rows(self) -> List[Tuple[str, str, int, float]]:
        out = []
        for split, metrics in self.values.items():
            for name, value in metrics.items():
                metric, k = name.split("@")
                out.append((split, metric, int(k), value))
        return out

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["split", "metric", "K", "value"])
            for split, metric, k, value in self.rows():
                w.writerow([split, metric, k, f"{value:.6f}"])


def triplet_match(pred: Triplet, gt: Triplet, iou_thresh: float = 0.5) -> bool:
    if not (pred.has_boxes and gt.has_boxes):
        raise MissingBox("triplet_match needs boxes on both triplets")
    if pred.labels != gt.labels:
        return False
    return iou(pred.subject_box, gt.subject_box) >= iou_thresh and iou(pred.object_box, gt.object_box) >= iou_thresh


def rank(preds: Sequence[RankedPrediction]) -> List[RankedPrediction]:
    return sorted(preds, key=lambda p: -p.score)


def recall_at_k(preds: Sequence[RankedPrediction], gts: Sequence[Triplet], k: int, iou_thresh: float = 0.5) -> float:
    """Greedy rank-order matching of the top-``k`` predictions; each GT is consumed once."""
    if k < 1:
        raise ValueError("K must be at least 1")
    if not gts:
        return 1.0
    consumed = [False] * len(gts)
    hits = 0
    for p in rank(preds)[:k]:
        for g_idx, g in enumerate(gts):
            if not consumed[g_idx] and triplet_match(p.triplet, g, iou_thresh):
                consumed[g_idx] = True
                hits += 1
                break
    return hits / len(gts)


def mean_recall_at_k(preds: Sequence[RankedPrediction], gts: Sequence[Triplet], k: int, iou_thresh: float = 0.5) -> float:
    if not gts:
        return 1.0
    by_predicate: Dict[str, List[Triplet]] = defaultdict(list)
    for g in gts:
        by_predicate[g.predicate].append(g)
    recalls = [recall_at_k(preds, group, k, iou_thresh) for _, group in sorted(by_predicate.items())]
    return sum(recalls) / len(recalls)


def oracle_recall(preds: Sequence[RankedPrediction], gts: Sequence[Triplet], k: int, iou_thresh: float = 0.5) -> float:
    """Best achievable matched-GT fraction over all one-to-one matchings of the top-``k``."""
    if len(gts) > 8 or k > 12:
        raise TooLarge("oracle_recall is limited to 8 ground truths and K <= 12")
    if not gts:
        return 1.0
    top = rank(preds)[:k]
    compatible = [[triplet_match(p.triplet, g, iou_thresh) for p in top] for g in gts]

    @lru_cache(maxsize=None)
    def best(g_idx: int, used: int) -> int:
        if g_idx == len(gts):
            return 0
        result = best(g_idx + 1, used)
        for p_idx, ok in enumerate(compatible[g_idx]):
            if ok and not used & (1 << p_idx):
                result = max(result, 1 + best(g_idx + 1, used | (1 << p_idx)))
        return result

    return best(0, 0) / len(gts)


def split_filter(gts: Iterable[Triplet], vocab: Vocabulary, split, object_novelty: str = "or") -> List[Triplet]:
    """Keep the ground truths that belong to ``split``.

    ``object_novelty`` decides whether a triplet counts as novel-object when
    either (``"or"``) or both (``"and"``) of its entities are novel.
    """
    try:
        split = SplitSpec(split)
    except ValueError as exc:
        raise UnknownSplit(str(split)) from exc
    if object_novelty not in ("or", "and"):
        raise ValueError(f"object_novelty must be 'or' or 'and', got {object_novelty!r}")
    combine = any if object_novelty == "or" else all

    def novel_object(t: Triplet) -> bool:
        return combine((vocab.is_novel_object(t.subject), vocab.is_novel_object(t.object)))

    gts = list(gts)
    if split is SplitSpec.JOINT:
        return gts
    if split is SplitSpec.NOVEL_RELATION:
        return [t for t in gts if vocab.is_novel_predicate(t.predicate)]
    if split is SplitSpec.BASE_RELATION:
        return [t for t in gts if not vocab.is_novel_predicate(t.predicate)]
    if split is SplitSpec.NOVEL_OBJECT:
        return [t for t in gts if novel_object(t)]
    return [t for t in gts if not novel_object(t)]


def evaluate(
    preds_by_image: Mapping[object, Sequence[RankedPrediction]],
    gts_by_image: Mapping[object, Sequence[Triplet]],
    vocab: Vocabulary,
    splits: Sequence = tuple(SplitSpec),
    ks: Sequence[int] = DEFAULT_KS,
    iou_thresh: float = 0.5,
    object_novelty: str = "or",
) -> RecallReport:
    """Per-split R@K and mR@K, macro-averaged over images that have ground truth.

    mR@K averages, per predicate, the per-image recalls of images containing
    that predicate, then averages over predicates.
    """
    report = RecallReport()
    images = sorted(gts_by_image, key=str)
    for split in splits:
        name = SplitSpec(split).value
        recall_sums = {k: 0.0 for k in ks}
        per_pred: Dict[str, Dict[int, List[float]]] = defaultdict(lambda: {k: [] for k in ks})
        n_images = 0
        n_gts = 0
        for image in images:
            gts = split_filter(gts_by_image[image], vocab, split, object_novelty)
            if not gts:
                continue
            n_images += 1
            n_gts += len(gts)
            preds = preds_by_image.get(image, [])
            for k in ks:
                recall_sums[k] += recall_at_k(preds, gts, k, iou_thresh)
            for predicate in sorted({g.predicate for g in gts}):
                group = [g for g in gts if g.predicate == predicate]
                for k in ks:
                    per_pred[predicate][k].append(recall_at_k(preds, group, k, iou_thresh))
        metrics: Dict[str, float] = {}
        for k in ks:
            metrics[f"R@{k}"] = recall_sums[k] / n_images if n_images else 1.0
        for k in ks:
            if per_pred:
                means = [sum(v[k]) / len(v[k]) for _, v in sorted(per_pred.items())]
                metrics[f"mR@{k}"] = sum(means) / len(means)
            else:
                metrics[f"mR@{k}"] = 1.0
        report.values[name] = metrics
        report.gt_counts[name] = n_gts
    return report


# --------------------------------------------------------------------------- files


def read_predictions_jsonl(path) -> Dict[object, List[RankedPrediction]]:
    out: Dict[object, List[RankedPrediction]] = defaultdict(list)
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                pred = RankedPrediction(Triplet.from_dict(rec["triplet"]), float(rec["score"]))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise MalformedRecord(line_no, str(exc)) from exc
            out[rec.get("image_id")].append(pred)
    return dict(out)


def read_ground_truth_jsonl(path) -> Dict[object, List[Triplet]]:
    """Ground truth in the prediction record shape, with ``score`` optional."""
    out: Dict[object, List[Triplet]] = defaultdict(list)
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                t = Triplet.from_dict(rec["triplet"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise MalformedRecord(line_no, str(exc)) from exc
            if not t.has_boxes:
                raise MalformedRecord(line_no, "ground-truth triplet without boxes")
            out[rec.get("image_id")].append(t)
    return dict(out)


def write_predictions_jsonl(preds_by_image: Mapping[object, Sequence[RankedPrediction]], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for image, preds in preds_by_image.items():
            for p in preds:
                f.write(json.dumps({"triplet": p.triplet.to_dict(), "score": p.score, "image_id": image}) + "\n")
