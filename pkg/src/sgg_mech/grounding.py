"""Pseudo-supervision: a mock phrase grounder and rule-based pair combination."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import List, Sequence

from .errors import MalformedRecord
from .geometry import BoundingBox, iou
from .text import Triplet

DEFAULT_CONF_THRESHOLD = 0.25
DEFAULT_IOU_THRESHOLD = 0.0
DEFAULT_INTERACTION_BONUS = 0.3


@dataclass(frozen=True)
class Detection:
    box: BoundingBox
    phrase: str
    score: float

    def __post_init__(self):
        if not self.phrase:
            raise ValueError("detection phrase must be non-empty")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"detection score {self.score} outside [0, 1]")


@dataclass(frozen=True)
class PseudoLabel:
    triplet: Triplet
    iou: float
    subject_score: float
    object_score: float


def _mentions(prompt: str, phrase: str) -> bool:
    return re.search(r"(?<![a-z])" + re.escape(phrase) + r"(?![a-z])", prompt) is not None


def mock_ground(scene, prompt: str, interaction_bonus: float = DEFAULT_INTERACTION_BONUS) -> List[Detection]:
    """Stand-in grounder over a synthetic scene.

    Every instance whose category is mentioned in ``prompt`` is detected with
    its base score; instances taking part in an interaction whose predicate is
    also mentioned get ``interaction_bonus`` on top. Scores are clamped to [0, 1].
    """
    prompt = prompt.lower()
    predicates = {t_id: t.predicate for t_id, t in enumerate(scene.gt_triplets)}
    out = []
    for inst in scene.instances:
        if not _mentions(prompt, inst.category):
            continue
        score = inst.base_score
        if inst.interacting and _mentions(prompt, predicates[inst.interaction_id]):
            score += interaction_bonus
        score = min(1.0, max(0.0, score))
        out.append(Detection(inst.box, inst.category, score))
    return out


def combine_pairs(
    subjects: Sequence[Detection],
    objects: Sequence[Detection],
    conf_threshold: float = DEFAULT_CONF_THRESHOLD,
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
    predicate: str = "",
) -> List[PseudoLabel]:
    """Pair confident, overlapping subject/object detections into pseudo-labels.

    Both scores must exceed ``conf_threshold`` and the boxes' IoU must exceed
    ``iou_threshold`` (strictly). Output is ordered by descending
    ``min(subject_score, object_score)``, then descending IoU, then input order.
    """
    ranked = []
    for si, s in enumerate(subjects):
        if not s.score > conf_threshold:
            continue
        for oi, o in enumerate(objects):
            if o is s or not o.score > conf_threshold:
                continue
            overlap = iou(s.box, o.box)
            if overlap > iou_threshold:
                t = Triplet(s.phrase, predicate or "related to", o.phrase, s.box, o.box)
                key = (-min(s.score, o.score), -overlap, si, oi)
                ranked.append((key, PseudoLabel(t, overlap, s.score, o.score)))
    ranked.sort(key=lambda item: item[0])
    return [label for _, label in ranked]


def pseudo_label_record(label: PseudoLabel) -> dict:
    t = label.triplet
    return {
        "subject": t.subject,
        "predicate": t.predicate,
        "object": t.object,
        "sbox": t.subject_box.as_list(),
        "obox": t.object_box.as_list(),
        "sscore": label.subject_score,
        "oscore": label.object_score,
        "iou": label.iou,
    }


def serialize_pseudo_labels(labels: Sequence[PseudoLabel], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for label in labels:
            f.write(json.dumps(pseudo_label_record(label)) + "\n")


def deserialize_pseudo_labels(path) -> List[PseudoLabel]:
    out = []
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                t = Triplet(
                    rec["subject"],
                    rec["predicate"],
                    rec["object"],
                    BoundingBox.from_seq(rec["sbox"]),
                    BoundingBox.from_seq(rec["obox"]),
                )
                out.append(PseudoLabel(t, float(rec["iou"]), float(rec["sscore"]), float(rec["oscore"])))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise MalformedRecord(line_no, str(exc)) from exc
    return out
