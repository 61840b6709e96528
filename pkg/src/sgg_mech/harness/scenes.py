"""Seeded synthetic scenes and a deterministic stand-in embedding model.

Randomness comes from numpy's PCG64. Scene ``i`` of a run draws from the
substream seeded by ``SeedSequence([master_seed, i])``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from ..errors import ConfigInvalid, UnknownCategory
from ..geometry import BoundingBox
from ..selection import TokenMatrix
from ..text import Triplet
from .config import ExperimentConfig


def scene_seed(master_seed: int, index: int) -> int:
    """64-bit substream seed for scene ``index`` of a run."""
    return int(np.random.SeedSequence([master_seed, index]).generate_state(1, np.uint64)[0])


def rng_for(*key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(list(key))))


@dataclass(frozen=True)
class Instance:
    category_id: int
    category: str
    box: BoundingBox
    interacting: bool
    interaction_id: int = -1
    base_score: float = 0.5


@dataclass
class SyntheticScene:
    width: float
    height: float
    instances: List[Instance]
    gt_triplets: List[Triplet]
    seed: int
    background_tokens: int = 0

    def interacting_indices(self) -> List[int]:
        return [i for i, inst in enumerate(self.instances) if inst.interacting]

    def gt_pairs(self) -> List[Tuple[int, int]]:
        """(subject_instance, object_instance) per GT triplet, in triplet order."""
        out = []
        for t_id in range(len(self.gt_triplets)):
            members = [i for i, inst in enumerate(self.instances) if inst.interacting and inst.interaction_id == t_id]
            out.append((members[0], members[1]))
        return out

    def check(self) -> None:
        """Raise ``AssertionError`` if the scene breaks its invariants."""
        for t_id, t in enumerate(self.gt_triplets):
            s, o = self.gt_pairs()[t_id]
            assert self.instances[s].box == t.subject_box and self.instances[o].box == t.object_box
        used = {i for pair in self.gt_pairs() for i in pair}
        for i, inst in enumerate(self.instances):
            assert inst.interacting == (i in used)
            assert 0 <= inst.box.x1 <= inst.box.x2 <= self.width
            assert 0 <= inst.box.y1 <= inst.box.y2 <= self.height


def _box_around(rng, cx, cy, w, h, width, height) -> BoundingBox:
    x1 = float(np.clip(cx - w / 2, 0.0, width))
    y1 = float(np.clip(cy - h / 2, 0.0, height))
    x2 = float(np.clip(cx + w / 2, 0.0, width))
    y2 = float(np.clip(cy + h / 2, 0.0, height))
    return BoundingBox(x1, y1, x2, y2)


def _random_box(rng, width, height) -> BoundingBox:
    w = rng.uniform(0.15, 0.35) * width
    h = rng.uniform(0.15, 0.35) * height
    cx = rng.uniform(w / 2, width - w / 2)
    cy = rng.uniform(h / 2, height - h / 2)
    return _box_around(rng, cx, cy, w, h, width, height)


def _overlapping_box(rng, anchor: BoundingBox, width, height) -> BoundingBox:
    # centre strictly inside the anchor guarantees positive overlap
    w = rng.uniform(0.1, 0.3) * width
    h = rng.uniform(0.1, 0.3) * height
    cx = rng.uniform(anchor.x1 + 0.25 * anchor.width, anchor.x2 - 0.25 * anchor.width)
    cy = rng.uniform(anchor.y1 + 0.25 * anchor.height, anchor.y2 - 0.25 * anchor.height)
    return _box_around(rng, cx, cy, w, h, width, height)


def gen_scene(config: ExperimentConfig, seed: int, distractors: Optional[int] = None) -> SyntheticScene:
    """Interacting subject/object pairs plus same-category distractors.

    Interacting instances use distinct categories; each distractor copies the
    category of one interacting instance and overlaps that instance's partner,
    so it competes for the same pair.
    """
    n_distract = config.distractors if distractors is None else distractors
    if n_distract < 0:
        raise ConfigInvalid("distractor count must be nonnegative")
    rng = rng_for(seed)
    n_inter = int(rng.integers(config.interactions_min, config.interactions_max + 1))
    if 2 * n_inter > len(config.objects):
        raise ConfigInvalid("not enough object categories for distinct interacting instances")
    cats = rng.choice(len(config.objects), size=2 * n_inter, replace=False)
    low, high = config.base_score_low, config.base_score_high

    instances: List[Instance] = []
    triplets: List[Triplet] = []
    for t_id in range(n_inter):
        s_cat, o_cat = int(cats[2 * t_id]), int(cats[2 * t_id + 1])
        p_cat = int(rng.integers(len(config.predicates)))
        s_box = _random_box(rng, config.width, config.height)
        o_box = _overlapping_box(rng, s_box, config.width, config.height)
        s_name, o_name = config.objects[s_cat], config.objects[o_cat]
        instances.append(Instance(s_cat, s_name, s_box, True, t_id, float(rng.uniform(low, high))))
        instances.append(Instance(o_cat, o_name, o_box, True, t_id, float(rng.uniform(low, high))))
        triplets.append(Triplet(s_name, config.predicates[p_cat], o_name, s_box, o_box))

    for _ in range(n_distract):
        copied = int(rng.integers(2 * n_inter))
        partner = copied ^ 1
        src = instances[copied]
        box = _overlapping_box(rng, instances[partner].box, config.width, config.height)
        instances.append(Instance(src.category_id, src.category, box, False, -1, float(rng.uniform(low, high))))

    return SyntheticScene(config.width, config.height, instances, triplets, seed, config.background_tokens)


def _unit_rows(rng, n: int, d: int) -> np.ndarray:
    x = rng.standard_normal((n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def _normalize(x: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(x, axis=-1, keepdims=True)
    return x / np.where(norm > 0, norm, 1.0)


@dataclass
class EmbeddingModel:
    dim: int
    object_vectors: np.ndarray
    predicate_vectors: np.ndarray
    objects: List[str]
    predicates: List[str]
    noise_sigma: float = 0.25
    interaction_mix: float = 0.5
    seed: int = 0
    _obj_index: dict = field(init=False, repr=False)
    _pred_index: dict = field(init=False, repr=False)

    def __post_init__(self):
        self._obj_index = {n: i for i, n in enumerate(self.objects)}
        self._pred_index = {n: i for i, n in enumerate(self.predicates)}

    @classmethod
    def from_seed(cls, objects, predicates, dim: int, seed: int, noise_sigma: float = 0.25, interaction_mix: float = 0.5):
        rng = rng_for(seed, 0xE1)
        obj = _unit_rows(rng, len(objects), dim)
        pred = _unit_rows(rng, len(predicates), dim)
        return cls(dim, obj, pred, list(objects), list(predicates), noise_sigma, interaction_mix, seed)

    @classmethod
    def from_config(cls, config: ExperimentConfig, dim: Optional[int] = None) -> "EmbeddingModel":
        return cls.from_seed(
            config.objects,
            config.predicates,
            dim or config.embed_dim,
            config.master_seed,
            config.noise_sigma,
            config.interaction_mix,
        )

    def object_vector(self, name: str) -> np.ndarray:
        if name not in self._obj_index:
            raise UnknownCategory(name)
        return self.object_vectors[self._obj_index[name]]

    def predicate_vector(self, name: str) -> np.ndarray:
        if name not in self._pred_index:
            raise UnknownCategory(name)
        return self.predicate_vectors[self._pred_index[name]]

    def pair_vector(self, first: str, second: str) -> np.ndarray:
        """Unit embedding of a decomposed interaction pair such as ``"man riding"``."""
        def lookup(name):
            return self.object_vector(name) if name in self._obj_index else self.predicate_vector(name)

        return _normalize(lookup(first) + lookup(second))


def interaction_prompts(triplets: List[Triplet], predicates: List[str], flip_prob: float = 0.0, rng=None) -> List[Tuple[str, str, str]]:
    """First-pass triplets for Step II; each predicate is swapped for a random
    other one with probability ``flip_prob``."""
    out = []
    for t in triplets:
        p = t.predicate
        if flip_prob > 0.0 and len(predicates) > 1 and rng.random() < flip_prob:
            others = [q for q in predicates if q != p]
            p = others[int(rng.integers(len(others)))]
        out.append((t.subject, p, t.object))
    return out


def embed_scene(scene: SyntheticScene, model: EmbeddingModel, flip_prob: float = 0.0):
    """Visual and text token matrices for a scene.

    Visual rows are the scene instances in order followed by
    ``scene.background_tokens`` category-free rows. Each instance token is
    ``normalize(e_obj + mix * e_pred * interacting + noise)`` where the noise
    is isotropic Gaussian with expected norm close to ``noise_sigma``.
    """
    rng = rng_for(scene.seed, 0xE2)
    d = model.dim
    rows = []
    for inst in scene.instances:
        v = model.object_vector(inst.category).copy()
        if inst.interacting:
            v = v + model.interaction_mix * model.predicate_vector(scene.gt_triplets[inst.interaction_id].predicate)
        rows.append(v)
    visual = np.array(rows, dtype=float).reshape(-1, d)
    if scene.background_tokens:
        visual = np.vstack([visual, _unit_rows(rng, scene.background_tokens, d)])
    if model.noise_sigma > 0:
        visual = visual + rng.standard_normal(visual.shape) * (model.noise_sigma / np.sqrt(d))
    visual = _normalize(visual)

    flip_rng = rng_for(scene.seed, 0xE3)
    pairs = []
    for s, p, o in interaction_prompts(scene.gt_triplets, model.predicates, flip_prob, flip_rng):
        pairs.append(model.pair_vector(s, p))
        pairs.append(model.pair_vector(p, o))
    t_in = np.array(pairs, dtype=float).reshape(-1, d)

    return (
        TokenMatrix(visual, "visual"),
        TokenMatrix(model.object_vectors.copy(), "object_class"),
        TokenMatrix(model.predicate_vectors.copy(), "relation_class"),
        TokenMatrix(t_in, "interaction"),
    )
