"""Experiment configuration loaded from a single JSON document."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

from ..errors import ConfigInvalid
from ..losses import LossWeights
from ..text import Vocabulary

DEFAULT_OBJECTS = [
    "man", "woman", "child", "boy", "girl", "dog", "cat", "horse", "elephant",
    "giraffe", "surfboard", "skateboard", "bike", "motorcycle", "umbrella",
    "kite", "frisbee", "ball", "bench", "chair", "table", "cup", "plate",
    "pizza", "sandwich", "hat", "shirt", "bag", "phone", "book",
]
DEFAULT_PREDICATES = [
    "hold", "ride", "carry", "eat", "wear", "throw", "catch", "push", "pull",
    "watch", "touch", "use", "feed", "kick",
]

THREADS_ENV = "SGG_MECH_THREADS"


@dataclass
class ExperimentConfig:
    master_seed: int = 0
    scenes: int = 200
    strata: int = 4
    threads: int = 0

    # scene generation
    width: float = 640.0
    height: float = 480.0
    interactions_min: int = 1
    interactions_max: int = 3
    distractors: int = 3
    background_tokens: int = 8
    objects: List[str] = field(default_factory=lambda: list(DEFAULT_OBJECTS))
    predicates: List[str] = field(default_factory=lambda: list(DEFAULT_PREDICATES))
    novel_fraction: float = 0.3

    # embeddings
    embed_dim: int = 64
    noise_sigma: float = 0.25
    interaction_mix: float = 0.5

    # query selection
    K: int = 900
    L: int = 200
    gamma_balance: float = 0.5
    predicate_flip_prob: float = 0.0

    # losses
    beta1: float = 0.1
    beta2: float = 0.5
    alpha_focal: float = 0.25
    gamma_focal: float = 2.0
    match_weights: Tuple[float, float, float] = (2.0, 5.0, 2.0)
    rrd_scope: str = "negatives"

    # grounding
    conf_threshold: float = 0.25
    iou_threshold: float = 0.0
    interaction_bonus: float = 0.3
    base_score_low: float = 0.3
    base_score_high: float = 0.7
    prompt_style: str = "bidirectional"

    # distillation experiment
    distill_dim: int = 8
    distill_edges: int = 8
    distill_scale_low: float = 0.5
    distill_scale_high: float = 2.0
    perturb_sigma: float = 0.1
    descent_steps: int = 200
    descent_lr: float = 0.01

    # evaluation
    eval_iou: float = 0.5
    object_novelty: str = "or"
    recall_ks: Tuple[int, ...] = (20, 50, 100)

    # gradient suite
    gradcheck_points: int = 100
    gradcheck_step: float = 1e-6
    gradcheck_tolerance: float = 1e-4

    # counter-action backend
    counter_action_backend: str = "rules"
    llm_url: Optional[str] = None
    llm_timeout: float = 10.0
    llm_retries: int = 2

    def __post_init__(self):
        self.match_weights = tuple(float(w) for w in self.match_weights)
        self.recall_ks = tuple(int(k) for k in self.recall_ks)
        self.validate()

    def validate(self) -> None:
        def need(cond: bool, msg: str) -> None:
            if not cond:
                raise ConfigInvalid(msg)

        need(self.scenes >= 1, "scenes must be >= 1")
        need(self.strata >= 1, "strata must be >= 1")
        need(self.threads >= 0, "threads must be >= 0")
        need(self.width > 0 and self.height > 0, "image extent must be positive")
        need(1 <= self.interactions_min <= self.interactions_max, "need 1 <= interactions_min <= interactions_max")
        need(self.distractors >= 0 and self.background_tokens >= 0, "counts must be nonnegative")
        need(len(set(self.objects)) == len(self.objects), "duplicate object categories")
        need(len(set(self.predicates)) == len(self.predicates), "duplicate predicate categories")
        need(len(self.objects) >= 2 * self.interactions_max, "too few object categories for distinct interacting instances")
        need(len(self.predicates) >= 1, "need at least one predicate")
        need(0.0 <= self.novel_fraction < 1.0, "novel_fraction must lie in [0, 1)")
        need(self.embed_dim >= 1 and self.distill_dim >= 1, "embedding dims must be positive")
        need(self.noise_sigma >= 0.0, "noise_sigma must be nonnegative")
        need(0.0 <= self.interaction_mix <= 1.0, "interaction_mix must lie in [0, 1]")
        need(self.K >= 1 and 0 <= self.L <= self.K, "need K >= 1 and 0 <= L <= K")
        need(0.0 <= self.gamma_balance <= 1.0, "gamma_balance must lie in [0, 1]")
        need(0.0 <= self.predicate_flip_prob <= 1.0, "predicate_flip_prob must lie in [0, 1]")
        need(min(self.beta1, self.beta2, self.alpha_focal, self.gamma_focal) >= 0, "loss weights must be nonnegative")
        need(len(self.match_weights) == 3 and min(self.match_weights) >= 0, "match_weights must be three nonnegative reals")
        need(self.rrd_scope in ("negatives", "all"), "rrd_scope must be 'negatives' or 'all'")
        need(0.0 <= self.base_score_low <= self.base_score_high <= 1.0, "base score range must lie in [0, 1]")
        need(self.interaction_bonus >= 0.0, "interaction_bonus must be nonnegative")
        need(self.prompt_style in ("bidirectional", "object"), "prompt_style must be 'bidirectional' or 'object'")
        need(self.distill_edges >= 2, "distill_edges must be >= 2")
        need(0 < self.distill_scale_low <= self.distill_scale_high, "distill scale range must be positive")
        need(self.descent_steps >= 0 and self.descent_lr > 0, "descent settings invalid")
        need(0.0 < self.eval_iou <= 1.0, "eval_iou must lie in (0, 1]")
        need(self.object_novelty in ("or", "and"), "object_novelty must be 'or' or 'and'")
        need(len(self.recall_ks) >= 1 and min(self.recall_ks) >= 1, "recall_ks must be positive")
        need(self.gradcheck_points >= 1 and self.gradcheck_step > 0 and self.gradcheck_tolerance > 0, "gradcheck settings invalid")
        need(self.counter_action_backend in ("rules", "llm"), "counter_action_backend must be 'rules' or 'llm'")
        need(self.counter_action_backend != "llm" or bool(self.llm_url), "llm backend needs llm_url")

    @property
    def loss_weights(self) -> LossWeights:
        return LossWeights(self.beta1, self.beta2, self.alpha_focal, self.gamma_focal, self.match_weights)

    def vocabulary(self) -> Vocabulary:
        n_obj_base = len(self.objects) - int(round(self.novel_fraction * len(self.objects)))
        n_pred_base = len(self.predicates) - int(round(self.novel_fraction * len(self.predicates)))
        return Vocabulary(
            list(self.objects),
            list(self.predicates),
            list(range(n_obj_base)),
            list(range(n_pred_base)),
        )

    def resolved_threads(self) -> int:
        env = os.environ.get(THREADS_ENV)
        threads = self.threads
        if env not in (None, ""):
            try:
                threads = int(env)
            except ValueError as exc:
                raise ConfigInvalid(f"{THREADS_ENV} must be an integer, got {env!r}") from exc
            if threads < 0:
                raise ConfigInvalid(f"{THREADS_ENV} must be >= 0")
        return threads or (os.cpu_count() or 1)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["match_weights"] = list(self.match_weights)
        d["recall_ks"] = list(self.recall_ks)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigInvalid("config document must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigInvalid(f"unknown config fields: {', '.join(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigInvalid(str(exc)) from exc


def load_config(path=None, **overrides) -> ExperimentConfig:
    data = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as f:
                data = json.load(f)
        except json.JSONDecodeError as exc:
            raise ConfigInvalid(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigInvalid("config document must be a JSON object")
    data.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.from_dict(data)


# Experiment presets; K and L are small so that selection is not the whole token set.
PRESETS = {
    "selection": {"K": 6, "L": 4, "scenes": 200, "interaction_mix": 0.5, "noise_sigma": 0.25},
    "distill": {"scenes": 8},
    "infusion": {"scenes": 200, "interaction_bonus": 0.3, "distractors": 3},
}
