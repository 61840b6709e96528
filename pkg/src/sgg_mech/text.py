"""Caption triplets, counter-actions and the three prompt families.

Counter-actions are canonicalised to ``"<past participle> by"`` with no leading
``"be"``; phrases returned by an LLM endpoint are normalised to that form.
"""

from __future__ import annotations

import json
import logging
import re
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from typing import Callable, Iterable, List, Optional, Sequence, Tuple, Union

from .errors import EmptyVocabulary, LlmUnavailable, MalformedRecord
from .geometry import BoundingBox
from .lexicon import (
    AUXILIARIES,
    CONJUNCTIONS,
    DETERMINERS,
    IRREGULAR_LEMMAS,
    IRREGULAR_PARTICIPLES,
    PHRASAL,
    PREPOSITIONS,
    VERBS,
)

logger = logging.getLogger(__name__)

VOWELS = "aeiou"

COUNTER_ACTION_TEMPLATE = (
    "Question: Given the action 'ride', please generate its corresponding counter-action.\n"
    "Answer: 'be ridden by'.\n"
    "Question: Given the action 'eat', please generate its corresponding counter-action.\n"
    "Answer: 'be eaten by'.\n"
    "Question: Given the action '{relation}', please generate its corresponding counter-action.\n"
    "Answer:"
)


@dataclass(frozen=True)
class Triplet:
    subject: str
    predicate: str
    object: str
    subject_box: Optional[BoundingBox] = None
    object_box: Optional[BoundingBox] = None
    confidence: Optional[float] = None

    def __post_init__(self):
        for name in ("subject", "predicate", "object"):
            value = getattr(self, name)
            if not value or value != value.lower():
                raise ValueError(f"triplet {name} must be a non-empty lowercase token, got {value!r}")
        if self.confidence is not None and not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"triplet confidence {self.confidence} outside [0, 1]")

    @property
    def labels(self) -> Tuple[str, str, str]:
        return (self.subject, self.predicate, self.object)

    @property
    def has_boxes(self) -> bool:
        return self.subject_box is not None and self.object_box is not None

    def to_dict(self) -> dict:
        d = {"subject": self.subject, "predicate": self.predicate, "object": self.object}
        if self.subject_box is not None:
            d["sbox"] = self.subject_box.as_list()
        if self.object_box is not None:
            d["obox"] = self.object_box.as_list()
        if self.confidence is not None:
            d["confidence"] = self.confidence
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Triplet":
        sbox = d.get("sbox")
        obox = d.get("obox")
        return cls(
            subject=d["subject"],
            predicate=d["predicate"],
            object=d["object"],
            subject_box=BoundingBox.from_seq(sbox) if sbox is not None else None,
            object_box=BoundingBox.from_seq(obox) if obox is not None else None,
            confidence=d.get("confidence"),
        )


@dataclass(frozen=True)
class BidirectionalPrompt:
    forward: str
    backward: str

    @property
    def combined(self) -> str:
        return f"{self.forward}. {self.backward}."


@dataclass
class Vocabulary:
    """Object and predicate category lists with a base/novel partition.

    ``base_objects`` and ``base_predicates`` hold indices; the novel set is the
    complement.
    """

    objects: List[str]
    predicates: List[str]
    base_objects: List[int] = field(default_factory=list)
    base_predicates: List[int] = field(default_factory=list)

    def __post_init__(self):
        for kind, names, base in (
            ("object", self.objects, self.base_objects),
            ("predicate", self.predicates, self.base_predicates),
        ):
            if len(set(names)) != len(names):
                raise ValueError(f"duplicate {kind} categories")
            if len(set(base)) != len(base):
                raise ValueError(f"duplicate base {kind} indices")
            for i in base:
                if not 0 <= i < len(names):
                    raise ValueError(f"base {kind} index {i} out of range")
        self._object_index = {name: i for i, name in enumerate(self.objects)}
        self._predicate_index = {name: i for i, name in enumerate(self.predicates)}

    @property
    def novel_objects(self) -> List[int]:
        base = set(self.base_objects)
        return [i for i in range(len(self.objects)) if i not in base]

    @property
    def novel_predicates(self) -> List[int]:
        base = set(self.base_predicates)
        return [i for i in range(len(self.predicates)) if i not in base]

    def object_id(self, name: str) -> int:
        return self._object_index[name]

    def predicate_id(self, name: str) -> int:
        return self._predicate_index[name]

    def is_novel_object(self, name: str) -> bool:
        return self._object_index[name] not in set(self.base_objects)

    def is_novel_predicate(self, name: str) -> bool:
        return self._predicate_index[name] not in set(self.base_predicates)

    def to_dict(self) -> dict:
        return {
            "objects": list(self.objects),
            "predicates": list(self.predicates),
            "base_objects": list(self.base_objects),
            "base_predicates": list(self.base_predicates),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Vocabulary":
        objects = list(d["objects"])
        predicates = list(d["predicates"])
        return cls(
            objects=objects,
            predicates=predicates,
            base_objects=list(d.get("base_objects", range(len(objects)))),
            base_predicates=list(d.get("base_predicates", range(len(predicates)))),
        )


# --------------------------------------------------------------------------- morphology


_PARTICIPLE_BASES = {}
for _base, _part in IRREGULAR_PARTICIPLES.items():
    _PARTICIPLE_BASES.setdefault(_part, _base)


def _known(word: str) -> bool:
    return word in IRREGULAR_PARTICIPLES or word in VERBS


def _is_doubled(stem: str) -> bool:
    return len(stem) >= 3 and stem[-1] == stem[-2] and stem[-1] not in VOWELS + "lsz"


def lemmatize(word: str) -> str:
    """Best-effort base form of an inflected verb token."""
    if word in IRREGULAR_LEMMAS:
        return IRREGULAR_LEMMAS[word]
    if _known(word):
        return word
    if word in _PARTICIPLE_BASES:
        return _PARTICIPLE_BASES[word]
    if word.endswith("ing") and len(word) > 4:
        stem = word[:-3]
        candidates = []
        if _is_doubled(stem):
            candidates.append(stem[:-1])
        candidates += [stem, stem + "e"]
        for c in candidates:
            if _known(c):
                return c
        if _is_doubled(stem):
            return stem[:-1]
        return stem
    if word.endswith("ied") and len(word) > 4:
        return word[:-3] + "y"
    if word.endswith("ed") and len(word) > 3:
        stem = word[:-2]
        for c in ([stem[:-1]] if _is_doubled(stem) else []) + [stem, word[:-1]]:
            if _known(c):
                return c
        return stem[:-1] if _is_doubled(stem) else stem
    if word.endswith("ies") and len(word) > 4:
        return word[:-3] + "y"
    if word.endswith("s") and _known(word[:-1]):
        return word[:-1]
    if word.endswith("es") and word[:-2].endswith(("s", "x", "z", "ch", "sh")):
        return word[:-2]
    if word.endswith("s") and not word.endswith("ss") and len(word) > 3:
        return word[:-1]
    return word


def _syllables(word: str) -> int:
    return len(re.findall(r"[aeiouy]+", word))


def past_participle(base: str) -> str:
    """Irregular-table lookup, then regular ``-ed`` inflection."""
    if base in IRREGULAR_PARTICIPLES:
        return IRREGULAR_PARTICIPLES[base]
    if base.endswith("e"):
        return base + "d"
    if base.endswith("y") and len(base) > 1 and base[-2] not in VOWELS:
        return base[:-1] + "ied"
    if (
        len(base) >= 3
        and base[-1] not in VOWELS + "wxy"
        and base[-2] in VOWELS
        and base[-3] not in VOWELS
        and _syllables(base) == 1
    ):
        return base + base[-1] + "ed"
    return base + "ed"


def normalize_counter_action(phrase: str) -> str:
    """Strip quoting, trailing punctuation and a leading ``"be "``."""
    s = phrase.strip().lower()
    s = s.strip("'\"`‘’“” ")
    s = s.rstrip(".").strip().strip("'\"`‘’ ")
    if s.startswith("be "):
        s = s[3:]
    return " ".join(s.split())


def rule_counter_action(verb: str) -> str:
    words = verb.strip().lower().split()
    if not words:
        raise ValueError("empty verb")
    if words[0] in PREPOSITIONS:
        # spatial predicate: no passive form, reused verbatim in the backward sentence
        return " ".join(words)
    head = past_participle(lemmatize(words[0]))
    return " ".join([head] + words[1:] + ["by"])


class LlmCounterActionClient:
    """POSTs the few-shot counter-action prompt to an HTTP endpoint.

    Request body is ``{"prompt": ...}``; the response must be JSON with an
    ``"answer"`` string.
    """

    def __init__(self, url: str, timeout: float = 10.0, retries: int = 2):
        self.url = url
        self.timeout = timeout
        self.retries = retries

    def request_body(self, verb: str) -> bytes:
        return json.dumps({"prompt": COUNTER_ACTION_TEMPLATE.format(relation=verb)}).encode("utf-8")

    def __call__(self, verb: str) -> str:
        last_error: Optional[Exception] = None
        for attempt in range(self.retries + 1):
            req = urllib.request.Request(
                self.url,
                data=self.request_body(verb),
                headers={"Content-Type": "application/json"},
                method="POST",
            )
            try:
                with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                    payload = json.loads(resp.read().decode("utf-8"))
                answer = payload["answer"]
                if not isinstance(answer, str) or not answer.strip():
                    raise ValueError("empty answer")
                return normalize_counter_action(answer)
            except (urllib.error.URLError, OSError, ValueError, KeyError, TypeError) as exc:
                last_error = exc
                logger.warning("counter-action request %d for %r failed: %s", attempt + 1, verb, exc)
                if attempt < self.retries:
                    time.sleep(min(0.05 * 2**attempt, 1.0))
        raise LlmUnavailable(f"counter-action endpoint {self.url} failed: {last_error}")


CounterActionBackend = Union[str, Callable[[str], str]]


def counter_action(verb: str, backend: CounterActionBackend = "rules") -> str:
    """Passive inversion of ``verb``, e.g. ``"ride" -> "ridden by"``.

    ``backend`` is ``"rules"`` or a callable such as :class:`LlmCounterActionClient`.
    """
    if backend == "rules":
        return rule_counter_action(verb)
    if isinstance(backend, str):
        raise ValueError(f"unknown counter-action backend {backend!r}; pass 'rules' or a client")
    return normalize_counter_action(backend(verb))


# --------------------------------------------------------------------------- prompts


def build_bidirectional_prompt(t: Triplet, backend: CounterActionBackend = "rules") -> BidirectionalPrompt:
    forward = f"{t.subject} {t.predicate} {t.object}"
    backward = f"{t.object} {counter_action(t.predicate, backend)} {t.subject}"
    return BidirectionalPrompt(forward, backward)


def build_object_prompt(categories: Sequence[str]) -> str:
    """Object-only prompt in the ``"man. surfboard."`` style."""
    return " ".join(f"{c}." for c in categories)


def build_vocab_prompt(v: Vocabulary) -> Tuple[str, str]:
    if not v.objects or not v.predicates:
        raise EmptyVocabulary("vocabulary needs at least one object and one predicate")
    return ". ".join(v.objects) + ".", ". ".join(v.predicates) + "."


def decompose_triplet(t: Triplet) -> Tuple[str, str]:
    return f"{t.subject} {t.predicate}", f"{t.predicate} {t.object}"


# --------------------------------------------------------------------------- caption parsing

_TOKEN_RE = re.compile(r"[a-z]+(?:[-'][a-z]+)*|[.,;:!?]")


def _is_word(tok: str) -> bool:
    return tok[0].isalpha()


def parse_caption(caption: str, verbs: Iterable[str] = VERBS) -> List[Triplet]:
    """Extract subject-verb-object triplets with a small pattern grammar.

    A verb is any token whose lemma is in ``verbs`` and that does not follow a
    determiner. The subject is the head (rightmost word) of the noun phrase to
    its left, the object the head of the noun phrase to its right. A clause
    with no subject of its own inherits the previous subject.
    """
    verbs = frozenset(verbs)
    tokens = _TOKEN_RE.findall(caption.lower())

    spans = []  # (start, end, predicate)
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        prev = tokens[i - 1] if i else ""
        if _is_word(tok) and tok not in AUXILIARIES and prev not in DETERMINERS:
            lemma = lemmatize(tok)
            if lemma in verbs:
                end = i + 1
                pred = tok
                if end < len(tokens) and tokens[end] in PHRASAL.get(lemma, ()):
                    pred = f"{tok} {tokens[end]}"
                    end += 1
                spans.append((i, end, pred))
                i = end
                continue
        i += 1

    verb_positions = {p for s, e, _ in spans for p in range(s, e)}

    def boundary(j: int) -> bool:
        tok = tokens[j]
        return (
            not _is_word(tok)
            or tok in PREPOSITIONS
            or tok in CONJUNCTIONS
            or j in verb_positions
        )

    out: List[Triplet] = []
    last_subject = None
    for start, end, pred in spans:
        j = start - 1
        while j >= 0 and tokens[j] in AUXILIARIES:
            j -= 1
        subject = None
        while j >= 0 and not boundary(j):
            if subject is None and tokens[j] not in DETERMINERS and tokens[j] not in AUXILIARIES:
                subject = tokens[j]
            j -= 1
        if subject is None:
            subject = last_subject
        else:
            last_subject = subject

        k = end
        obj = None
        while k < len(tokens) and not boundary(k) and tokens[k] not in AUXILIARIES:
            if tokens[k] not in DETERMINERS:
                obj = tokens[k]
            k += 1

        if subject and obj:
            out.append(Triplet(subject, pred, obj))
    return out


# --------------------------------------------------------------------------- triplet files


def write_triplets_jsonl(records: Iterable[Tuple[object, Triplet]], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for caption_id, t in records:
            rec = {"subject": t.subject, "predicate": t.predicate, "object": t.object, "caption_id": caption_id}
            f.write(json.dumps(rec) + "\n")


def read_triplets_jsonl(path) -> List[Tuple[object, Triplet]]:
    out = []
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                t = Triplet(rec["subject"], rec["predicate"], rec["object"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise MalformedRecord(line_no, str(exc)) from exc
            out.append((rec.get("caption_id"), t))
    return out
