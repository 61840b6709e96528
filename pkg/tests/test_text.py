import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from sgg_mech.errors import EmptyVocabulary, LlmUnavailable, MalformedRecord
from sgg_mech.lexicon import IRREGULAR_PARTICIPLES
from sgg_mech.text import (
    COUNTER_ACTION_TEMPLATE,
    LlmCounterActionClient,
    Triplet,
    Vocabulary,
    build_bidirectional_prompt,
    build_object_prompt,
    build_vocab_prompt,
    counter_action,
    decompose_triplet,
    lemmatize,
    normalize_counter_action,
    parse_caption,
    past_participle,
    read_triplets_jsonl,
    write_triplets_jsonl,
)


def labels(triplets):
    return [t.labels for t in triplets]


# ---- caption parsing


def test_parse_simple_caption():
    assert labels(parse_caption("man hold surfboard")) == [("man", "hold", "surfboard")]


def test_parse_empty_caption():
    assert parse_caption("") == []
    assert parse_caption("   ") == []


def test_parse_skips_prepositional_tail():
    assert labels(parse_caption("a people ride a bike near water")) == [("people", "ride", "bike")]


def test_parse_keeps_surface_predicate():
    assert labels(parse_caption("The dog chases a ball.")) == [("dog", "chases", "ball")]
    assert labels(parse_caption("a woman is riding a horse")) == [("woman", "riding", "horse")]
    assert counter_action("riding") == "ridden by"


def test_parse_two_clauses_share_subject():
    assert labels(parse_caption("a man holds a cup and drinks coffee")) == [
        ("man", "holds", "cup"),
        ("man", "drinks", "coffee"),
    ]


def test_parse_no_verb():
    assert parse_caption("a red car near the road") == []


@pytest.mark.parametrize(
    "word, lemma",
    [("riding", "ride"), ("holds", "hold"), ("carries", "carry"), ("eating", "eat"), ("chases", "chase"), ("held", "hold"), ("ridden", "ride"), ("worn", "wear")],
)
def test_lemmatize(word, lemma):
    assert lemmatize(word) == lemma


# ---- counter-action


@pytest.mark.parametrize(
    "verb, phrase",
    [
        ("ride", "ridden by"),
        ("hold", "held by"),
        ("carry", "carried by"),
        ("eat", "eaten by"),
        ("touch", "touched by"),
        ("wear", "worn by"),
    ],
)
def test_rule_counter_action(verb, phrase):
    assert counter_action(verb) == phrase


@pytest.mark.parametrize("verb, participle", [("stop", "stopped"), ("love", "loved"), ("play", "played"), ("visit", "visited")])
def test_regular_participles(verb, participle):
    assert past_participle(verb) == participle


def test_irregular_table_size():
    assert len(IRREGULAR_PARTICIPLES) >= 50


def test_normalize_strips_leading_be():
    assert normalize_counter_action("be ridden by") == "ridden by"
    assert normalize_counter_action("  Held by ") == "held by"


def test_callable_backend():
    assert counter_action("ride", lambda v: "be ridden by") == "ridden by"
    with pytest.raises(ValueError):
        counter_action("ride", "gpt")


# ---- prompts


def test_bidirectional_prompt_golden():
    p = build_bidirectional_prompt(Triplet("man", "hold", "surfboard"))
    assert p.forward == "man hold surfboard"
    assert p.backward == "surfboard held by man"
    assert p.combined == "man hold surfboard. surfboard held by man."


def test_bidirectional_prompt_ride():
    assert build_bidirectional_prompt(Triplet("people", "ride", "bike")).combined == "people ride bike. bike ridden by people."


def test_bidirectional_prompt_regular_verb():
    assert build_bidirectional_prompt(Triplet("a", "touch", "c")).backward.startswith("c touched by")


def test_vocab_prompt():
    v = Vocabulary(["man", "horse"], ["riding", "above"])
    assert build_vocab_prompt(v) == ("man. horse.", "riding. above.")
    assert build_vocab_prompt(Vocabulary(["cat"], ["on"]))[0] == "cat."
    big = Vocabulary([f"obj{i}" for i in range(150)], ["on"])
    assert build_vocab_prompt(big)[0].count(".") == 150
    with pytest.raises(EmptyVocabulary):
        build_vocab_prompt(Vocabulary([], ["on"]))


def test_object_prompt():
    assert build_object_prompt(["man", "surfboard"]) == "man. surfboard."


@pytest.mark.parametrize(
    "t, pair",
    [
        (("man", "riding", "horse"), ("man riding", "riding horse")),
        (("zebra", "laying on", "grass"), ("zebra laying on", "laying on grass")),
        (("a", "r", "a"), ("a r", "r a")),
    ],
)
def test_decompose(t, pair):
    assert decompose_triplet(Triplet(*t)) == pair


def test_triplet_validation():
    with pytest.raises(ValueError):
        Triplet("Man", "hold", "board")
    with pytest.raises(ValueError):
        Triplet("man", "", "board")


def test_vocabulary_partition():
    v = Vocabulary(["a", "b", "c"], ["p", "q"], [0, 2], [1])
    assert v.novel_objects == [1]
    assert v.novel_predicates == [0]
    assert v.is_novel_object("b") and not v.is_novel_object("a")
    assert Vocabulary.from_dict(v.to_dict()).to_dict() == v.to_dict()


# ---- files


def test_triplet_jsonl_round_trip(tmp_path):
    records = [(0, Triplet("man", "hold", "surfboard")), ("c1", Triplet("dog", "chase", "ball"))]
    path = tmp_path / "t.jsonl"
    write_triplets_jsonl(records, path)
    assert read_triplets_jsonl(path) == records


def test_triplet_jsonl_malformed_line(tmp_path):
    path = tmp_path / "t.jsonl"
    path.write_text('{"subject": "a", "predicate": "b", "object": "c"}\n{"subject": "a"}\n')
    with pytest.raises(MalformedRecord) as info:
        read_triplets_jsonl(path)
    assert info.value.line_no == 2


# ---- LLM client


class _Handler(BaseHTTPRequestHandler):
    replies = []
    seen = []

    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        type(self).seen.append(body)
        status, payload = type(self).replies.pop(0) if type(self).replies else (200, {"answer": "be ridden by"})
        data = json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture
def server():
    _Handler.replies, _Handler.seen = [], []
    httpd = HTTPServer(("127.0.0.1", 0), _Handler)
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{httpd.server_address[1]}/", _Handler
    httpd.shutdown()
    httpd.server_close()


def test_llm_client_round_trip(server):
    url, handler = server
    client = LlmCounterActionClient(url, timeout=5, retries=0)
    assert counter_action("ride", client) == "ridden by"
    assert handler.seen[0]["prompt"] == COUNTER_ACTION_TEMPLATE.format(relation="ride")
    assert "Question: Given the action 'ride'" in handler.seen[0]["prompt"]


def test_llm_client_retries_then_succeeds(server):
    url, handler = server
    handler.replies = [(500, {"error": "busy"}), (200, {"answer": "held by"})]
    assert LlmCounterActionClient(url, timeout=5, retries=1)("hold") == "held by"
    assert len(handler.seen) == 2


def test_llm_client_gives_up(server):
    url, handler = server
    handler.replies = [(200, {"nope": 1})] * 3
    with pytest.raises(LlmUnavailable):
        LlmCounterActionClient(url, timeout=5, retries=2)("hold")


def test_llm_client_unreachable():
    with pytest.raises(LlmUnavailable):
        LlmCounterActionClient("http://127.0.0.1:9/", timeout=0.5, retries=0)("hold")
