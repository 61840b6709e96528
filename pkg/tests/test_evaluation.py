import pytest

from sgg_mech.errors import MalformedRecord, MissingBox, TooLarge, UnknownSplit
from sgg_mech.evaluation import (
    RankedPrediction,
    SplitSpec,
    evaluate,
    mean_recall_at_k,
    oracle_recall,
    read_ground_truth_jsonl,
    read_predictions_jsonl,
    recall_at_k,
    split_filter,
    triplet_match,
    write_predictions_jsonl,
)
from sgg_mech.text import Triplet, Vocabulary

from conftest import box
from recall_fixtures import adversarial, non_adversarial

A = box(0, 0, 10, 10)
B = box(20, 20, 30, 30)


def t(s="man", p="hold", o="cup", sb=A, ob=B):
    return Triplet(s, p, o, sb, ob)


def rp(triplet, score=0.5):
    return RankedPrediction(triplet, score)


def test_triplet_match():
    assert triplet_match(t(), t())
    # iou([0,0,10,10], [0,0,10,4]) = 40 / 100
    assert not triplet_match(t(sb=box(0, 0, 10, 4)), t())
    assert not triplet_match(t(p="ride"), t())
    assert triplet_match(t(sb=box(0, 0, 10, 5)), t())
    with pytest.raises(MissingBox):
        triplet_match(Triplet("man", "hold", "cup"), t())


def test_recall_examples():
    gts = [t(), t(o="bike")]
    assert recall_at_k([rp(t())], gts, 5) == 0.5
    assert recall_at_k([], gts, 5) == 0.0
    assert recall_at_k([rp(g, s) for g, s in zip(gts, (0.1, 0.2))], gts, 2) == 1.0
    assert recall_at_k([rp(t())], [], 5) == 1.0


def test_recall_respects_rank_cutoff():
    gts = [t()]
    preds = [rp(t(o="bike"), 0.9), rp(t(), 0.1)]
    assert recall_at_k(preds, gts, 1) == 0.0
    assert recall_at_k(preds, gts, 2) == 1.0


def test_mean_recall():
    assert mean_recall_at_k([rp(t())], [t()], 5) == recall_at_k([rp(t())], [t()], 5)
    gts = [t(), t(p="ride")]
    assert mean_recall_at_k([rp(t())], gts, 5) == 0.5
    assert mean_recall_at_k([], [], 5) == 1.0


def test_mean_recall_weights_categories_equally():
    gts = [t(), t(sb=box(50, 50, 60, 60)), t(sb=box(70, 70, 80, 80)), t(p="ride")]
    preds = [rp(g) for g in gts[:3]]
    assert recall_at_k(preds, gts, 10) == 0.75
    assert mean_recall_at_k(preds, gts, 10) == 0.5


def test_oracle_examples():
    assert oracle_recall([], [t()], 5) == 0.0
    # the top prediction overlaps both GTs; greedy gives it to the first one
    g1 = t(sb=box(0, 0, 10, 10), ob=box(0, 0, 10, 10))
    g2 = t(sb=box(4, 0, 14, 10), ob=box(4, 0, 14, 10))
    mid = rp(t(sb=box(2, 0, 12, 10), ob=box(2, 0, 12, 10)), 0.9)
    left = rp(t(sb=box(0, 0, 10, 10), ob=box(0, 0, 10, 10)), 0.5)
    preds = [mid, left]
    assert recall_at_k(preds, [g1, g2], 2) == 0.5
    assert oracle_recall(preds, [g1, g2], 2) == 1.0
    with pytest.raises(TooLarge):
        oracle_recall([], [t()] * 9, 5)


@pytest.mark.parametrize("seed", range(100))
def test_greedy_equals_oracle_on_separable_fixtures(seed):
    preds, gts, k = non_adversarial(seed)
    assert recall_at_k(preds, gts, k) == oracle_recall(preds, gts, k)


@pytest.mark.parametrize("seed", range(100))
def test_greedy_bounded_by_oracle(seed):
    preds, gts, k = adversarial(seed)
    assert recall_at_k(preds, gts, k) <= oracle_recall(preds, gts, k)
    values = [recall_at_k(preds, gts, kk) for kk in range(1, 12)]
    assert values == sorted(values)


VOCAB = Vocabulary(["man", "cup", "dog", "bike"], ["hold", "ride"], base_objects=[0, 1], base_predicates=[0])


def test_split_filter():
    base = t()
    assert split_filter([base], VOCAB, SplitSpec.NOVEL_RELATION) == []
    novel_subject = t(s="dog")
    assert split_filter([novel_subject], VOCAB, "NovelObject") == [novel_subject]
    assert split_filter([novel_subject], VOCAB, "NovelObject", object_novelty="and") == []
    gts = [base, novel_subject, t(p="ride")]
    assert split_filter(gts, VOCAB, SplitSpec.JOINT) == gts
    assert split_filter(gts, VOCAB, SplitSpec.BASE_OBJECT) == [base, t(p="ride")]
    assert split_filter(gts, VOCAB, SplitSpec.BASE_RELATION) == [base, novel_subject]
    with pytest.raises(UnknownSplit):
        split_filter(gts, VOCAB, "Everything")


def test_evaluate_macro_average(tmp_path):
    gts = {"a": [t()], "b": [t(p="ride"), t(s="dog")]}
    preds = {"a": [rp(t())], "b": [rp(t(s="dog"))]}
    report = evaluate(preds, gts, VOCAB, ks=(1, 5))
    joint = report.values["JointBaseNovel"]
    assert joint["R@5"] == pytest.approx((1.0 + 0.5) / 2)
    # hold: images a (1.0) and b (1.0); ride: image b (0.0)
    assert joint["mR@5"] == pytest.approx(0.5)
    assert report.values["NovelRelation"]["R@5"] == 0.0
    assert report.gt_counts["JointBaseNovel"] == 3
    path = tmp_path / "recall.csv"
    report.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "split,metric,K,value"
    assert "JointBaseNovel,R,5,0.750000" in lines


def test_prediction_files_round_trip(tmp_path):
    preds = {"img1": [rp(t(), 0.25), rp(t(p="ride"), 0.75)], "img2": [rp(t(s="dog"), 1.0)]}
    path = tmp_path / "p.jsonl"
    write_predictions_jsonl(preds, path)
    assert read_predictions_jsonl(path) == preds
    gts = read_ground_truth_jsonl(path)
    assert gts["img1"] == [t(), t(p="ride")]


def test_ground_truth_requires_boxes(tmp_path):
    path = tmp_path / "gt.jsonl"
    path.write_text('{"triplet": {"subject": "a", "predicate": "b", "object": "c"}, "image_id": 1}\n')
    with pytest.raises(MalformedRecord) as info:
        read_ground_truth_jsonl(path)
    assert info.value.line_no == 1
