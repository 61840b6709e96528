"""Command line entry point: ``sgg-mech <subcommand> [--config PATH] [--seed N] [--out DIR]``.

Exit codes: 0 success, 1 failed check, 2 configuration error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from ..errors import ConfigInvalid, MalformedRecord, SggMechError
from ..evaluation import (
    RankedPrediction,
    evaluate,
    read_ground_truth_jsonl,
    read_predictions_jsonl,
    write_predictions_jsonl,
)
from ..geometry import BoundingBox
from ..gradcheck import run_gradient_suite
from ..grounding import combine_pairs, mock_ground, serialize_pseudo_labels
from ..matching import hungarian
from ..selection import read_token_matrix, step2_select
from ..text import (
    LlmCounterActionClient,
    Triplet,
    Vocabulary,
    build_bidirectional_prompt,
    build_object_prompt,
    parse_caption,
    read_triplets_jsonl,
    write_triplets_jsonl,
)
from .config import PRESETS, ExperimentConfig, load_config
from .experiments import RUNNERS, parallel_map
from .report import emit_report
from .scenes import gen_scene, rng_for, scene_seed

logger = logging.getLogger("sgg_mech")

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_IO = 3


def _config(args, preset=None) -> ExperimentConfig:
    base = dict(PRESETS.get(preset, {})) if preset else {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as f:
                doc = json.load(f)
        except json.JSONDecodeError as exc:
            raise ConfigInvalid(f"{args.config}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigInvalid("config document must be a JSON object")
        base.update(doc)
    if args.seed is not None:
        base["master_seed"] = args.seed
    return load_config(None, **base)


def _write_json(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def _backend(config: ExperimentConfig):
    if config.counter_action_backend == "llm":
        return LlmCounterActionClient(config.llm_url, config.llm_timeout, config.llm_retries)
    return "rules"


# --------------------------------------------------------------------------- subcommands


def cmd_parse(args, out: Path) -> int:
    _config(args)
    records = []
    with open(args.input, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            text = line.rstrip("\n")
            if not text.strip():
                continue
            caption_id, caption = line_no, text
            if text.lstrip().startswith("{"):
                try:
                    rec = json.loads(text)
                    caption_id, caption = rec.get("caption_id", line_no), rec["caption"]
                except (json.JSONDecodeError, KeyError) as exc:
                    raise MalformedRecord(line_no, str(exc)) from exc
            records.extend((caption_id, t) for t in parse_caption(caption))
    write_triplets_jsonl(records, out / "triplets.jsonl")
    logger.info("parsed %d triplets", len(records))
    return EXIT_OK


def cmd_prompt(args, out: Path) -> int:
    config = _config(args)
    backend = _backend(config)
    with open(out / "prompts.jsonl", "w", encoding="utf-8") as f:
        for caption_id, t in read_triplets_jsonl(args.input):
            p = build_bidirectional_prompt(t, backend)
            rec = {"caption_id": caption_id, "forward": p.forward, "backward": p.backward, "combined": p.combined}
            f.write(json.dumps(rec) + "\n")
    return EXIT_OK


def cmd_ground(args, out: Path) -> int:
    config = _config(args)
    style = args.style or config.prompt_style
    backend = _backend(config)

    def one(index):
        scene = gen_scene(config, scene_seed(config.master_seed, index))
        labels = []
        for t in scene.gt_triplets:
            if style == "bidirectional":
                prompt = build_bidirectional_prompt(t, backend).combined
            else:
                prompt = build_object_prompt([t.subject, t.object])
            dets = mock_ground(scene, prompt, config.interaction_bonus)
            labels += combine_pairs(
                [d for d in dets if d.phrase == t.subject],
                [d for d in dets if d.phrase == t.object],
                config.conf_threshold,
                config.iou_threshold,
                t.predicate,
            )
        return labels

    threads = 1 if config.counter_action_backend == "llm" else config.resolved_threads()
    per_scene = parallel_map(one, config.scenes, threads)
    serialize_pseudo_labels([label for labels in per_scene for label in labels], out / "pseudo_labels.jsonl")
    return EXIT_OK


def cmd_select(args, out: Path) -> int:
    config = _config(args)
    V = read_token_matrix(args.visual, "visual")
    T_o = read_token_matrix(args.objects, "object_class")
    T_r = read_token_matrix(args.relations, "relation_class")
    T_in = read_token_matrix(args.interactions, "interaction") if args.interactions else None
    k = min(config.K, V.rows)
    l = min(config.L, k)
    sel = step2_select(V, T_in, T_o, k, l, config.gamma_balance, T_r)
    _write_json(out / "selection.json", {"indices": sel.indices, "interaction_count": sel.interaction_count})
    return EXIT_OK


def _read_cost(path) -> np.ndarray:
    rows = []
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                rows.append([float(x) for x in line.replace(",", " ").split()])
            except ValueError as exc:
                raise MalformedRecord(line_no, str(exc)) from exc
    if rows and len({len(r) for r in rows}) != 1:
        raise MalformedRecord(len(rows), "ragged cost matrix")
    return np.array(rows, dtype=float).reshape(len(rows), -1)


def cmd_match(args, out: Path) -> int:
    _config(args)
    result = hungarian(_read_cost(args.cost))
    _write_json(out / "assignment.json", {"pairs": [list(p) for p in result.pairs], "total_cost": result.total_cost})
    return EXIT_OK


def cmd_eval(args, out: Path) -> int:
    config = _config(args)
    with open(args.vocab, encoding="utf-8") as f:
        vocab = Vocabulary.from_dict(json.load(f))
    preds = read_predictions_jsonl(args.pred)
    gts = read_ground_truth_jsonl(args.gt)
    report = evaluate(preds, gts, vocab, ks=config.recall_ks, iou_thresh=config.eval_iou, object_novelty=config.object_novelty)
    report.write_csv(out / "recall.csv")
    return EXIT_OK


def cmd_synthesize(args, out: Path) -> int:
    """Ground truth, jittered predictions and vocabulary for trying ``eval``."""
    config = _config(args)
    vocab = config.vocabulary()
    gts, preds = {}, {}
    for index in range(config.scenes):
        scene = gen_scene(config, scene_seed(config.master_seed, index))
        rng = rng_for(scene.seed, 0xE5)
        gts[index] = scene.gt_triplets
        ranked = []
        for t in scene.gt_triplets:
            for _ in range(2):
                jitter = rng.normal(0.0, 0.05, 8) * np.array([t.subject_box.width, t.subject_box.height] * 2 + [t.object_box.width, t.object_box.height] * 2)
                sbox = _jittered(t.subject_box, jitter[:4], scene)
                obox = _jittered(t.object_box, jitter[4:], scene)
                predicate = t.predicate if rng.random() < 0.7 else config.predicates[int(rng.integers(len(config.predicates)))]
                ranked.append(RankedPrediction(Triplet(t.subject, predicate, t.object, sbox, obox), float(rng.random())))
        preds[index] = ranked
    write_predictions_jsonl(preds, out / "predictions.jsonl")
    with open(out / "gt.jsonl", "w", encoding="utf-8") as f:
        for image, triplets in gts.items():
            for t in triplets:
                f.write(json.dumps({"triplet": t.to_dict(), "image_id": image}) + "\n")
    _write_json(out / "vocab.json", vocab.to_dict())
    return EXIT_OK


def _jittered(box: BoundingBox, delta, scene) -> BoundingBox:
    x1, y1, x2, y2 = (np.array(box.as_list()) + delta).tolist()
    x1, x2 = sorted((min(max(x1, 0.0), scene.width), min(max(x2, 0.0), scene.width)))
    y1, y2 = sorted((min(max(y1, 0.0), scene.height), min(max(y2, 0.0), scene.height)))
    return BoundingBox(x1, y1, x2, y2)


def cmd_experiment(args, out: Path) -> int:
    config = _config(args, preset=args.name)
    report = RUNNERS[args.name](config)
    emit_report(report, "csv", out / f"{args.name}.csv")
    emit_report(report, "svg", out / f"{args.name}.svg")
    for condition, metric, value in report.rows:
        print(f"{condition:20s} {metric:24s} {value:.6g}")
    return EXIT_OK


def cmd_gradcheck(args, out: Path) -> int:
    config = _config(args)
    reports = run_gradient_suite(config.master_seed, config.gradcheck_points, config.gradcheck_step, config.gradcheck_tolerance)
    with open(out / "gradcheck.csv", "w", encoding="utf-8") as f:
        f.write("loss,max_rel_error,tolerance,checked,excluded,passed\n")
        for r in reports:
            f.write(f"{r.name},{r.max_rel_error!r},{r.tolerance!r},{r.checked},{r.excluded},{int(r.passed)}\n")
            print(f"{'PASS' if r.passed else 'FAIL'} {r.name:18s} max rel error {r.max_rel_error:.3e}")
    return EXIT_OK if all(r.passed for r in reports) else EXIT_CHECK_FAILED


# --------------------------------------------------------------------------- wiring


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON document with experiment config fields")
    common.add_argument("--seed", type=int, help="override the master seed")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="sgg-mech", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("parse", parents=[common], help="captions -> triplet JSONL")
    s.add_argument("--input", required=True, help="one caption per line, or JSONL with 'caption'")
    s.set_defaults(func=cmd_parse)

    s = sub.add_parser("prompt", parents=[common], help="triplets -> bidirectional prompts")
    s.add_argument("--input", required=True, help="triplet JSONL")
    s.set_defaults(func=cmd_prompt)

    s = sub.add_parser("ground", parents=[common], help="mock grounding + pair combination -> pseudo-label JSONL")
    s.add_argument("--style", choices=["bidirectional", "object"])
    s.set_defaults(func=cmd_ground)

    s = sub.add_parser("select", parents=[common], help="token matrices -> query indices")
    s.add_argument("--visual", required=True)
    s.add_argument("--objects", required=True)
    s.add_argument("--relations", required=True)
    s.add_argument("--interactions")
    s.set_defaults(func=cmd_select)

    s = sub.add_parser("match", parents=[common], help="cost matrix file -> assignment")
    s.add_argument("--cost", required=True, help="whitespace- or comma-separated rows")
    s.set_defaults(func=cmd_match)

    s = sub.add_parser("eval", parents=[common], help="predictions + ground truth -> recall CSV")
    s.add_argument("--pred", required=True)
    s.add_argument("--gt", required=True)
    s.add_argument("--vocab", required=True)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("synthesize", parents=[common], help="write synthetic GT/predictions/vocab for eval")
    s.set_defaults(func=cmd_synthesize)

    s = sub.add_parser("experiment", parents=[common], help="run a mechanism experiment")
    s.add_argument("name", choices=sorted(RUNNERS))
    s.set_defaults(func=cmd_experiment)

    s = sub.add_parser("gradcheck", parents=[common], help="analytic vs finite-difference gradients")
    s.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return args.func(args, out)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, MalformedRecord) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except SggMechError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECK_FAILED


if __name__ == "__main__":
    sys.exit(main())
