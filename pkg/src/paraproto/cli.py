"""Command-line entry points: train, evaluate, paraphrase, diversity,
synth-data, and report. Relative dataset paths resolve against
$PARAPROTO_DATA_DIR when set."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import numerics
from .data import PARTS, load_dataset, split_classes
from .decoding import CURVES, STRATEGIES, DecodeConfig, SynonymBigramLM, generate_paraphrases
from .encoder import load_checkpoint
from .experiment import (
    METHODS,
    RunConfig,
    RunReport,
    diversity_by_strategy,
    emit_report,
    run_experiment,
    run_pmask_sweep,
)
from .protonet import evaluate
from .synth import default_synonym_table, generate_synthetic_dataset

DATA_DIR_ENV = "PARAPROTO_DATA_DIR"


def resolve_data_path(path: str) -> str:
    candidate = Path(path)
    if candidate.is_absolute() or candidate.exists():
        return str(candidate)
    base = os.environ.get(DATA_DIR_ENV)
    if base and (Path(base) / candidate).exists():
        return str(Path(base) / candidate)
    return str(candidate)


def _add_decode_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--num-beams", type=int, default=None)
    parser.add_argument("--num-groups", type=int, default=None)
    parser.add_argument("--diversity-penalty", type=float, default=None)
    parser.add_argument("--p-mask", type=float, default=None)
    parser.add_argument("--curve", choices=CURVES, default=None)
    parser.add_argument("--max-len", type=int, default=None)


def _decode_overrides(args: argparse.Namespace) -> dict[str, str]:
    mapping = {
        "num_beams": args.num_beams,
        "num_groups": args.num_groups,
        "diversity_penalty": args.diversity_penalty,
        "p_mask": args.p_mask,
        "curve": args.curve,
        "max_len": args.max_len,
    }
    return {f"decode.{k}": str(v) for k, v in mapping.items() if v is not None}


def cmd_train(args: argparse.Namespace) -> int:
    overrides: dict[str, str] = dict(_decode_overrides(args))
    plain = {
        "dataset_path": resolve_data_path(args.dataset) if args.dataset else None,
        "strategy": args.strategy,
        "profile": args.profile,
        "n_way": args.n_way,
        "k_shot": args.k_shot,
        "query_per_class": args.query_per_class,
        "n_unlabeled": args.unlabeled,
        "n_paraphrases": args.paraphrases,
        "anneal_alpha": args.alpha,
        "max_episodes": args.max_episodes,
        "eval_every": args.eval_every,
        "patience": args.patience,
        "n_eval_episodes": args.eval_episodes,
        "seeds": args.seeds,
        "distance": args.distance,
        "learning_rate": args.learning_rate,
        "group_by_domain": args.group_by_domain,
        "paraphrase_cache": args.cache,
    }
    overrides.update({k: str(v) for k, v in plain.items() if v is not None})

    if args.config:
        base = RunConfig.from_text(Path(args.config).read_text(encoding="utf-8"))
        config = RunConfig.from_mapping(overrides, base=base) if overrides else base
    else:
        config = RunConfig.from_mapping(overrides)

    out_dir = Path(args.out)
    if args.pmask_sweep:
        report = run_pmask_sweep(config)
    else:
        report = run_experiment(
            config, checkpoint_dir=out_dir if args.save_checkpoints else None
        )
    written = emit_report(report, out_dir)
    if report.seed_results:
        print(f"{report.method}: mean test accuracy {report.mean_accuracy:.4f} "
              f"± {report.std_accuracy:.4f} over {len(report.seed_results)} seeds")
    for path in written:
        print(f"wrote {path}")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    params, vocab = load_checkpoint(args.checkpoint)
    dataset = load_dataset(resolve_data_path(args.dataset))
    ratios = tuple(float(x) for x in args.ratios.split(","))
    if len(ratios) != 3:
        raise ValueError("--ratios needs 3 comma-separated values")
    split = split_classes(dataset, ratios, seed=args.split_seed, group_by_domain=args.group_by_domain)
    rng = np.random.default_rng(args.seed)
    result = evaluate(
        params, vocab, dataset, split, args.part,
        args.n_way, args.k_shot, args.query_per_class, args.episodes, rng, args.distance,
    )
    print(f"{args.part} accuracy over {result.episode_count} episodes: {result.mean_accuracy:.4f}")
    return 0


def cmd_paraphrase(args: argparse.Namespace) -> int:
    corpus = load_dataset(resolve_data_path(args.corpus))
    lm = SynonymBigramLM(corpus.texts(), default_synonym_table())
    decode = DecodeConfig.from_text(
        "".join(f"{k[len('decode.') :]}={v}\n" for k, v in _decode_overrides(args).items())
    )
    if args.sentences == "-":
        lines = [line.strip() for line in sys.stdin if line.strip()]
    else:
        lines = [
            line.strip()
            for line in Path(args.sentences).read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]
    rng = np.random.default_rng(args.seed)
    out = open(args.out, "w", encoding="utf-8") if args.out != "-" else sys.stdout
    try:
        for sentence in lines:
            paraphrases = generate_paraphrases(
                lm, sentence, decode.num_groups if args.strategy != "stub_bt" else args.paraphrases,
                args.strategy, decode, rng,
            )
            out.write(json.dumps({"source": sentence, "paraphrases": paraphrases}) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def cmd_diversity(args: argparse.Namespace) -> int:
    dataset = load_dataset(resolve_data_path(args.dataset))
    strategies = tuple(s.strip() for s in args.strategies.split(",") if s.strip())
    decode_raw = _decode_overrides(args)
    decode = DecodeConfig.from_text(
        "".join(f"{k[len('decode.') :]}={v}\n" for k, v in decode_raw.items())
    )
    summary = diversity_by_strategy(
        dataset, strategies, n_sentences=args.n_sentences, decode=decode, seed=args.seed
    )
    text = json.dumps(summary, indent=2, sort_keys=True)
    if args.out == "-":
        print(text)
    else:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
        print(f"wrote {args.out}")
    return 0


def cmd_synth_data(args: argparse.Namespace) -> int:
    path = generate_synthetic_dataset(
        args.out,
        n_classes=args.classes,
        sentences_per_class=args.per_class,
        synonym_rate=args.synonym_rate,
        seed=args.seed,
    )
    print(f"wrote {path}")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    report = RunReport.from_json(Path(args.report).read_text(encoding="utf-8"))
    written = emit_report(report, args.out)
    for path in written:
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="paraproto",
        description="Few-shot intent classification with paraphrase-consistency training.",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run a multi-seed training experiment")
    p_train.add_argument("--dataset", default=None)
    p_train.add_argument("--config", default=None, help="key=value config file")
    p_train.add_argument("--strategy", choices=METHODS, default=None)
    p_train.add_argument("--profile", choices=("full", "low"), default=None)
    p_train.add_argument("--n-way", type=int, default=None)
    p_train.add_argument("--k-shot", type=int, default=None)
    p_train.add_argument("--query-per-class", type=int, default=None)
    p_train.add_argument("--unlabeled", type=int, default=None)
    p_train.add_argument("--paraphrases", type=int, default=None)
    p_train.add_argument("--alpha", type=float, default=None)
    p_train.add_argument("--max-episodes", type=int, default=None)
    p_train.add_argument("--eval-every", type=int, default=None)
    p_train.add_argument("--patience", type=int, default=None)
    p_train.add_argument("--eval-episodes", type=int, default=None)
    p_train.add_argument("--seeds", default=None, help="comma-separated seed list")
    p_train.add_argument("--distance", choices=numerics.DISTANCE_KINDS, default=None)
    p_train.add_argument("--learning-rate", type=float, default=None)
    p_train.add_argument("--group-by-domain", action="store_const", const=True, default=None,
                         help="keep each domain's classes within one split part")
    p_train.add_argument("--cache", action="store_const", const=True, default=None,
                         help="cache paraphrases per sentence within a run")
    p_train.add_argument("--pmask-sweep", action="store_true",
                         help="sweep p_mask over 0.0..1.0 instead of a single run")
    p_train.add_argument("--save-checkpoints", action="store_true")
    p_train.add_argument("--out", default="runs/latest")
    _add_decode_args(p_train)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("evaluate", help="episodic evaluation of a checkpoint")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--dataset", required=True)
    p_eval.add_argument("--part", choices=PARTS, default="test")
    p_eval.add_argument("--n-way", type=int, default=5)
    p_eval.add_argument("--k-shot", type=int, default=1)
    p_eval.add_argument("--query-per-class", type=int, default=5)
    p_eval.add_argument("--episodes", type=int, default=600)
    p_eval.add_argument("--split-seed", type=int, default=0)
    p_eval.add_argument("--ratios", default="0.5,0.2,0.3")
    p_eval.add_argument("--group-by-domain", action="store_true")
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--distance", choices=numerics.DISTANCE_KINDS, default="sqeuclidean")
    p_eval.set_defaults(func=cmd_evaluate)

    p_para = sub.add_parser("paraphrase", help="batch-paraphrase sentences to JSONL")
    p_para.add_argument("--corpus", required=True, help="JSONL dataset used to build the LM")
    p_para.add_argument("--sentences", default="-", help="file of sentences, one per line (- for stdin)")
    p_para.add_argument("--out", default="-")
    p_para.add_argument("--strategy", choices=STRATEGIES, default="dbs_unigram")
    p_para.add_argument("--paraphrases", type=int, default=5)
    p_para.add_argument("--seed", type=int, default=0)
    _add_decode_args(p_para)
    p_para.set_defaults(func=cmd_paraphrase)

    p_div = sub.add_parser("diversity", help="per-strategy paraphrase diversity summary")
    p_div.add_argument("--dataset", required=True)
    p_div.add_argument("--strategies", default=",".join(STRATEGIES))
    p_div.add_argument("--n-sentences", type=int, default=200)
    p_div.add_argument("--seed", type=int, default=0)
    p_div.add_argument("--out", default="-")
    _add_decode_args(p_div)
    p_div.set_defaults(func=cmd_diversity)

    p_synth = sub.add_parser("synth-data", help="generate the synthetic intent corpus")
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--classes", type=int, default=20)
    p_synth.add_argument("--per-class", type=int, default=30)
    p_synth.add_argument("--synonym-rate", type=float, default=0.5)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.set_defaults(func=cmd_synth_data)

    p_rep = sub.add_parser("report", help="re-emit CSV/plot files from a report.json")
    p_rep.add_argument("--report", required=True)
    p_rep.add_argument("--out", required=True)
    p_rep.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(message)s")
    try:
        return args.func(args)
    except Exception as exc:  # surface a diagnostic, exit nonzero
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
