"""Experiment orchestration: run configuration, the episodic training loop
with periodic validation and early stopping, multi-seed aggregation, the
p_mask sweep, per-strategy diversity summaries, and report emission."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import numerics
from .configio import format_kv, parse_bool, parse_kv_text
from .consistency import (
    AnnealSchedule,
    StepLosses,
    UnlabeledBatch,
    combined_training_step,
    format_step_log,
)
from .data import TRAIN, VALID, TEST, Dataset, load_dataset, restrict_low_profile, split_classes, sample_episode
from .decoding import STRATEGIES, DecodeConfig, SynonymBigramLM, generate_paraphrases
from .encoder import AdamState, EncoderParams, Vocabulary, optimizer_step, save_checkpoint
from .metrics import diversity_report
from .protonet import evaluate, supervised_episode_loss
from .synth import default_synonym_table

logger = logging.getLogger("paraproto")

PROFILES = ("full", "low")
METHODS = ("none",) + STRATEGIES


@dataclass
class RunConfig:
    """One experiment: a method (paraphrase strategy or plain supervised
    baseline) trained and tested over several seeds."""

    dataset_path: str
    profile: str = "full"
    n_way: int = 5
    k_shot: int = 1
    query_per_class: int = 5
    n_unlabeled: int = 5
    n_paraphrases: int = 5
    strategy: str = "none"
    decode: DecodeConfig = field(default_factory=DecodeConfig)
    anneal_alpha: float = 1.0
    max_episodes: int = 10000
    eval_every: int = 100
    patience: int = 20
    n_eval_episodes: int = 600
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    distance: str = numerics.SQUARED_EUCLIDEAN
    split_ratios: tuple[float, float, float] = (0.5, 0.25, 0.25)
    group_by_domain: bool = False
    low_profile_n: int = 10
    embed_dim: int = 32
    output_dim: int = 32
    learning_rate: float = 1e-3
    paraphrase_cache: bool = False

    def __post_init__(self):
        if self.profile not in PROFILES:
            raise ValueError(f"profile must be one of {PROFILES}")
        if self.strategy not in METHODS:
            raise ValueError(f"strategy must be one of {METHODS}")
        if self.n_way < 2:
            raise ValueError("n_way must be >= 2")
        if self.k_shot < 1:
            raise ValueError("k_shot must be >= 1")
        if self.max_episodes < self.eval_every:
            raise ValueError("max_episodes must be >= eval_every")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if not self.seeds:
            raise ValueError("need at least one seed")
        if self.distance not in numerics.DISTANCE_KINDS:
            raise ValueError(f"distance must be one of {numerics.DISTANCE_KINDS}")

    def to_text(self) -> str:
        pairs = {
            "dataset_path": self.dataset_path,
            "profile": self.profile,
            "n_way": self.n_way,
            "k_shot": self.k_shot,
            "query_per_class": self.query_per_class,
            "n_unlabeled": self.n_unlabeled,
            "n_paraphrases": self.n_paraphrases,
            "strategy": self.strategy,
            "anneal_alpha": self.anneal_alpha,
            "max_episodes": self.max_episodes,
            "eval_every": self.eval_every,
            "patience": self.patience,
            "n_eval_episodes": self.n_eval_episodes,
            "seeds": ",".join(str(s) for s in self.seeds),
            "distance": self.distance,
            "split_ratios": ",".join(repr(r) for r in self.split_ratios),
            "group_by_domain": self.group_by_domain,
            "low_profile_n": self.low_profile_n,
            "embed_dim": self.embed_dim,
            "output_dim": self.output_dim,
            "learning_rate": self.learning_rate,
            "paraphrase_cache": self.paraphrase_cache,
        }
        decode_pairs = {
            f"decode.{k}": v for k, v in parse_kv_text(self.decode.to_text()).items()
        }
        return format_kv({**pairs, **decode_pairs})

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        raw = parse_kv_text(text)
        return cls.from_mapping(raw)

    @classmethod
    def from_mapping(cls, raw: dict[str, str], base: "RunConfig | None" = None) -> "RunConfig":
        """Build a config from string key/value pairs, optionally overriding a
        base config (command-line overrides on top of a config file)."""
        ints = {
            "n_way", "k_shot", "query_per_class", "n_unlabeled", "n_paraphrases",
            "max_episodes", "eval_every", "patience", "n_eval_episodes",
            "low_profile_n", "embed_dim", "output_dim",
        }
        floats = {"anneal_alpha", "learning_rate"}
        strings = {"dataset_path", "profile", "strategy", "distance"}
        bools = {"group_by_domain", "paraphrase_cache"}

        kwargs: dict = {}
        decode_raw: dict[str, str] = {}
        for key, value in raw.items():
            if key.startswith("decode."):
                decode_raw[key[len("decode.") :]] = value
            elif key in ints:
                kwargs[key] = int(value)
            elif key in floats:
                kwargs[key] = float(value)
            elif key in strings:
                kwargs[key] = value
            elif key in bools:
                kwargs[key] = parse_bool(value)
            elif key == "seeds":
                kwargs[key] = tuple(int(s) for s in value.split(",") if s.strip())
            elif key == "split_ratios":
                parts = tuple(float(s) for s in value.split(","))
                if len(parts) != 3:
                    raise ValueError("split_ratios needs 3 comma-separated values")
                kwargs[key] = parts
            else:
                raise ValueError(f"unknown run config key: {key!r}")

        if base is None:
            if "dataset_path" not in kwargs:
                raise ValueError("dataset_path is required")
            decode = DecodeConfig.from_text(format_kv(decode_raw)) if decode_raw else DecodeConfig()
            return cls(decode=decode, **kwargs)
        decode = base.decode
        if decode_raw:
            merged = parse_kv_text(base.decode.to_text())
            merged.update(decode_raw)
            decode = DecodeConfig.from_text(format_kv(merged))
        return replace(base, decode=decode, **kwargs)


@dataclass
class SeedResult:
    """Everything observed during one seeded run, including the instrumented
    counters that pin down protocol fidelity."""

    seed: int
    test_accuracy: float
    best_val_accuracy: float
    best_eval_index: int
    episodes_run: int
    n_evaluations: int
    eval_episode_count: int
    stopped_early: bool
    loss_curve: list[tuple[int, float, float, float, float]]
    val_curve: list[tuple[int, float]]


@dataclass
class RunReport:
    method: str
    profile: str
    n_way: int
    k_shot: int
    seed_results: list[SeedResult]
    pmask_series: list[tuple[float, float, float]] | None = None
    diversity: dict[str, dict[str, float]] | None = None

    @property
    def seed_accuracies(self) -> list[float]:
        return [r.test_accuracy for r in self.seed_results]

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean(self.seed_accuracies))

    @property
    def std_accuracy(self) -> float:
        return float(np.std(self.seed_accuracies))

    def to_json(self) -> str:
        payload = {
            "method": self.method,
            "profile": self.profile,
            "n_way": self.n_way,
            "k_shot": self.k_shot,
            "seed_results": [
                {
                    "seed": r.seed,
                    "test_accuracy": r.test_accuracy,
                    "best_val_accuracy": r.best_val_accuracy,
                    "best_eval_index": r.best_eval_index,
                    "episodes_run": r.episodes_run,
                    "n_evaluations": r.n_evaluations,
                    "eval_episode_count": r.eval_episode_count,
                    "stopped_early": r.stopped_early,
                    "loss_curve": r.loss_curve,
                    "val_curve": r.val_curve,
                }
                for r in self.seed_results
            ],
            "mean_accuracy": self.mean_accuracy if self.seed_results else None,
            "std_accuracy": self.std_accuracy if self.seed_results else None,
            "pmask_series": self.pmask_series,
            "diversity": self.diversity,
        }
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        obj = json.loads(text)
        seed_results = [
            SeedResult(
                seed=r["seed"],
                test_accuracy=r["test_accuracy"],
                best_val_accuracy=r["best_val_accuracy"],
                best_eval_index=r["best_eval_index"],
                episodes_run=r["episodes_run"],
                n_evaluations=r["n_evaluations"],
                eval_episode_count=r["eval_episode_count"],
                stopped_early=r["stopped_early"],
                loss_curve=[tuple(x) for x in r["loss_curve"]],
                val_curve=[tuple(x) for x in r["val_curve"]],
            )
            for r in obj["seed_results"]
        ]
        return cls(
            method=obj["method"],
            profile=obj["profile"],
            n_way=obj["n_way"],
            k_shot=obj["k_shot"],
            seed_results=seed_results,
            pmask_series=[tuple(x) for x in obj["pmask_series"]] if obj["pmask_series"] else None,
            diversity=obj["diversity"],
        )


def _rngs(seed: int, n: int) -> list[np.random.Generator]:
    return [np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(seed).spawn(n)]


def train_single_seed(
    config: RunConfig, seed: int, dataset: Dataset
) -> tuple[SeedResult, EncoderParams, Vocabulary]:
    """Train one seeded run; returns the result plus the best-validation
    checkpoint (parameters and vocabulary)."""
    split = split_classes(
        dataset, config.split_ratios, seed=seed, group_by_domain=config.group_by_domain
    )
    working = (
        restrict_low_profile(dataset, split, config.low_profile_n, seed=seed)
        if config.profile == "low"
        else dataset
    )
    vocab = Vocabulary.from_texts(working.texts())
    rng_init, rng_episode, rng_valid, rng_test, rng_decode = _rngs(seed, 5)

    params = EncoderParams.init(len(vocab), config.embed_dim, config.output_dim, rng_init)
    adam = AdamState.for_params(params, config.learning_rate)
    schedule = AnnealSchedule(alpha=config.anneal_alpha, total_steps=config.max_episodes)
    lm = (
        SynonymBigramLM(working.texts(), default_synonym_table())
        if config.strategy != "none"
        else None
    )
    cache: dict[str, list[str]] | None = {} if config.paraphrase_cache else None

    best_val = -np.inf
    best_params = params.copy()
    best_eval_index = 0
    evals_since_best = 0
    n_evaluations = 0
    stopped_early = False
    loss_curve: list[tuple[int, float, float, float, float]] = []
    val_curve: list[tuple[int, float]] = []
    episodes_run = 0

    for step in range(1, config.max_episodes + 1):
        episode = sample_episode(
            working,
            split,
            TRAIN,
            config.n_way,
            config.k_shot,
            config.query_per_class,
            config.n_unlabeled if config.strategy != "none" else 0,
            rng_episode,
        )
        episodes_run = step
        if config.strategy == "none":
            sup_loss, grads = supervised_episode_loss(episode, params, vocab, config.distance)
            optimizer_step(adam, params, grads)
            losses = StepLosses(total=sup_loss, supervised=sup_loss, unsupervised=0.0, weight=0.0)
        else:
            paraphrases = []
            for sentence in episode.unlabeled:
                if cache is not None and sentence in cache:
                    paraphrases.append(cache[sentence])
                    continue
                generated = generate_paraphrases(
                    lm, sentence, config.n_paraphrases, config.strategy, config.decode, rng_decode
                )
                if cache is not None:
                    cache[sentence] = generated
                paraphrases.append(generated)
            batch = UnlabeledBatch(sentences=list(episode.unlabeled), paraphrases=paraphrases)
            losses = combined_training_step(
                episode, batch, params, adam, schedule, step, vocab, config.distance
            )
        loss_curve.append(
            (step, losses.supervised, losses.unsupervised, losses.weight, losses.total)
        )
        logger.debug(format_step_log(step, losses))

        if step % config.eval_every == 0:
            result = evaluate(
                params, vocab, working, split, VALID,
                config.n_way, config.k_shot, config.query_per_class,
                config.n_eval_episodes, rng_valid, config.distance,
            )
            n_evaluations += 1
            val_curve.append((step, result.mean_accuracy))
            if result.mean_accuracy > best_val:
                best_val = result.mean_accuracy
                best_params = params.copy()
                best_eval_index = n_evaluations
                evals_since_best = 0
            else:
                evals_since_best += 1
            logger.info(
                "eval at episode %d: valid accuracy %.4f (best %.4f)",
                step, result.mean_accuracy, best_val,
            )
            if evals_since_best >= config.patience:
                stopped_early = True
                break

    test = evaluate(
        best_params, vocab, working, split, TEST,
        config.n_way, config.k_shot, config.query_per_class,
        config.n_eval_episodes, rng_test, config.distance,
    )
    result = SeedResult(
        seed=seed,
        test_accuracy=test.mean_accuracy,
        best_val_accuracy=float(best_val),
        best_eval_index=best_eval_index,
        episodes_run=episodes_run,
        n_evaluations=n_evaluations,
        eval_episode_count=config.n_eval_episodes,
        stopped_early=stopped_early,
        loss_curve=loss_curve,
        val_curve=val_curve,
    )
    return result, best_params, vocab


def run_experiment(config: RunConfig, checkpoint_dir: str | Path | None = None) -> RunReport:
    """Train every seed and aggregate test accuracies at the best-validation
    checkpoints. Configuration and dataset errors surface before training."""
    dataset = load_dataset(config.dataset_path)
    seed_results = []
    for seed in config.seeds:
        result, best_params, vocab = train_single_seed(config, seed, dataset)
        seed_results.append(result)
        logger.info("seed %d: test accuracy %.4f", seed, result.test_accuracy)
        if checkpoint_dir is not None:
            path = Path(checkpoint_dir)
            path.mkdir(parents=True, exist_ok=True)
            save_checkpoint(path / f"seed{seed}_best.npz", best_params, vocab)
    return RunReport(
        method=config.strategy,
        profile=config.profile,
        n_way=config.n_way,
        k_shot=config.k_shot,
        seed_results=seed_results,
    )


PMASK_GRID = tuple(round(0.1 * i, 1) for i in range(11))


def run_pmask_sweep(config: RunConfig) -> RunReport:
    """Accuracy-versus-p_mask series over the 0.0..1.0 grid (step 0.1),
    using the unigram masking strategy throughout."""
    series = []
    for p_mask in PMASK_GRID:
        cfg = replace(
            config,
            strategy="dbs_unigram",
            decode=replace(config.decode, p_mask=p_mask, strategy="dbs_unigram"),
        )
        report = run_experiment(cfg)
        series.append((p_mask, report.mean_accuracy, report.std_accuracy))
        logger.info("p_mask %.1f: mean accuracy %.4f", p_mask, report.mean_accuracy)
    return RunReport(
        method="dbs_unigram",
        profile=config.profile,
        n_way=config.n_way,
        k_shot=config.k_shot,
        seed_results=[],
        pmask_series=series,
    )


def diversity_by_strategy(
    dataset: Dataset,
    strategies: tuple[str, ...] = STRATEGIES,
    n_sentences: int = 200,
    decode: DecodeConfig | None = None,
    seed: int = 0,
    encoder_params: EncoderParams | None = None,
    vocab: Vocabulary | None = None,
) -> dict[str, dict[str, float]]:
    """Mean diversity-report fields per strategy over sampled corpus sentences."""
    decode = decode or DecodeConfig()
    texts = dataset.texts()
    vocab = vocab or Vocabulary.from_texts(texts)
    if encoder_params is None:
        encoder_params = EncoderParams.init(len(vocab), rng=np.random.default_rng(seed))
    lm = SynonymBigramLM(texts, default_synonym_table())
    picker = np.random.default_rng(seed)
    n = min(n_sentences, len(texts))
    sentences = [texts[i] for i in picker.choice(len(texts), size=n, replace=False)]

    out: dict[str, dict[str, float]] = {}
    for si, strategy in enumerate(sorted(strategies)):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, si])))
        fields = {"dist2": [], "bleu_vs_source": [], "mean_pairwise_similarity": []}
        for sentence in sentences:
            paraphrases = generate_paraphrases(
                lm, sentence, decode.num_groups, strategy, decode, rng
            )
            report = diversity_report(sentence, paraphrases, encoder_params, vocab)
            fields["dist2"].append(report.dist2)
            fields["bleu_vs_source"].append(report.bleu_vs_source)
            fields["mean_pairwise_similarity"].append(report.mean_pairwise_similarity)
        out[strategy] = {k: float(np.mean(v)) for k, v in fields.items()}
    return out


def emit_report(report: RunReport, out_dir: str | Path) -> list[Path]:
    """Write report.json, a results CSV, and (when present) the p_mask plot
    series. Returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    json_path = out / "report.json"
    json_path.write_text(report.to_json() + "\n", encoding="utf-8")
    written.append(json_path)

    if report.seed_results:
        csv_path = out / "results.csv"
        with open(csv_path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(["method", "profile", "k_shot", "seed_accuracies", "mean", "std"])
            writer.writerow(
                [
                    report.method,
                    report.profile,
                    report.k_shot,
                    " ".join(repr(a) for a in report.seed_accuracies),
                    repr(report.mean_accuracy),
                    repr(report.std_accuracy),
                ]
            )
        written.append(csv_path)

    if report.pmask_series:
        series_path = out / "pmask_series.csv"
        with open(series_path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(["p_mask", "mean_accuracy", "std_accuracy"])
            for p_mask, mean, std in report.pmask_series:
                writer.writerow([repr(p_mask), repr(mean), repr(std)])
        written.append(series_path)
    return written


def parse_results_csv(path: str | Path) -> list[dict]:
    """Read back a results CSV, recovering the exact float values."""
    rows = []
    with open(path, newline="", encoding="utf-8") as handle:
        for record in csv.DictReader(handle):
            rows.append(
                {
                    "method": record["method"],
                    "profile": record["profile"],
                    "k_shot": int(record["k_shot"]),
                    "seed_accuracies": [float(x) for x in record["seed_accuracies"].split()],
                    "mean": float(record["mean"]),
                    "std": float(record["std"]),
                }
            )
    return rows
