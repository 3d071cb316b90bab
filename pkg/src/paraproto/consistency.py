"""Paraphrase-consistency training: an unsupervised loss that pulls every
unlabeled sentence toward the mean embedding of its own paraphrases and away
from other sentences' paraphrase means, plus the annealed combination of this
loss with the supervised episode loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics
from .data import Episode
from .encoder import (
    AdamState,
    EncoderGradients,
    EncoderParams,
    Vocabulary,
    encode,
    encode_backward,
    optimizer_step,
    tokenize,
)
from .protonet import Prototypes, softmax_cross_entropy_episode, supervised_episode_loss


@dataclass
class UnlabeledBatch:
    """U unlabeled sentences, each with exactly M paraphrases."""

    sentences: list[str]
    paraphrases: list[list[str]]

    def __post_init__(self):
        if not self.sentences:
            raise ValueError("unlabeled batch is empty")
        if len(self.paraphrases) != len(self.sentences):
            raise ValueError("one paraphrase list per sentence required")
        m = len(self.paraphrases[0])
        if m < 1 or any(len(p) != m for p in self.paraphrases):
            raise ValueError("ragged paraphrase lists: every sentence needs the same M >= 1")

    @property
    def n_sentences(self) -> int:
        return len(self.sentences)

    @property
    def n_paraphrases(self) -> int:
        return len(self.paraphrases[0])


@dataclass(frozen=True)
class AnnealSchedule:
    """Weight t^alpha on the unsupervised loss, t = step / total_steps."""

    alpha: float = 1.0
    total_steps: int = 10000

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.total_steps < 1:
            raise ValueError("total_steps must be >= 1")


@dataclass
class StepLosses:
    """Per-step log record: combined, supervised, unsupervised, and the weight."""

    total: float
    supervised: float
    unsupervised: float
    weight: float


def anneal_weight(step: int, schedule: AnnealSchedule) -> float:
    if not 0 <= step <= schedule.total_steps:
        raise ValueError(f"step {step} outside [0, {schedule.total_steps}]")
    t = step / schedule.total_steps
    return t**schedule.alpha


def unlabeled_prototypes(paraphrase_embeddings: np.ndarray) -> Prototypes:
    """Mean paraphrase embedding per unlabeled sentence; input is (U, M, d)."""
    embs = np.asarray(paraphrase_embeddings, dtype=np.float64)
    if embs.ndim != 3:
        raise ValueError(f"expected rectangular U x M x d embeddings, got shape {embs.shape}")
    means = embs.mean(axis=1)
    return Prototypes(vectors=means, labels=[str(u) for u in range(means.shape[0])])


def consistency_distribution(
    unlabeled_embedding: np.ndarray,
    prototypes: Prototypes,
    distance: str = numerics.SQUARED_EUCLIDEAN,
) -> np.ndarray:
    """Probability of assigning one unlabeled sentence to each paraphrase mean."""
    from .protonet import classify

    return classify(unlabeled_embedding, prototypes, distance)


def unsupervised_loss(
    batch: UnlabeledBatch,
    params: EncoderParams,
    vocab: Vocabulary,
    distance: str = numerics.SQUARED_EUCLIDEAN,
) -> tuple[float, EncoderGradients]:
    """Mean cross-entropy of each sentence against its own paraphrase mean.

    Gradients flow through the sentence embeddings and through every
    paraphrase embedding; there is no stop-gradient on either side.
    """
    sent_tokens = [tokenize(s) for s in batch.sentences]
    para_tokens = [[tokenize(p) for p in row] for row in batch.paraphrases]

    sent_embs = np.array([encode(params, toks, vocab) for toks in sent_tokens])
    para_embs = np.array(
        [[encode(params, toks, vocab) for toks in row] for row in para_tokens]
    )
    protos = para_embs.mean(axis=1)
    targets = np.arange(batch.n_sentences)

    loss, d_sent, d_proto = softmax_cross_entropy_episode(sent_embs, protos, targets, distance)

    grads = EncoderGradients.zeros_like(params)
    for toks, g in zip(sent_tokens, d_sent):
        encode_backward(params, toks, vocab, g, into=grads)
    m = batch.n_paraphrases
    for row, g_proto in zip(para_tokens, d_proto):
        for toks in row:
            encode_backward(params, toks, vocab, g_proto / m, into=grads)
    return loss, grads


def combined_training_step(
    episode: Episode,
    batch: UnlabeledBatch,
    params: EncoderParams,
    optimizer_state: AdamState,
    schedule: AnnealSchedule,
    step: int,
    vocab: Vocabulary,
    distance: str = numerics.SQUARED_EUCLIDEAN,
) -> StepLosses:
    """One annealed update: weight * unsupervised + (1 - weight) * supervised.

    Both losses are evaluated at the current parameters and their gradients
    combined linearly before a single optimizer step (params updated in place).
    """
    weight = anneal_weight(step, schedule)
    sup_loss, sup_grads = supervised_episode_loss(episode, params, vocab, distance)
    unsup_loss, unsup_grads = unsupervised_loss(batch, params, vocab, distance)

    combined = EncoderGradients.zeros_like(params)
    combined.add_scaled(sup_grads, 1.0 - weight)
    combined.add_scaled(unsup_grads, weight)
    optimizer_step(optimizer_state, params, combined)

    total = weight * unsup_loss + (1.0 - weight) * sup_loss
    return StepLosses(total=total, supervised=sup_loss, unsupervised=unsup_loss, weight=weight)


def format_step_log(step: int, losses: StepLosses) -> str:
    """Structured per-step training log line."""
    return (
        f"step={step} sup={losses.supervised:.6f} unsup={losses.unsupervised:.6f} "
        f"weight={losses.weight:.6f} total={losses.total:.6f}"
    )
