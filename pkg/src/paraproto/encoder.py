"""Trainable sentence encoder: whitespace/punctuation tokenizer, a
mean-of-embeddings + tanh projection network with a hand-derived backward
pass, Adam updates, and bit-exact checkpointing.

The architecture is deliberately the smallest trainable encoder that supports
the episodic losses in this package: every gradient can be checked against
finite differences.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

UNK = "<unk>"

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")

DEFAULT_EMBED_DIM = 32
DEFAULT_OUTPUT_DIM = 32


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, detach punctuation as separate tokens."""
    return _TOKEN_RE.findall(text.lower())


class Vocabulary:
    """Dense token -> index map with a reserved UNK entry at index 0."""

    def __init__(self, tokens: Iterable[str]):
        ordered = [UNK]
        seen = {UNK}
        for tok in tokens:
            if tok not in seen:
                seen.add(tok)
                ordered.append(tok)
        self._index = {tok: i for i, tok in enumerate(ordered)}
        self.tokens = ordered

    @classmethod
    def from_texts(cls, texts: Iterable[str]) -> "Vocabulary":
        # sorted union keeps the index assignment independent of text order
        seen: set[str] = set()
        for text in texts:
            seen.update(tokenize(text))
        return cls(sorted(seen))

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    @property
    def unk_index(self) -> int:
        return 0

    def index(self, token: str) -> int:
        return self._index.get(token, 0)

    def indices(self, tokens: Sequence[str]) -> np.ndarray:
        if not tokens:
            return np.array([0], dtype=np.intp)  # empty sentence -> lone UNK
        return np.array([self._index.get(t, 0) for t in tokens], dtype=np.intp)


@dataclass
class EncoderParams:
    """Learnable state: V x d_emb embedding table, d x d_emb projection, d bias."""

    embedding: np.ndarray
    projection: np.ndarray
    bias: np.ndarray

    @classmethod
    def init(
        cls,
        vocab_size: int,
        embed_dim: int = DEFAULT_EMBED_DIM,
        output_dim: int = DEFAULT_OUTPUT_DIM,
        rng: np.random.Generator | None = None,
    ) -> "EncoderParams":
        rng = rng or np.random.default_rng(0)
        embedding = rng.uniform(-0.1, 0.1, size=(vocab_size, embed_dim))
        scale = 1.0 / np.sqrt(embed_dim)
        projection = rng.uniform(-scale, scale, size=(output_dim, embed_dim))
        bias = np.zeros(output_dim)
        return cls(embedding=embedding, projection=projection, bias=bias)

    @property
    def output_dim(self) -> int:
        return self.bias.shape[0]

    def copy(self) -> "EncoderParams":
        return EncoderParams(
            embedding=self.embedding.copy(),
            projection=self.projection.copy(),
            bias=self.bias.copy(),
        )

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.embedding, self.projection, self.bias

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def with_flat(self, flat: np.ndarray) -> "EncoderParams":
        """Rebuild the same shapes from a flat vector (used by gradient checks)."""
        out = []
        offset = 0
        for a in self.arrays():
            out.append(flat[offset : offset + a.size].reshape(a.shape))
            offset += a.size
        if offset != flat.size:
            raise ValueError(f"flat vector has {flat.size} entries, expected {offset}")
        return EncoderParams(*[np.asarray(x, dtype=np.float64) for x in out])


@dataclass
class EncoderGradients:
    """Gradient accumulator shaped like EncoderParams."""

    embedding: np.ndarray
    projection: np.ndarray
    bias: np.ndarray

    @classmethod
    def zeros_like(cls, params: EncoderParams) -> "EncoderGradients":
        return cls(
            embedding=np.zeros_like(params.embedding),
            projection=np.zeros_like(params.projection),
            bias=np.zeros_like(params.bias),
        )

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.embedding, self.projection, self.bias

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def add_scaled(self, other: "EncoderGradients", scale: float) -> None:
        self.embedding += scale * other.embedding
        self.projection += scale * other.projection
        self.bias += scale * other.bias


def encode(params: EncoderParams, tokens: Sequence[str], vocab: Vocabulary) -> np.ndarray:
    """tanh(W . mean(embedding rows) + b). Empty token lists encode as UNK."""
    ids = vocab.indices(tokens)
    mean_emb = params.embedding[ids].mean(axis=0)
    return np.tanh(params.projection @ mean_emb + params.bias)


def encode_backward(
    params: EncoderParams,
    tokens: Sequence[str],
    vocab: Vocabulary,
    upstream: np.ndarray,
    into: EncoderGradients | None = None,
) -> EncoderGradients:
    """Exact gradients of encode w.r.t. all touched parameters.

    Recomputes the forward pass internally; rows of tokens absent from the
    sentence receive zero gradient. Accumulates into `into` when given.
    """
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != params.bias.shape:
        raise ValueError(
            f"upstream gradient has shape {upstream.shape}, expected {params.bias.shape}"
        )
    grads = into if into is not None else EncoderGradients.zeros_like(params)
    ids = vocab.indices(tokens)
    mean_emb = params.embedding[ids].mean(axis=0)
    out = np.tanh(params.projection @ mean_emb + params.bias)
    d_pre = upstream * (1.0 - out * out)
    grads.bias += d_pre
    grads.projection += np.outer(d_pre, mean_emb)
    d_mean = params.projection.T @ d_pre
    np.add.at(grads.embedding, ids, d_mean / len(ids))
    return grads


@dataclass
class AdamState:
    """Adam moments over the three parameter arrays, plus hyperparameters."""

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: EncoderParams, learning_rate: float = 1e-3) -> "AdamState":
        state = cls(learning_rate=learning_rate)
        state.m = [np.zeros_like(a) for a in params.arrays()]
        state.v = [np.zeros_like(a) for a in params.arrays()]
        return state


def optimizer_step(
    state: AdamState, params: EncoderParams, grads: EncoderGradients
) -> tuple[EncoderParams, AdamState]:
    """One in-place Adam update with bias correction."""
    for g in grads.arrays():
        if not np.all(np.isfinite(g)):
            raise ValueError("non-finite gradient passed to optimizer")
    state.step_count += 1
    bc1 = 1.0 - state.beta1**state.step_count
    bc2 = 1.0 - state.beta2**state.step_count
    for p, g, m, v in zip(params.arrays(), grads.arrays(), state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)
    return params, state


def save_checkpoint(path: str | Path, params: EncoderParams, vocab: Vocabulary) -> None:
    """Write all matrices (shapes carried in the container) plus the vocabulary."""
    np.savez(
        path,
        embedding=params.embedding,
        projection=params.projection,
        bias=params.bias,
        vocab=np.array(vocab.tokens, dtype=object),
    )


def load_checkpoint(path: str | Path) -> tuple[EncoderParams, Vocabulary]:
    with np.load(path if str(path).endswith(".npz") else f"{path}.npz", allow_pickle=True) as data:
        params = EncoderParams(
            embedding=data["embedding"],
            projection=data["projection"],
            bias=data["bias"],
        )
        tokens = [str(t) for t in data["vocab"]]
    if tokens[0] != UNK:
        raise ValueError("corrupt checkpoint: UNK not at index 0")
    return params, Vocabulary(tokens[1:])
