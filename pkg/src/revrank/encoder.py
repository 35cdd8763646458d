"""From-scratch trainable text encoder.

Pipeline: lowercase tokenizer → frequency vocabulary (UNK for everything
else) → mean-pooled token embeddings → linear projection to the latent
dimension.  Forward evaluation and exact analytic backward passes are both
provided; the backward pass is validated against central finite differences
in the test suite.

A trained model is a ``DualEncoder``: one shared vocabulary plus two
independent parameter sets, one for contexts and one for reviews.
Checkpoints are .npz archives; loading reproduces encode outputs bit-exactly.
"""

from __future__ import annotations

import re
import zipfile
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

CHECKPOINT_VERSION = 1

UNK = "<unk>"
MAX_TOKENS = 128

_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on runs of non-alphanumeric characters."""
    return [t for t in _TOKEN_SPLIT.split(text.lower()) if t]


@dataclass(frozen=True)
class Vocabulary:
    index: dict[str, int]
    min_frequency: int
    max_size: int

    def __post_init__(self):
        if UNK not in self.index:
            raise ValueError("vocabulary must contain the UNK token")
        indices = sorted(self.index.values())
        if indices != list(range(len(self.index))):
            raise ValueError("vocabulary indices must be dense in [0, |V|)")

    def __len__(self) -> int:
        return len(self.index)

    @property
    def unk_index(self) -> int:
        return self.index[UNK]

    def lookup(self, token: str) -> int:
        return self.index.get(token, self.unk_index)

    def encode_tokens(self, tokens: Sequence[str]) -> list[int]:
        return [self.lookup(t) for t in tokens[:MAX_TOKENS]]

    def to_tokens(self) -> list[str]:
        """Tokens in index order (UNK last by construction)."""
        ordered = sorted(self.index.items(), key=lambda kv: kv[1])
        return [t for t, _ in ordered]

    @classmethod
    def from_tokens(cls, tokens: Sequence[str], min_frequency: int, max_size: int) -> "Vocabulary":
        return cls(
            index={t: i for i, t in enumerate(tokens)},
            min_frequency=min_frequency,
            max_size=max_size,
        )


def build_vocabulary(
    corpus: Iterable[Sequence[str]], min_frequency: int = 1, max_size: int = 50000
) -> Vocabulary:
    """Frequency vocabulary over tokenized texts.

    Tokens with count >= min_frequency are kept, ordered most frequent
    first with lexicographic tie-breaks, truncated to max_size, and UNK is
    appended as the final index.
    """
    if min_frequency < 1:
        raise ValueError(f"min_frequency must be >= 1, got {min_frequency}")
    if max_size < 1:
        raise ValueError(f"max_size must be >= 1, got {max_size}")
    counts: dict[str, int] = {}
    seen_any = False
    for tokens in corpus:
        seen_any = True
        for token in tokens:
            counts[token] = counts.get(token, 0) + 1
    if not seen_any:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    kept = sorted(
        (t for t, c in counts.items() if c >= min_frequency),
        key=lambda t: (-counts[t], t),
    )[:max_size]
    kept.append(UNK)
    return Vocabulary(
        index={t: i for i, t in enumerate(kept)},
        min_frequency=min_frequency,
        max_size=max_size,
    )


@dataclass
class EncoderParams:
    """One encoder's trainable parameters.

    ``projection`` has shape (d_e, d): a pooled embedding row-vector m maps
    to ``m @ projection + bias``.
    """

    embedding: np.ndarray  # (|V|, d_e)
    projection: np.ndarray  # (d_e, d)
    bias: np.ndarray  # (d,)

    def __post_init__(self):
        if self.embedding.ndim != 2 or self.projection.ndim != 2 or self.bias.ndim != 1:
            raise ValueError("parameter arrays have wrong rank")
        if self.embedding.shape[1] != self.projection.shape[0]:
            raise ValueError(
                f"embedding dim {self.embedding.shape[1]} does not match "
                f"projection input dim {self.projection.shape[0]}"
            )
        if self.projection.shape[1] != self.bias.shape[0]:
            raise ValueError(
                f"projection output dim {self.projection.shape[1]} does not match "
                f"bias dim {self.bias.shape[0]}"
            )
        for name, arr in self.blocks().items():
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite entries in {name}")

    @property
    def vocab_size(self) -> int:
        return self.embedding.shape[0]

    @property
    def d_e(self) -> int:
        return self.embedding.shape[1]

    @property
    def d(self) -> int:
        return self.bias.shape[0]

    def blocks(self) -> dict[str, np.ndarray]:
        return {"embedding": self.embedding, "projection": self.projection, "bias": self.bias}

    def copy(self) -> "EncoderParams":
        return EncoderParams(
            embedding=self.embedding.copy(),
            projection=self.projection.copy(),
            bias=self.bias.copy(),
        )


@dataclass
class EncoderGradients:
    embedding: np.ndarray
    projection: np.ndarray
    bias: np.ndarray

    def blocks(self) -> dict[str, np.ndarray]:
        return {"embedding": self.embedding, "projection": self.projection, "bias": self.bias}


def init_params(d: int = 64, d_e: int = 64, vocab_size: int = 1, seed: int = 0) -> EncoderParams:
    """Uniform [-0.05, 0.05] weights, zero bias, deterministic under seed."""
    if d < 1 or d_e < 1 or vocab_size < 1:
        raise ValueError(f"dimensions must be positive, got d={d} d_e={d_e} |V|={vocab_size}")
    rng = np.random.default_rng(seed)
    return EncoderParams(
        embedding=rng.uniform(-0.05, 0.05, size=(vocab_size, d_e)),
        projection=rng.uniform(-0.05, 0.05, size=(d_e, d)),
        bias=np.zeros(d),
    )


def encode_ids(params: EncoderParams, token_ids: Sequence[int]) -> np.ndarray:
    """Latent vector for a pre-looked-up token id sequence."""
    if len(token_ids) == 0:
        raise ValueError("cannot encode an empty token sequence")
    pooled = params.embedding[np.asarray(token_ids, dtype=np.intp)].mean(axis=0)
    return pooled @ params.projection + params.bias


def encode(params: EncoderParams, vocab: Vocabulary, text: str) -> np.ndarray:
    """Tokenize, truncate, and encode one string."""
    ids = vocab.encode_tokens(tokenize(text))
    if not ids:
        raise ValueError(f"text tokenized to nothing: {text!r}")
    return encode_ids(params, ids)


def encode_batch_ids(params: EncoderParams, batches: Sequence[Sequence[int]]) -> np.ndarray:
    """Stack of latent vectors, one row per id sequence."""
    return np.stack([encode_ids(params, ids) for ids in batches])


def encode_backward_ids(
    params: EncoderParams,
    token_ids: Sequence[int],
    upstream: np.ndarray,
) -> EncoderGradients:
    """Exact gradients of ``upstream . encode_ids(params, token_ids)``.

    Embedding rows absent from token_ids get zero gradient; a row appearing
    k times among T tokens receives k/T of the pooled gradient.
    """
    if len(token_ids) == 0:
        raise ValueError("cannot backpropagate through an empty token sequence")
    upstream = np.asarray(upstream, dtype=float)
    if upstream.shape != (params.d,):
        raise ValueError(f"upstream gradient shape {upstream.shape} != ({params.d},)")
    ids = np.asarray(token_ids, dtype=np.intp)
    pooled = params.embedding[ids].mean(axis=0)
    grad_bias = upstream.copy()
    grad_projection = np.outer(pooled, upstream)
    grad_pooled = params.projection @ upstream
    grad_embedding = np.zeros_like(params.embedding)
    np.add.at(grad_embedding, ids, grad_pooled / len(ids))
    return EncoderGradients(
        embedding=grad_embedding, projection=grad_projection, bias=grad_bias
    )


@dataclass
class DualEncoder:
    """Shared vocabulary plus independent context and review encoders."""

    vocab: Vocabulary
    context: EncoderParams
    review: EncoderParams

    def __post_init__(self):
        if self.context.vocab_size != len(self.vocab) or self.review.vocab_size != len(
            self.vocab
        ):
            raise ValueError(
                f"encoder tables sized {self.context.vocab_size}/"
                f"{self.review.vocab_size} do not match vocabulary of {len(self.vocab)}"
            )

    def copy(self) -> "DualEncoder":
        return DualEncoder(
            vocab=self.vocab, context=self.context.copy(), review=self.review.copy()
        )


def save_checkpoint(model: DualEncoder, path: str | Path) -> None:
    """Persist a DualEncoder as an .npz archive."""
    tokens = model.vocab.to_tokens()
    np.savez(
        Path(path),
        format_version=np.array(CHECKPOINT_VERSION),
        vocab_tokens=np.array(tokens),
        vocab_min_frequency=np.array(model.vocab.min_frequency),
        vocab_max_size=np.array(model.vocab.max_size),
        context_embedding=model.context.embedding,
        context_projection=model.context.projection,
        context_bias=model.context.bias,
        review_embedding=model.review.embedding,
        review_projection=model.review.projection,
        review_bias=model.review.bias,
    )


def load_checkpoint(path: str | Path) -> DualEncoder:
    """Load a checkpoint written by save_checkpoint."""
    path = Path(path)
    try:
        data = np.load(path, allow_pickle=False)
    except (ValueError, zipfile.BadZipFile) as exc:
        raise ValueError(f"{path}: not a checkpoint archive ({exc})") from exc
    with data:
        try:
            version = int(data["format_version"])
            if version != CHECKPOINT_VERSION:
                raise ValueError(
                    f"checkpoint format version {version} not supported "
                    f"(expected {CHECKPOINT_VERSION})"
                )
            vocab = Vocabulary.from_tokens(
                [str(t) for t in data["vocab_tokens"]],
                min_frequency=int(data["vocab_min_frequency"]),
                max_size=int(data["vocab_max_size"]),
            )
            context = EncoderParams(
                embedding=data["context_embedding"],
                projection=data["context_projection"],
                bias=data["context_bias"],
            )
            review = EncoderParams(
                embedding=data["review_embedding"],
                projection=data["review_projection"],
                bias=data["review_bias"],
            )
        except KeyError as exc:
            raise ValueError(f"{path}: checkpoint is missing entry {exc}") from exc
    return DualEncoder(vocab=vocab, context=context, review=review)


def encode_backward_batch_ids(
    params: EncoderParams,
    batches: Sequence[Sequence[int]],
    upstream_rows: np.ndarray,
) -> EncoderGradients:
    """Summed gradients over a batch of sequences with per-row upstreams."""
    if len(batches) != len(upstream_rows):
        raise ValueError(
            f"{len(batches)} sequences but {len(upstream_rows)} upstream rows"
        )
    grad_embedding = np.zeros_like(params.embedding)
    grad_projection = np.zeros_like(params.projection)
    grad_bias = np.zeros_like(params.bias)
    for ids, upstream in zip(batches, upstream_rows):
        g = encode_backward_ids(params, ids, upstream)
        grad_embedding += g.embedding
        grad_projection += g.projection
        grad_bias += g.bias
    return EncoderGradients(
        embedding=grad_embedding, projection=grad_projection, bias=grad_bias
    )
