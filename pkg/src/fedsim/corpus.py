"""Plain-text corpus ingestion, vocabulary, IID sharding, BPTT batching.

Corpora are whitespace-tokenized UTF-8 text files (PTB / WikiText style);
each line end becomes an end-of-sentence token. The training stream is
cut into contiguous token blocks which are shuffled and dealt round-robin
into client shards, so each shard keeps sentence-scale context.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import DataError
from .rng import SeededRng

__all__ = [
    "UNK_TOKEN",
    "EOS_TOKEN",
    "Vocabulary",
    "TokenStream",
    "Partition",
    "CorpusData",
    "tokenize",
    "build_vocab",
    "encode",
    "partition_iid",
    "batchify",
    "load_corpus",
]

UNK_TOKEN = "<unk>"
EOS_TOKEN = "<eos>"


def tokenize(text: str) -> list[str]:
    """Whitespace-split each line and append an EOS marker per line."""
    tokens: list[str] = []
    for line in text.splitlines():
        words = line.split()
        if not words:
            continue
        tokens.extend(words)
        tokens.append(EOS_TOKEN)
    return tokens


@dataclass
class Vocabulary:
    """Bijection between tokens and ids, with UNK and EOS always present."""

    token_to_id: dict[str, int]
    id_to_token: list[str]
    unk_id: int = 0
    eos_id: int = 1

    def __len__(self) -> int:
        return len(self.id_to_token)

    def lookup(self, token: str) -> int:
        return self.token_to_id.get(token, self.unk_id)

    def decode(self, ids) -> list[str]:
        return [self.id_to_token[int(i)] for i in ids]


@dataclass
class TokenStream:
    """Encoded token ids for one corpus split."""

    ids: np.ndarray
    split: str = "train"

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)

    def __len__(self) -> int:
        return int(self.ids.size)


@dataclass
class Partition:
    """Disjoint client shards of the training stream plus the stream seed used."""

    shards: list[np.ndarray]
    seed: str
    block_len: int = 0
    dropped_tokens: int = 0

    @property
    def k(self) -> int:
        return len(self.shards)


def build_vocab(tokens: list[str], max_size: int) -> Vocabulary:
    """Keep the most frequent tokens up to `max_size` total entries.

    UNK and EOS occupy two of the `max_size` slots; ties in frequency are
    broken by first appearance in the input.
    """
    if not tokens:
        raise DataError("cannot build a vocabulary from empty text")
    if max_size < 2:
        raise DataError(f"max_size must be at least 2 (UNK and EOS), got {max_size}")
    counts = Counter(t for t in tokens if t not in (UNK_TOKEN, EOS_TOKEN))
    # Counter preserves insertion order, so sorting by -count is stable
    # with respect to first appearance.
    ranked = sorted(counts.items(), key=lambda kv: -kv[1])
    keep = [tok for tok, _ in ranked[: max_size - 2]]
    id_to_token = [UNK_TOKEN, EOS_TOKEN] + keep
    token_to_id = {tok: i for i, tok in enumerate(id_to_token)}
    return Vocabulary(token_to_id=token_to_id, id_to_token=id_to_token)


def encode(tokens: list[str], vocab: Vocabulary, split: str = "train") -> TokenStream:
    """Map tokens to ids; out-of-vocabulary tokens become UNK."""
    ids = np.fromiter((vocab.lookup(t) for t in tokens), dtype=np.int64, count=len(tokens))
    return TokenStream(ids=ids, split=split)


def partition_iid(
    stream: TokenStream, k: int, block_len: int, rng: SeededRng
) -> Partition:
    """Shuffle contiguous `block_len`-token blocks and deal them into k shards.

    Shards are pairwise disjoint and cover the stream except for the
    trailing remainder of fewer than `block_len` tokens; shard sizes
    differ by at most one block.
    """
    if k < 1:
        raise ValueError(f"client count must be >= 1, got {k}")
    if block_len < 1:
        raise ValueError(f"block_len must be >= 1, got {block_len}")
    n = len(stream)
    if n < k * block_len:
        raise DataError(
            f"stream of {n} tokens is too short to partition into {k} shards "
            f"of >= 1 block ({block_len} tokens); need at least {k * block_len}"
        )
    num_blocks = n // block_len
    blocks = stream.ids[: num_blocks * block_len].reshape(num_blocks, block_len)
    order = rng.permutation(num_blocks)
    shards = [blocks[order[i::k]].reshape(-1).copy() for i in range(k)]
    return Partition(
        shards=shards,
        seed=rng.signature,
        block_len=block_len,
        dropped_tokens=n - num_blocks * block_len,
    )


def batchify(
    shard: np.ndarray, batch_size: int, bptt_len: int
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Cut a shard into (input, target) BPTT batches of shape (batch_size, bptt_len).

    The shard is folded into `batch_size` parallel rows; targets are the
    inputs shifted one token; trailing tokens that do not fill a full
    window are dropped.
    """
    shard = np.asarray(shard, dtype=np.int64)
    needed = batch_size * (bptt_len + 1)
    if shard.size < needed:
        raise DataError(
            f"shard of {shard.size} tokens is too short for batch_size={batch_size}, "
            f"bptt_len={bptt_len}; need at least {needed}"
        )
    n_cols = shard.size // batch_size
    data = shard[: batch_size * n_cols].reshape(batch_size, n_cols)
    batches = []
    for start in range(0, n_cols - 1, bptt_len):
        if start + bptt_len + 1 > n_cols:
            break
        inputs = data[:, start : start + bptt_len]
        targets = data[:, start + 1 : start + 1 + bptt_len]
        batches.append((np.ascontiguousarray(inputs), np.ascontiguousarray(targets)))
    return batches


def _read_tokens(path: str | Path) -> list[str]:
    p = Path(path)
    if not p.is_file():
        raise DataError(f"corpus file not found: {p}")
    tokens = tokenize(p.read_text(encoding="utf-8"))
    if not tokens:
        raise DataError(f"corpus file is empty: {p}")
    return tokens


class CorpusData(NamedTuple):
    vocab: Vocabulary
    train: TokenStream
    valid: TokenStream
    test: TokenStream


def load_corpus(
    train_path: str | Path,
    valid_path: str | Path,
    test_path: str | Path,
    max_vocab: int = 10_000,
) -> CorpusData:
    """Read the three splits; vocabulary is built from the training split only."""
    train_tokens = _read_tokens(train_path)
    valid_tokens = _read_tokens(valid_path)
    test_tokens = _read_tokens(test_path)
    vocab = build_vocab(train_tokens, max_vocab)
    return CorpusData(
        vocab,
        encode(train_tokens, vocab, "train"),
        encode(valid_tokens, vocab, "valid"),
        encode(test_tokens, vocab, "test"),
    )
