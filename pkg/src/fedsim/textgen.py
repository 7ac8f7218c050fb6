"""Synthetic text corpora with learnable bigram structure.

Real corpora are inconvenient for reproducible experiments, so this
module fabricates one: word frequencies follow a Zipf law (giving the
usual long tail and out-of-vocabulary pressure at typical vocab caps),
and each word prefers a small fixed set of successors, so a language
model that learns the bigram backbone beats the unigram baseline by a
wide margin. The backbone is a fixed function of the type count; the
seed only drives sampling, so different seeds draw from one language.

Word surfaces are pronounceable CV-syllable strings ("bekota"), which
keeps generated files human-skimmable.

Usage:
    python3 -m fedsim.textgen --out data/ --train-tokens 200000
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .rng import SeededRng

__all__ = ["word_surface", "generate_split", "generate_corpus", "main"]

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"
_SYLLABLES = [c + v for c in _CONSONANTS for v in _VOWELS]

# sampling shape
_BIGRAM_PROB = 0.7     # chance the next word comes from the successor set
_SUCCESSORS = 20       # fan-out of the bigram backbone
_ZIPF_S = 1.05         # unigram exponent
_MIN_LEN, _MAX_LEN = 3, 60
_MEAN_LEN = 12.0


def word_surface(index: int) -> str:
    """Distinct pronounceable surface for word type `index` (base-70 syllables)."""
    n = index + len(_SYLLABLES)  # skip 1-syllable range so all words have >= 2
    parts = []
    while n > 0:
        n, digit = divmod(n, len(_SYLLABLES))
        parts.append(_SYLLABLES[digit])
    return "".join(reversed(parts))


def _unigram_cdf(n_types: int) -> np.ndarray:
    ranks = np.arange(1, n_types + 1, dtype=np.float64)
    w = ranks ** (-_ZIPF_S)
    return np.cumsum(w / w.sum())


def _successor_table(n_types: int) -> np.ndarray:
    """Fixed (n_types, _SUCCESSORS) backbone; affine maps keep it seed-free."""
    i = np.arange(n_types, dtype=np.int64)[:, None]
    j = np.arange(_SUCCESSORS, dtype=np.int64)[None, :]
    return (i * 17 + j * j * 13 + 5) % n_types


def _successor_cdf() -> np.ndarray:
    w = 1.0 / np.arange(1, _SUCCESSORS + 1, dtype=np.float64)
    return np.cumsum(w / w.sum())


def generate_split(rng: SeededRng, n_tokens: int, n_types: int) -> list[str]:
    """Sentences (one string each) totalling at least `n_tokens` words."""
    if n_tokens < 1:
        raise ConfigError(f"n_tokens must be positive, got {n_tokens}")
    if n_types < 2:
        raise ConfigError(f"n_types must be at least 2, got {n_types}")
    uni_cdf = _unigram_cdf(n_types)
    succ = _successor_table(n_types)
    succ_cdf = _successor_cdf()

    # generous pool of pre-drawn uniforms; lengths drawn separately
    budget = int(n_tokens * 1.2) + _MAX_LEN + 16
    mix = rng.uniform(0.0, 1.0, budget)
    pick = rng.uniform(0.0, 1.0, budget)
    lens = rng.uniform(0.0, 1.0, max(n_tokens // _MIN_LEN + 2, 16))

    surfaces = [word_surface(i) for i in range(n_types)]
    sentences: list[str] = []
    produced = 0
    pos = 0
    s_idx = 0
    p = 1.0 / _MEAN_LEN
    while produced < n_tokens:
        u = lens[s_idx % lens.shape[0]]
        s_idx += 1
        length = _MIN_LEN + int(np.log1p(-u) / np.log1p(-p))
        length = min(length, _MAX_LEN)
        words = []
        prev = None
        for _ in range(length):
            if pos >= budget:  # pool exhausted; top up deterministically
                mix = rng.uniform(0.0, 1.0, budget)
                pick = rng.uniform(0.0, 1.0, budget)
                pos = 0
            if prev is not None and mix[pos] < _BIGRAM_PROB:
                j = int(np.searchsorted(succ_cdf, pick[pos]))
                w = int(succ[prev, j])
            else:
                w = int(np.searchsorted(uni_cdf, pick[pos]))
            pos += 1
            words.append(surfaces[w])
            prev = w
        sentences.append(" ".join(words))
        produced += length
    return sentences


def generate_corpus(
    out_dir: str | Path,
    n_train: int = 200_000,
    n_valid: int = 20_000,
    n_test: int = 20_000,
    n_types: int = 5_500,
    seed: int = 7,
) -> dict[str, Path]:
    """Write train/valid/test files under out_dir; returns their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    master = SeededRng(seed)
    paths: dict[str, Path] = {}
    for split, n in (("train", n_train), ("valid", n_valid), ("test", n_test)):
        sentences = generate_split(master.derive(split), n, n_types)
        path = out / f"{split}.txt"
        path.write_text("\n".join(sentences) + "\n", encoding="utf-8")
        paths[split] = path
    return paths


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="fedsim.textgen", description="generate a synthetic bigram corpus"
    )
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--train-tokens", type=int, default=200_000)
    parser.add_argument("--valid-tokens", type=int, default=20_000)
    parser.add_argument("--test-tokens", type=int, default=20_000)
    parser.add_argument("--types", type=int, default=5_500)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args(argv)
    try:
        paths = generate_corpus(
            args.out,
            n_train=args.train_tokens,
            n_valid=args.valid_tokens,
            n_test=args.test_tokens,
            n_types=args.types,
            seed=args.seed,
        )
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for split, path in paths.items():
        print(f"{split}: {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
