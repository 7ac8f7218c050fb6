"""Seeded, splittable random source.

Streams are keyed by (seed, label path) through a blake2b hash feeding a
Philox counter-based generator, so a child stream derived with
``derive(label)`` depends only on the labels along its path and never on
how many draws the parent has made. That keeps per-client randomness
independent of scheduling or participation order.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["SeededRng", "gaussian"]

_DIGEST_BYTES = 16  # 128-bit Philox key


class SeededRng:
    """Deterministic random stream with labeled child derivation.

    The same (seed, label path) always yields the same draw sequence,
    independent of platform and of any other SeededRng instance.
    """

    def __init__(self, seed: int, _key: bytes | None = None, _path: str = ""):
        if not 0 <= seed < 2**64:
            raise ValueError(f"seed must fit in 64 bits, got {seed}")
        self.seed = seed
        self.path = _path
        if _key is None:
            _key = hashlib.blake2b(
                seed.to_bytes(8, "little"), digest_size=_DIGEST_BYTES
            ).digest()
        self._key = _key
        self._gen = np.random.Generator(
            np.random.Philox(key=int.from_bytes(_key, "little"))
        )

    def derive(self, label: str) -> "SeededRng":
        """Child stream identified by `label`; independent of this stream's draws."""
        key = hashlib.blake2b(
            self._key + label.encode("utf-8"), digest_size=_DIGEST_BYTES
        ).digest()
        path = f"{self.path}/{label}" if self.path else label
        return SeededRng(self.seed, _key=key, _path=path)

    @property
    def signature(self) -> str:
        """Stable hex identifier of this stream (seed plus label path)."""
        return self._key.hex()

    # draw methods (thin wrappers so the Generator stays an implementation detail)

    def normal(self, sigma: float, size) -> np.ndarray:
        return self._gen.normal(0.0, sigma, size=size)

    def uniform(self, low: float, high: float, size) -> np.ndarray:
        return self._gen.uniform(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def sample_without_replacement(self, n: int, k: int) -> np.ndarray:
        return self._gen.choice(n, size=k, replace=False)

    def __repr__(self) -> str:  # pragma: no cover
        return f"SeededRng(seed={self.seed}, path={self.path!r})"


def gaussian(rng: SeededRng, n: int, sigma: float) -> np.ndarray:
    """`n` i.i.d. draws from N(0, sigma^2); sigma == 0 gives exact zeros."""
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0.0:
        return np.zeros(n)
    return rng.normal(sigma, n)
