"""Named, ordered collections of 2-D parameter tensors.

A ParamSet is the unit exchanged between server and clients and the
granularity at which attention weights are computed. Two ParamSets are
shape-compatible iff they carry the same names in the same order with
the same tensor shapes; every server/client exchange requires it.

Binary layout (little-endian), used for checkpoints:
    magic b"FSPS" | u32 version | u32 entry count
    per entry: u32 name length | name utf-8 | u32 rows | u32 cols
               | rows*cols float64 payload
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .errors import DataError, ShapeError
from .numeric import as_tensor

__all__ = ["ParamSet"]

_MAGIC = b"FSPS"
_VERSION = 1


class ParamSet:
    """Ordered mapping of unique names to 2-D float64 tensors."""

    def __init__(self, entries: Iterable[tuple[str, np.ndarray]] = ()):
        self._names: list[str] = []
        self._tensors: dict[str, np.ndarray] = {}
        for name, tensor in entries:
            self.add(name, tensor)

    def add(self, name: str, tensor: np.ndarray) -> None:
        if name in self._tensors:
            raise ValueError(f"duplicate parameter name {name!r}")
        self._names.append(name)
        self._tensors[name] = as_tensor(tensor)

    # mapping-style access

    def __getitem__(self, name: str) -> np.ndarray:
        return self._tensors[name]

    def __setitem__(self, name: str, tensor: np.ndarray) -> None:
        if name not in self._tensors:
            raise KeyError(name)
        t = as_tensor(tensor)
        if t.shape != self._tensors[name].shape:
            raise ShapeError(
                f"cannot replace {name!r} of shape {self._tensors[name].shape} "
                f"with shape {t.shape}"
            )
        self._tensors[name] = t

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self._names)

    def __len__(self) -> int:
        return len(self._names)

    @property
    def names(self) -> list[str]:
        return list(self._names)

    def items(self) -> Iterator[tuple[str, np.ndarray]]:
        for name in self._names:
            yield name, self._tensors[name]

    def copy(self) -> "ParamSet":
        """Deep copy (fresh tensor storage; aliasing between entries is not preserved)."""
        return ParamSet((n, t.copy()) for n, t in self.items())

    def zeros_like(self) -> "ParamSet":
        return ParamSet((n, np.zeros_like(t)) for n, t in self.items())

    def shape_signature(self) -> tuple[tuple[str, int, int], ...]:
        return tuple((n, t.shape[0], t.shape[1]) for n, t in self.items())

    def shape_compatible(self, other: "ParamSet") -> bool:
        return self.shape_signature() == other.shape_signature()

    def require_compatible(self, other: "ParamSet", context: str = "") -> None:
        if not self.shape_compatible(other):
            where = f" ({context})" if context else ""
            raise ShapeError(
                f"ParamSets are not shape-compatible{where}: "
                f"{self.shape_signature()} vs {other.shape_signature()}"
            )

    def num_scalars(self) -> int:
        return sum(t.size for _, t in self.items())

    def global_norm(self) -> float:
        total = 0.0
        for _, t in self.items():
            total += float((t * t).sum())
        return float(np.sqrt(total))

    def __eq__(self, other) -> bool:
        if not isinstance(other, ParamSet):
            return NotImplemented
        if self._names != other._names:
            return False
        return all(np.array_equal(self._tensors[n], other._tensors[n]) for n in self._names)

    def __repr__(self) -> str:  # pragma: no cover
        inner = ", ".join(f"{n}:{t.shape[0]}x{t.shape[1]}" for n, t in self.items())
        return f"ParamSet({inner})"

    # serialization

    def to_bytes(self) -> bytes:
        chunks = [_MAGIC, struct.pack("<II", _VERSION, len(self._names))]
        for name, tensor in self.items():
            raw = name.encode("utf-8")
            chunks.append(struct.pack("<I", len(raw)))
            chunks.append(raw)
            chunks.append(struct.pack("<II", tensor.shape[0], tensor.shape[1]))
            chunks.append(np.ascontiguousarray(tensor, dtype="<f8").tobytes())
        return b"".join(chunks)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "ParamSet":
        if blob[:4] != _MAGIC:
            raise DataError("not a ParamSet blob (bad magic)")
        try:
            version, count = struct.unpack_from("<II", blob, 4)
            if version != _VERSION:
                raise DataError(f"unsupported ParamSet version {version}")
            offset = 12
            ps = cls()
            for _ in range(count):
                (name_len,) = struct.unpack_from("<I", blob, offset)
                offset += 4
                name = blob[offset : offset + name_len].decode("utf-8")
                offset += name_len
                rows, cols = struct.unpack_from("<II", blob, offset)
                offset += 8
                n_bytes = rows * cols * 8
                values = np.frombuffer(
                    blob, dtype="<f8", count=rows * cols, offset=offset
                )
                offset += n_bytes
                ps.add(name, values.astype(np.float64).reshape(rows, cols))
        except (struct.error, ValueError) as exc:
            raise DataError(f"truncated or corrupt ParamSet blob: {exc}") from exc
        if offset != len(blob):
            raise DataError("trailing bytes after last ParamSet entry")
        return ps

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: str | Path) -> "ParamSet":
        return cls.from_bytes(Path(path).read_bytes())
