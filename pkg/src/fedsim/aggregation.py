"""Server-side aggregation of client updates.

Three strategies:

* fedavg: the new global parameters are the sample-count-weighted mean
  of the uploaded client parameters; the server's own value is replaced.
* fedatt: for each named tensor ("layer") the server scores every client
  by the p-norm distance between its upload and the server's copy,
  softmaxes the scores into attention weights alpha, and steps the
  server toward the clients:

      theta <- theta - epsilon * sum_k alpha_k * (theta - theta_k)

  Larger distance means larger weight, so the clients that moved
  furthest pull hardest.
* fedsgd: distributed SGD — full participation and a single local
  epoch, aggregated with the fedavg rule. There is no separate math
  path; `fedsgd_round_config` returns the realizing configuration.

Client sums are accumulated in a value-sorted order per element, so the
result is bit-for-bit independent of how the caller ordered the uploads.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .errors import ConfigError, DataError
from .numeric import p_norm_diff, softmax
from .params import ParamSet

if TYPE_CHECKING:
    from .client import ClientUpdate

__all__ = [
    "AggregatorConfig",
    "AttentionWeights",
    "attention_scores",
    "fedatt_update",
    "fedavg_update",
    "fedsgd_round_config",
]

log = logging.getLogger("fedsim")

_STRATEGIES = ("fedsgd", "fedavg", "fedatt")


@dataclass(frozen=True)
class AggregatorConfig:
    strategy: str = "fedavg"
    epsilon: float = 1.0  # fedatt server step size
    norm_order: int = 2   # p of the distance behind the attention scores

    def __post_init__(self):
        if self.strategy not in _STRATEGIES:
            raise ConfigError(
                f"unknown strategy {self.strategy!r}, expected one of {_STRATEGIES}"
            )
        if self.epsilon <= 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if self.norm_order not in (1, 2):
            raise ConfigError(f"norm_order must be 1 or 2, got {self.norm_order}")


@dataclass
class AttentionWeights:
    """Per-layer attention over clients; lists follow client argument order."""

    scores: dict[str, list[float]] = field(default_factory=dict)
    alpha: dict[str, list[float]] = field(default_factory=dict)

    @property
    def n_clients(self) -> int:
        return len(next(iter(self.alpha.values()), []))

    def to_record(self) -> dict:
        return {"scores": self.scores, "alpha": self.alpha}


def _sorted_sum(terms: np.ndarray) -> np.ndarray:
    """Sum a (clients, n) array over axis 0 in value order per element."""
    if terms.shape[0] == 1:
        return terms[0].copy()
    return np.sort(terms, axis=0).sum(axis=0)


def _require_uploads(server: ParamSet, clients: Sequence[ParamSet]) -> None:
    if len(clients) == 0:
        raise DataError("no client uploads to aggregate")
    for k, c in enumerate(clients):
        server.require_compatible(c, context=f"client upload {k}")


def attention_scores(
    server: ParamSet, clients: Sequence[ParamSet], p: int = 2
) -> AttentionWeights:
    """Score clients by distance from the server and softmax per layer."""
    _require_uploads(server, clients)
    weights = AttentionWeights()
    for name in server.names:
        s = np.array([p_norm_diff(server[name], c[name], p) for c in clients])
        a = softmax(s)
        weights.scores[name] = [float(v) for v in s]
        weights.alpha[name] = [float(v) for v in a]
        log.debug(
            "attention %s: score range [%.3g, %.3g]", name, s.min(), s.max()
        )
    return weights


def fedatt_update(
    server: ParamSet,
    clients: Sequence[ParamSet],
    weights: AttentionWeights,
    epsilon: float,
) -> ParamSet:
    """One attentive aggregation step with precomputed attention weights."""
    _require_uploads(server, clients)
    if epsilon <= 0:
        raise ConfigError(f"epsilon must be positive, got {epsilon}")
    if set(weights.alpha) != set(server.names):
        raise DataError(
            "attention weights cover layers "
            f"{sorted(weights.alpha)} but the server has {sorted(server.names)}"
        )
    if weights.n_clients != len(clients):
        raise DataError(
            f"attention weights are over {weights.n_clients} clients, "
            f"got {len(clients)} uploads"
        )
    new = ParamSet()
    for name in server.names:
        alpha = np.asarray(weights.alpha[name])
        base = server[name]
        deltas = np.stack([(base - c[name]).reshape(-1) for c in clients])
        deltas *= alpha[:, None]
        step = _sorted_sum(deltas).reshape(base.shape)
        new.add(name, base - epsilon * step)
    return new


def fedavg_update(server: ParamSet, updates: Sequence["ClientUpdate"]) -> ParamSet:
    """Sample-count-weighted average of the uploads; replaces the server value."""
    _require_uploads(server, [u.params for u in updates])
    counts = np.array([float(u.n_samples) for u in updates])
    if np.any(counts < 0):
        raise DataError("negative client sample count")
    total = counts.sum()
    if total <= 0:
        raise DataError("all clients reported zero samples; cannot form weights")
    w = counts / total
    new = ParamSet()
    for name in server.names:
        stacked = np.stack([u.params[name].reshape(-1) for u in updates])
        stacked *= w[:, None]
        new.add(name, _sorted_sum(stacked).reshape(server[name].shape))
    return new


def fedsgd_round_config() -> tuple[float, int, str]:
    """(participation fraction, local epochs, aggregation rule) realizing
    one-gradient-step-per-round distributed SGD as a fedavg special case."""
    return 1.0, 1, "fedavg"
