"""Local client training for one federated round, plus optional upload noise.

A client receives the current global parameters, runs E epochs of
momentum SGD over its own shard, and uploads the resulting parameters
together with its sample count. The momentum velocity starts at zero
every round and the recurrent hidden state is reset at every batch, so
a round's outcome depends only on (global params, shard, config);
clients are stateless across rounds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import batchify
from .errors import ConfigError, NumericalError
from .model import GruLmConfig, GruLmParams, backward, forward
from .params import ParamSet
from .rng import SeededRng

__all__ = [
    "ClientConfig",
    "DpConfig",
    "ClientUpdate",
    "clip_global_norm",
    "client_update",
    "add_dp_noise",
]


@dataclass(frozen=True)
class ClientConfig:
    batch_size: int = 20
    epochs: int = 5
    lr: float = 0.5
    momentum: float = 0.9
    clip_norm: float = 5.0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be positive, got {self.batch_size}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.clip_norm <= 0:
            raise ConfigError(f"clip_norm must be positive, got {self.clip_norm}")


@dataclass(frozen=True)
class DpConfig:
    """Randomization of uploaded parameters: w - beta_mag * N(0, sigma^2).

    `beta_mag` is the magnitude coefficient of the noise term; it is
    unrelated to the momentum coefficient in ClientConfig.
    """

    enabled: bool = False
    beta_mag: float = 0.0
    sigma: float = 1.0

    def __post_init__(self):
        if self.enabled and not 0.0 < self.beta_mag <= 1.0:
            raise ConfigError(
                f"beta_mag must be in (0, 1] when noise is enabled, got {self.beta_mag}"
            )
        if self.beta_mag < 0:
            raise ConfigError(f"beta_mag must be >= 0, got {self.beta_mag}")
        if self.sigma < 0:
            raise ConfigError(f"sigma must be >= 0, got {self.sigma}")

    @property
    def active(self) -> bool:
        return self.enabled and self.beta_mag > 0.0 and self.sigma > 0.0


@dataclass
class ClientUpdate:
    client_id: int
    params: ParamSet
    n_samples: int
    train_loss: float = 0.0               # mean NLL over every step taken
    epoch_losses: list[float] = field(default_factory=list)


def clip_global_norm(grads: ParamSet, max_norm: float) -> float:
    """Scale all gradients in place so their global L2 norm is <= max_norm.

    Returns the pre-clip norm.
    """
    norm = grads.global_norm()
    if norm > max_norm:
        scale = max_norm / norm
        for name in grads.names:
            grads[name] *= scale
    return norm


def client_update(
    k: int,
    server_params: ParamSet,
    shard: np.ndarray,
    cfg: ClientConfig,
    model_cfg: GruLmConfig,
    rng: SeededRng | None = None,
) -> ClientUpdate:
    """Train a copy of the server parameters on client k's token shard.

    The shard is folded into batch_size rows and swept in fixed order
    each epoch. Gradients are clipped to cfg.clip_norm (global L2 norm)
    before the momentum update `v = momentum * v + g; w -= lr * v`.
    Local training itself is deterministic; `rng` is the client's stream
    for any randomized post-processing (see add_dp_noise) and is not
    consumed here. E=0 returns the server parameters bit-identically.
    """
    local = server_params.copy()
    params = GruLmParams.from_paramset(model_cfg, local)
    batches = batchify(shard, cfg.batch_size, model_cfg.bptt_len)

    velocity = local.zeros_like()
    epoch_losses: list[float] = []
    total_nll = 0.0
    n_steps = 0
    for epoch in range(cfg.epochs):
        epoch_nll = 0.0
        for b, (x, y) in enumerate(batches):
            _, _, cache = forward(params, x)
            grads = backward(params, cache, y)
            if not np.isfinite(cache.mean_nll):
                raise NumericalError(
                    f"client {k}: non-finite loss at epoch {epoch}, batch {b}"
                )
            epoch_nll += cache.mean_nll
            total_nll += cache.mean_nll
            n_steps += 1
            clip_global_norm(grads, cfg.clip_norm)
            for name in local.names:
                vel = velocity[name]
                vel *= cfg.momentum
                vel += grads[name]
                local[name] -= cfg.lr * vel
        epoch_losses.append(epoch_nll / len(batches))

    return ClientUpdate(
        client_id=k,
        params=local,
        n_samples=int(shard.shape[0]),
        train_loss=total_nll / n_steps if n_steps else 0.0,
        epoch_losses=epoch_losses,
    )


def add_dp_noise(
    params: ParamSet, server_params: ParamSet, dp: DpConfig, rng: SeededRng
) -> ParamSet:
    """Perturb upload parameters in place with scaled Gaussian noise.

    Each entry receives `-beta_mag * n`, n ~ N(0, sigma^2), drawn tensor
    by tensor in parameter order, so the difference the server sees,
    (server - upload), is shifted by +beta_mag * N(0, sigma^2). Inactive
    configs return the parameters (and the rng stream) untouched.
    """
    server_params.require_compatible(params, context="dp noise")
    if not dp.active:
        return params
    for name in params.names:
        noise = rng.normal(dp.sigma, params[name].shape)
        params[name] -= dp.beta_mag * noise
    return params
