"""GRU word-level language model: forward pass, exact truncated BPTT, perplexity.

The recurrence per layer and time step, with x_t the layer input and
h_{t-1} the previous hidden state:

    z_t = sigmoid(w_z . [h_{t-1}, x_t, 1])
    r_t = sigmoid(w_r . [h_{t-1}, x_t, 1])
    c_t = tanh(w . [r_t * h_{t-1}, x_t, 1])
    h_t = (1 - z_t) * h_{t-1} + z_t * c_t

Each gate matrix carries its bias as a trailing column applied to the
constant-1 input, so a layer with input width d_in has three (h, h+d_in+1)
matrices. The output head projects the top hidden state to vocabulary
logits; in tied mode the projection reuses the embedding matrix (the same
array object, so mutating one mutates the other) and only the output bias
remains separate.

Gradients are exact for the mean per-token negative log-likelihood,
truncated at the start of the sequence (h0 is treated as a constant).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, NumericalError, ShapeError
from .params import ParamSet
from .rng import SeededRng

__all__ = [
    "GruLmConfig",
    "GruLayer",
    "GruLmParams",
    "ForwardCache",
    "init_params",
    "forward",
    "loss",
    "backward",
    "perplexity",
    "param_count",
    "param_shapes",
]


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh formulation is overflow-safe for large |x|
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass(frozen=True)
class GruLmConfig:
    vocab_size: int
    embed_dim: int = 64
    hidden_dim: int = 64
    num_layers: int = 1
    tied: bool = True
    bptt_len: int = 20
    init_scale: float = 0.1

    def __post_init__(self):
        for name in ("vocab_size", "embed_dim", "hidden_dim", "num_layers", "bptt_len"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.tied and self.embed_dim != self.hidden_dim:
            raise ConfigError(
                "tied output projection requires embed_dim == hidden_dim, "
                f"got {self.embed_dim} != {self.hidden_dim}"
            )
        if self.init_scale < 0:
            raise ConfigError(f"init_scale must be >= 0, got {self.init_scale}")

    def layer_input_dim(self, layer: int) -> int:
        return self.embed_dim if layer == 0 else self.hidden_dim


def param_shapes(config: GruLmConfig) -> list[tuple[str, tuple[int, int]]]:
    """Ordered (name, shape) pairs of the model's ParamSet serialization."""
    v, d, h = config.vocab_size, config.embed_dim, config.hidden_dim
    shapes: list[tuple[str, tuple[int, int]]] = [("embed", (v, d))]
    for i in range(config.num_layers):
        gate = (h, h + config.layer_input_dim(i) + 1)
        shapes += [(f"gru{i}.wz", gate), (f"gru{i}.wr", gate), (f"gru{i}.w", gate)]
    if not config.tied:
        shapes.append(("out.w", (v, h)))
    shapes.append(("out.b", (1, v)))
    return shapes


@dataclass
class GruLayer:
    wz: np.ndarray  # update gate, (h, h+d_in+1)
    wr: np.ndarray  # reset gate
    wc: np.ndarray  # candidate state


class GruLmParams:
    """Model parameters bound to a config; round-trips to a flat ParamSet.

    `to_paramset` / `from_paramset` share storage with the underlying
    arrays (no copies), so in tied mode the "embed" entry serves as both
    embedding and output projection and "out.w" does not appear.
    """

    def __init__(
        self,
        config: GruLmConfig,
        embedding: np.ndarray,
        layers: list[GruLayer],
        out_weight: np.ndarray | None,
        out_bias: np.ndarray,
    ):
        self.config = config
        self.embedding = embedding
        self.layers = layers
        self._out_weight = out_weight  # None when tied
        self.out_bias = out_bias

    @property
    def out_weight(self) -> np.ndarray:
        return self.embedding if self.config.tied else self._out_weight

    def to_paramset(self) -> ParamSet:
        ps = ParamSet()
        ps.add("embed", self.embedding)
        for i, layer in enumerate(self.layers):
            ps.add(f"gru{i}.wz", layer.wz)
            ps.add(f"gru{i}.wr", layer.wr)
            ps.add(f"gru{i}.w", layer.wc)
        if not self.config.tied:
            ps.add("out.w", self._out_weight)
        ps.add("out.b", self.out_bias)
        return ps

    @classmethod
    def from_paramset(cls, config: GruLmConfig, ps: ParamSet) -> "GruLmParams":
        expected = param_shapes(config)
        actual = ps.shape_signature()
        wanted = tuple((n, r, c) for n, (r, c) in expected)
        if actual != wanted:
            raise ShapeError(
                f"ParamSet does not match model config: expected {wanted}, got {actual}"
            )
        layers = [
            GruLayer(wz=ps[f"gru{i}.wz"], wr=ps[f"gru{i}.wr"], wc=ps[f"gru{i}.w"])
            for i in range(config.num_layers)
        ]
        return cls(
            config=config,
            embedding=ps["embed"],
            layers=layers,
            out_weight=None if config.tied else ps["out.w"],
            out_bias=ps["out.b"],
        )


def init_params(config: GruLmConfig, rng: SeededRng) -> GruLmParams:
    """Uniform [-init_scale, init_scale] weights; all bias entries zero."""
    s = config.init_scale
    embedding = rng.uniform(-s, s, (config.vocab_size, config.embed_dim))
    layers = []
    for i in range(config.num_layers):
        width = config.hidden_dim + config.layer_input_dim(i) + 1
        mats = []
        for _ in range(3):
            w = rng.uniform(-s, s, (config.hidden_dim, width))
            w[:, -1] = 0.0  # bias column
            mats.append(w)
        layers.append(GruLayer(*mats))
    out_weight = None
    if not config.tied:
        out_weight = rng.uniform(-s, s, (config.vocab_size, config.hidden_dim))
    out_bias = np.zeros((1, config.vocab_size))
    return GruLmParams(config, embedding, layers, out_weight, out_bias)


def param_count(config: GruLmConfig) -> int:
    """Exact number of trainable scalars."""
    return sum(r * c for _, (r, c) in param_shapes(config))


@dataclass
class ForwardCache:
    """Activations recorded by `forward` for one exact backward pass.

    `backward` consumes the cache in place (it reuses the logits buffer
    for the gradient), so a cache supports exactly one backward call.
    """

    params: GruLmParams
    token_ids: np.ndarray          # (B, T)
    x0: np.ndarray                 # (B, T, D) embedded inputs
    h0: list[np.ndarray]           # per layer (B, H)
    cat1: list[list[np.ndarray]]   # per layer, per step (B, H+d_in+1)
    cat2: list[list[np.ndarray]]
    z: list[list[np.ndarray]]      # per layer, per step (B, H)
    r: list[list[np.ndarray]]
    c: list[list[np.ndarray]]      # candidate states
    h: list[list[np.ndarray]]      # hidden states
    htop_flat: np.ndarray          # (B*T, H)
    logits: np.ndarray             # (B, T, V)
    consumed: bool = False
    mean_nll: float | None = None  # set by backward as a byproduct

    @property
    def seq_len(self) -> int:
        return int(self.token_ids.shape[1])


def forward(
    params: GruLmParams, inputs: np.ndarray, h0: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray, ForwardCache]:
    """Run the model over a (batch, seq_len) block of token ids.

    Returns logits of shape (batch, seq_len, vocab), the final hidden
    states (num_layers, batch, hidden), and the cache for `backward`.
    `h0` may be None (zeros), (batch, hidden) for a single layer, or
    (num_layers, batch, hidden).
    """
    cfg = params.config
    inputs = np.asarray(inputs, dtype=np.int64)
    if inputs.ndim != 2:
        raise ShapeError(f"inputs must be (batch, seq_len), got shape {inputs.shape}")
    batch, seq_len = inputs.shape
    if inputs.min() < 0 or inputs.max() >= cfg.vocab_size:
        bad = int(inputs.min()) if inputs.min() < 0 else int(inputs.max())
        raise DataError(f"token id {bad} out of range for vocab_size={cfg.vocab_size}")

    n_layers, hidden = cfg.num_layers, cfg.hidden_dim
    if h0 is None:
        h_prev = [np.zeros((batch, hidden)) for _ in range(n_layers)]
    else:
        h0 = np.asarray(h0, dtype=np.float64)
        if h0.shape == (batch, hidden) and n_layers == 1:
            h0 = h0[None, :, :]
        if h0.shape != (n_layers, batch, hidden):
            raise ShapeError(
                f"h0 must have shape {(n_layers, batch, hidden)}, got {h0.shape}"
            )
        h_prev = [h0[l].copy() for l in range(n_layers)]
    h_init = [h.copy() for h in h_prev]

    x0 = params.embedding[inputs]  # (B, T, D)
    ones = np.ones((batch, 1))
    # contiguous transposed gate matrices, reused across all time steps
    gates_t = [
        (
            np.ascontiguousarray(layer.wz.T),
            np.ascontiguousarray(layer.wr.T),
            np.ascontiguousarray(layer.wc.T),
        )
        for layer in params.layers
    ]

    cat1: list[list[np.ndarray]] = [[] for _ in range(n_layers)]
    cat2: list[list[np.ndarray]] = [[] for _ in range(n_layers)]
    zs: list[list[np.ndarray]] = [[] for _ in range(n_layers)]
    rs: list[list[np.ndarray]] = [[] for _ in range(n_layers)]
    cs: list[list[np.ndarray]] = [[] for _ in range(n_layers)]
    hs: list[list[np.ndarray]] = [[] for _ in range(n_layers)]
    top: list[np.ndarray] = []

    for t in range(seq_len):
        x = x0[:, t, :]
        for l in range(n_layers):
            wz_t, wr_t, wc_t = gates_t[l]
            hp = h_prev[l]
            c1 = np.hstack([hp, x, ones])
            z = _sigmoid(c1 @ wz_t)
            r = _sigmoid(c1 @ wr_t)
            c2 = np.hstack([r * hp, x, ones])
            c = np.tanh(c2 @ wc_t)
            h = (1.0 - z) * hp + z * c
            cat1[l].append(c1)
            cat2[l].append(c2)
            zs[l].append(z)
            rs[l].append(r)
            cs[l].append(c)
            hs[l].append(h)
            h_prev[l] = h
            x = h
        top.append(h_prev[-1])

    htop_flat = np.stack(top, axis=1).reshape(batch * seq_len, hidden)
    out_w_t = np.ascontiguousarray(params.out_weight.T)  # (H, V)
    logits_flat = htop_flat @ out_w_t
    logits_flat += params.out_bias
    logits = logits_flat.reshape(batch, seq_len, cfg.vocab_size)

    h_final = np.stack(h_prev)  # (L, B, H)
    cache = ForwardCache(
        params=params,
        token_ids=inputs,
        x0=x0,
        h0=h_init,
        cat1=cat1,
        cat2=cat2,
        z=zs,
        r=rs,
        c=cs,
        h=hs,
        htop_flat=htop_flat,
        logits=logits,
    )
    return logits, h_final, cache


def loss(logits: np.ndarray, targets: np.ndarray) -> float:
    """Mean negative log-likelihood (nats per token) over all positions."""
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.int64)
    if logits.ndim != 3:
        raise ShapeError(f"logits must be (batch, seq_len, vocab), got {logits.shape}")
    if targets.shape != logits.shape[:2]:
        raise ShapeError(
            f"targets shape {targets.shape} does not match logits {logits.shape[:2]}"
        )
    flat = logits.reshape(-1, logits.shape[-1])
    tgt = targets.reshape(-1)
    rows = np.arange(flat.shape[0])
    m = flat.max(axis=1)
    picked = flat[rows, tgt]
    shifted = np.exp(flat - m[:, None])
    return float(np.mean(np.log(shifted.sum(axis=1)) + m - picked))


def backward(params: GruLmParams, cache: ForwardCache, targets: np.ndarray) -> ParamSet:
    """Exact gradients of the mean NLL for the forward pass recorded in `cache`.

    Consumes the cache; `cache.mean_nll` is populated as a byproduct so
    callers that need the loss do not pay for a second softmax pass.
    """
    if cache.params is not params:
        raise ValueError("cache was produced by a different parameter set")
    if cache.consumed:
        raise ValueError("cache has already been consumed by a backward pass")
    targets = np.asarray(targets, dtype=np.int64)
    if targets.shape != cache.token_ids.shape:
        raise ShapeError(
            f"targets shape {targets.shape} does not match forward inputs "
            f"{cache.token_ids.shape}"
        )
    cache.consumed = True

    cfg = params.config
    batch, seq_len = cache.token_ids.shape
    n_pos = batch * seq_len
    v, hidden = cfg.vocab_size, cfg.hidden_dim

    # fused softmax cross-entropy: turn the logits buffer into dlogits
    flat = cache.logits.reshape(n_pos, v)
    tgt = targets.reshape(n_pos)
    if tgt.min() < 0 or tgt.max() >= v:
        raise DataError(f"target id out of range for vocab_size={v}")
    rows = np.arange(n_pos)
    m = flat.max(axis=1)
    picked = flat[rows, tgt].copy()
    np.subtract(flat, m[:, None], out=flat)
    np.exp(flat, out=flat)
    sums = flat.sum(axis=1)
    cache.mean_nll = float(np.mean(np.log(sums) + m - picked))
    flat *= (1.0 / (n_pos * sums))[:, None]
    flat[rows, tgt] -= 1.0 / n_pos
    dlogits = flat  # (P, V)

    # output head
    g_hv = cache.htop_flat.T @ dlogits           # (H, V)
    d_out_b = dlogits.sum(axis=0)[None, :]       # (1, V)
    d_htop = (dlogits @ params.out_weight).reshape(batch, seq_len, hidden)

    d_embed = np.zeros_like(params.embedding)
    d_gates = [
        (np.zeros_like(l.wz), np.zeros_like(l.wr), np.zeros_like(l.wc))
        for l in params.layers
    ]
    d_in = cfg.embed_dim  # width of dx at layer 0
    dx_batch = np.empty((batch, seq_len, d_in))
    dh_carry = [np.zeros((batch, hidden)) for _ in range(cfg.num_layers)]

    for t in range(seq_len - 1, -1, -1):
        dx_above: np.ndarray | None = None
        for l in range(cfg.num_layers - 1, -1, -1):
            layer = params.layers[l]
            din_l = cfg.layer_input_dim(l)
            h_prev = cache.h[l][t - 1] if t > 0 else cache.h0[l]
            z, r, c = cache.z[l][t], cache.r[l][t], cache.c[l][t]

            dh = dh_carry[l] + (d_htop[:, t, :] if l == cfg.num_layers - 1 else dx_above)
            dz = dh * (c - h_prev)
            dc = dh * z
            dh_prev = dh * (1.0 - z)

            da_c = dc * (1.0 - c * c)
            dwz, dwr, dwc = d_gates[l]
            dwc += da_c.T @ cache.cat2[l][t]
            dcat2 = da_c @ layer.wc
            drh = dcat2[:, :hidden]
            dr = drh * h_prev
            dh_prev += drh * r

            da_z = dz * z * (1.0 - z)
            da_r = dr * r * (1.0 - r)
            dwz += da_z.T @ cache.cat1[l][t]
            dwr += da_r.T @ cache.cat1[l][t]
            dcat1 = da_z @ layer.wz
            dcat1 += da_r @ layer.wr
            dh_prev += dcat1[:, :hidden]

            dx = dcat2[:, hidden : hidden + din_l] + dcat1[:, hidden : hidden + din_l]
            dh_carry[l] = dh_prev
            dx_above = dx
        dx_batch[:, t, :] = dx_above

    np.add.at(d_embed, cache.token_ids.reshape(n_pos), dx_batch.reshape(n_pos, d_in))

    grads = ParamSet()
    if cfg.tied:
        d_embed += g_hv.T
        grads.add("embed", d_embed)
    else:
        grads.add("embed", d_embed)
    for i, (dwz, dwr, dwc) in enumerate(d_gates):
        grads.add(f"gru{i}.wz", dwz)
        grads.add(f"gru{i}.wr", dwr)
        grads.add(f"gru{i}.w", dwc)
    if not cfg.tied:
        grads.add("out.w", np.ascontiguousarray(g_hv.T))
    grads.add("out.b", d_out_b)
    return grads


def perplexity(mean_nll: float) -> float:
    """e raised to the mean per-token NLL; 2^H when entropy H is in bits."""
    if not np.isfinite(mean_nll):
        raise NumericalError(f"mean NLL is not finite: {mean_nll}")
    return float(np.exp(mean_nll))
