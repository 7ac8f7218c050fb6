"""Federated simulation loop: client selection, rounds, evaluation, artifacts.

The orchestrator owns a seed tree rooted at the run's master seed.
Every source of randomness is a derived child with a stable label
("partition", "init", "round-{t}", "client/{t}/{k}"), so a run is a pure
function of (config, corpus files): repeating it produces byte-identical
records and checkpoints, and changing the master seed changes client
selection and initialization together. Scheduling or participation
order can never leak into results because no stream is shared.

Wall-clock timings are kept in memory for logging but never serialized,
precisely so that records stay byte-reproducible.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .aggregation import (
    AggregatorConfig,
    attention_scores,
    fedatt_update,
    fedavg_update,
    fedsgd_round_config,
)
from .client import ClientConfig, ClientUpdate, DpConfig, add_dp_noise, client_update
from .corpus import CorpusData, Partition, TokenStream, batchify, load_corpus, partition_iid
from .errors import ConfigError, FedsimError, NumericalError
from .model import GruLmConfig, GruLmParams, forward, init_params, loss, perplexity
from .params import ParamSet
from .rng import SeededRng

__all__ = [
    "SimConfig",
    "RoundRecord",
    "SimResult",
    "select_clients",
    "evaluate",
    "run_round",
    "run_simulation",
    "rounds_to_threshold",
]

log = logging.getLogger("fedsim")

_SPLITS = ("valid", "test")


@dataclass(frozen=True)
class SimConfig:
    model: GruLmConfig
    client: ClientConfig = ClientConfig()
    dp: DpConfig = DpConfig()
    aggregator: AggregatorConfig = AggregatorConfig()
    k_clients: int = 10
    fraction: float = 0.5
    rounds: int = 50
    master_seed: int = 1234
    block_len: int = 64
    train_path: str = ""
    valid_path: str = ""
    test_path: str = ""
    eval_batch_size: int = 10
    eval_every: int = 1
    ppl_threshold: float | None = None
    threshold_split: str = "valid"
    out_dir: str | None = None

    def __post_init__(self):
        if self.k_clients < 1:
            raise ConfigError(f"k_clients must be positive, got {self.k_clients}")
        if not 0.0 < self.fraction <= 1.0:
            raise ConfigError(f"fraction must be in (0, 1], got {self.fraction}")
        if self.rounds < 1:
            raise ConfigError(f"rounds must be positive, got {self.rounds}")
        if self.eval_batch_size < 1:
            raise ConfigError(
                f"eval_batch_size must be positive, got {self.eval_batch_size}"
            )
        if self.eval_every < 1:
            raise ConfigError(f"eval_every must be positive, got {self.eval_every}")
        if self.threshold_split not in _SPLITS:
            raise ConfigError(
                f"threshold_split must be one of {_SPLITS}, got {self.threshold_split!r}"
            )
        if self.ppl_threshold is not None and self.ppl_threshold <= 0:
            raise ConfigError(
                f"ppl_threshold must be positive, got {self.ppl_threshold}"
            )

    @property
    def clients_per_round(self) -> int:
        return max(int(self.fraction * self.k_clients), 1)


@dataclass
class RoundRecord:
    round: int                       # 1-based communication round index
    selected: list[int]
    n_samples: list[int]
    client_train_loss: list[float]
    mean_train_loss: float
    global_norm: float
    valid_ppl: float | None = None
    test_ppl: float | None = None
    attention: dict | None = None
    wall_time_s: float = 0.0         # in-memory only; excluded from to_record()

    def to_record(self) -> dict:
        return {
            "round": self.round,
            "selected": self.selected,
            "n_samples": self.n_samples,
            "client_train_loss": self.client_train_loss,
            "mean_train_loss": self.mean_train_loss,
            "global_norm": self.global_norm,
            "valid_ppl": self.valid_ppl,
            "test_ppl": self.test_ppl,
            "attention": self.attention,
        }


@dataclass
class SimResult:
    config: SimConfig
    vocab_size: int
    records: list[RoundRecord]
    params: ParamSet

    @property
    def rounds_run(self) -> int:
        return len(self.records)

    @property
    def final_valid_ppl(self) -> float | None:
        for rec in reversed(self.records):
            if rec.valid_ppl is not None:
                return rec.valid_ppl
        return None

    @property
    def final_test_ppl(self) -> float | None:
        for rec in reversed(self.records):
            if rec.test_ppl is not None:
                return rec.test_ppl
        return None

    def best_round(self) -> RoundRecord | None:
        """The evaluated round with the lowest validation perplexity; its
        test_ppl is the headline number of the run."""
        evaluated = [r for r in self.records if r.valid_ppl is not None]
        if not evaluated:
            return None
        return min(evaluated, key=lambda r: r.valid_ppl)


def select_clients(
    k_total: int, fraction: float, round_index: int, rng: SeededRng
) -> list[int]:
    """The participating client ids for one round, in increasing order.

    m = max(floor(fraction * k_total), 1) distinct ids, sampled uniformly
    without replacement from a child stream keyed by the round index, so
    the choice depends only on (master seed, round).
    """
    m = max(int(fraction * k_total), 1)
    child = rng.derive(f"round-{round_index}")
    return sorted(int(i) for i in child.sample_without_replacement(k_total, m))


def evaluate(
    params: ParamSet,
    stream: TokenStream,
    model_cfg: GruLmConfig,
    batch_size: int = 10,
) -> float:
    """Perplexity of a serialized model on a held-out token stream.

    The stream is folded the same way as training data (hidden state
    reset at every window); positions lost to folding are excluded.
    """
    model = GruLmParams.from_paramset(model_cfg, params)
    batches = batchify(stream.ids, batch_size, model_cfg.bptt_len)
    total_nll = 0.0
    total_pos = 0
    for x, y in batches:
        logits, _, _ = forward(model, x)
        total_nll += loss(logits, y) * x.size
        total_pos += x.size
    ppl = perplexity(total_nll / total_pos)
    if not (np.isfinite(ppl) and ppl > 0):
        raise NumericalError(f"evaluation produced invalid perplexity {ppl}")
    return ppl


def run_round(
    t: int,
    state: ParamSet,
    partition: Partition,
    cfg: SimConfig,
    data: CorpusData,
    rng: SeededRng,
    force_eval: bool = False,
) -> tuple[ParamSet, RoundRecord]:
    """Run communication round t (1-based) from the given server state."""
    t0 = time.perf_counter()
    selected = select_clients(cfg.k_clients, cfg.fraction, t, rng)
    try:
        updates: list[ClientUpdate] = []
        for k in selected:
            child = rng.derive(f"client/{t}/{k}")
            upd = client_update(
                k, state, partition.shards[k], cfg.client, cfg.model, child
            )
            if cfg.dp.enabled:
                add_dp_noise(upd.params, state, cfg.dp, child)
            updates.append(upd)

        attention = None
        if cfg.aggregator.strategy == "fedatt":
            uploads = [u.params for u in updates]
            weights = attention_scores(state, uploads, cfg.aggregator.norm_order)
            new_state = fedatt_update(state, uploads, weights, cfg.aggregator.epsilon)
            attention = weights.to_record()
        else:
            new_state = fedavg_update(state, updates)
    except FedsimError as exc:
        raise type(exc)(f"round {t}: {exc}") from exc

    losses = [float(u.train_loss) for u in updates]
    record = RoundRecord(
        round=t,
        selected=selected,
        n_samples=[u.n_samples for u in updates],
        client_train_loss=losses,
        mean_train_loss=float(np.mean(losses)),
        global_norm=float(new_state.global_norm()),
        attention=attention,
    )
    if force_eval or t % cfg.eval_every == 0:
        record.valid_ppl = evaluate(
            new_state, data.valid, cfg.model, cfg.eval_batch_size
        )
        record.test_ppl = evaluate(
            new_state, data.test, cfg.model, cfg.eval_batch_size
        )
    record.wall_time_s = time.perf_counter() - t0
    return new_state, record


def rounds_to_threshold(
    records: Sequence[RoundRecord], threshold: float
) -> int | None:
    """1-based index of the first record whose validation perplexity is
    strictly below the threshold; None when never reached."""
    for i, rec in enumerate(records, start=1):
        if rec.valid_ppl is not None and rec.valid_ppl < threshold:
            return i
    return None


def _resolve_strategy(cfg: SimConfig) -> SimConfig:
    """fedsgd is fedavg at full participation with one local epoch."""
    if cfg.aggregator.strategy != "fedsgd":
        return cfg
    fraction, epochs, rule = fedsgd_round_config()
    return dataclasses.replace(
        cfg,
        fraction=fraction,
        client=dataclasses.replace(cfg.client, epochs=epochs),
        aggregator=dataclasses.replace(cfg.aggregator, strategy=rule),
    )


def run_simulation(cfg: SimConfig, data: CorpusData | None = None) -> SimResult:
    """Run a full federated experiment and (optionally) write its artifacts.

    When `cfg.out_dir` is set, three files are produced there:
    records.jsonl (one JSON object per round, appended as rounds finish),
    summary.csv (round, val_ppl, test_ppl), and checkpoint.bin (the final
    global ParamSet). Training stops early when ppl_threshold is set and
    the monitored split's perplexity first drops below it.
    """
    cfg = _resolve_strategy(cfg)
    if data is None:
        data = load_corpus(
            cfg.train_path,
            cfg.valid_path,
            cfg.test_path,
            max_vocab=cfg.model.vocab_size,
        )
    vocab_size = len(data.vocab.id_to_token)
    if cfg.model.vocab_size != vocab_size:
        # corpus had fewer types than the configured cap
        cfg = dataclasses.replace(
            cfg, model=dataclasses.replace(cfg.model, vocab_size=vocab_size)
        )

    master = SeededRng(cfg.master_seed)
    partition = partition_iid(
        data.train, cfg.k_clients, cfg.block_len, master.derive("partition")
    )
    params = init_params(cfg.model, master.derive("init")).to_paramset()

    out_dir = Path(cfg.out_dir) if cfg.out_dir else None
    records_file = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        records_file = (out_dir / "records.jsonl").open("w", encoding="utf-8")

    records: list[RoundRecord] = []
    try:
        for t in range(1, cfg.rounds + 1):
            params, record = run_round(
                t, params, partition, cfg, data, master, force_eval=t == cfg.rounds
            )
            records.append(record)
            if records_file is not None:
                records_file.write(json.dumps(record.to_record()) + "\n")
                records_file.flush()
            log.info(
                "round %d/%d: loss %.4f valid_ppl %s test_ppl %s (%.1fs)",
                t,
                cfg.rounds,
                record.mean_train_loss,
                f"{record.valid_ppl:.2f}" if record.valid_ppl is not None else "-",
                f"{record.test_ppl:.2f}" if record.test_ppl is not None else "-",
                record.wall_time_s,
            )
            monitored = (
                record.valid_ppl if cfg.threshold_split == "valid" else record.test_ppl
            )
            if (
                cfg.ppl_threshold is not None
                and monitored is not None
                and monitored < cfg.ppl_threshold
            ):
                log.info(
                    "stopping: %s ppl %.2f below threshold %.2f at round %d",
                    cfg.threshold_split,
                    monitored,
                    cfg.ppl_threshold,
                    t,
                )
                break
    finally:
        if records_file is not None:
            records_file.close()

    if out_dir is not None:
        params.save(out_dir / "checkpoint.bin")
        with (out_dir / "summary.csv").open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["round", "val_ppl", "test_ppl"])
            for rec in records:
                writer.writerow(
                    [
                        rec.round,
                        "" if rec.valid_ppl is None else f"{rec.valid_ppl:.6f}",
                        "" if rec.test_ppl is None else f"{rec.test_ppl:.6f}",
                    ]
                )

    return SimResult(
        config=cfg, vocab_size=vocab_size, records=records, params=params
    )
