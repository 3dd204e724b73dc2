"""Training loop, scheduled sampling, checkpoints and prediction dumps."""
from __future__ import annotations

import copy
import io
import json
import logging
import math
import random
import struct
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import torch

from .corpus.types import CorpusError, Document, EventSchema
from .encoder import Vocab
from .evalkit import evaluate
from .model import EventExtractor, ModelConfig

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"DOCEECKPT"
CHECKPOINT_VERSION = 1


class DivergenceError(RuntimeError):
    """Raised when a loss turns NaN/inf; carries the last good checkpoint."""

    def __init__(self, message: str, checkpoint: Optional["Checkpoint"] = None):
        super().__init__(message)
        self.checkpoint = checkpoint


@dataclass
class TrainConfig:
    lambda_ner: float = 0.05
    lambda_detect: float = 1.0
    lambda_record: float = 1.0
    learning_rate: float = 1e-3
    batch_size: int = 1
    grad_accum: int = 1
    epochs: int = 100
    ss_start: int = 10
    ss_end: int = 20
    scheduled_sampling: bool = True
    seed: int = 0
    # evaluate on the dev set every this many epochs (0 disables selection)
    eval_every: int = 0
    threads: int = 1
    double: bool = False
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if isinstance(self.model, dict):
            self.model = ModelConfig(**self.model)
        if min(self.lambda_ner, self.lambda_detect, self.lambda_record) < 0:
            raise ValueError("loss weights must be non-negative")
        if self.ss_start >= self.ss_end:
            raise ValueError("scheduled sampling needs ss_start < ss_end")
        if self.batch_size < 1 or self.grad_accum < 1:
            raise ValueError("batch_size and grad_accum must be >= 1")

    @classmethod
    def full_scale(cls) -> "TrainConfig":
        return cls(learning_rate=1e-4, batch_size=64, grad_accum=8, epochs=100,
                   model=ModelConfig.full_scale())

    def to_dict(self) -> Dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: Dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        obj = dict(obj)
        if "model" in obj:
            mk = {f.name for f in fields(ModelConfig)}
            bad = set(obj["model"]) - mk
            if bad:
                raise ValueError(f"unknown config keys {sorted('model.' + k for k in bad)}")
        return cls(**obj)

    @classmethod
    def load(cls, path) -> "TrainConfig":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


def total_loss(ner, detect, record, cfg: TrainConfig):
    """Weighted sum of the three sub-task losses; refuses non-finite input."""
    for name, v in (("ner", ner), ("detect", detect), ("record", record)):
        if not math.isfinite(float(v.detach()) if torch.is_tensor(v) else float(v)):
            raise DivergenceError(f"{name} loss is not finite")
    return cfg.lambda_ner * ner + cfg.lambda_detect * detect + cfg.lambda_record * record


def scheduled_sampling_fraction(epoch: int, cfg: TrainConfig) -> float:
    """Probability that a document trains on predicted instead of gold entities."""
    if epoch <= cfg.ss_start:
        return 0.0
    if epoch >= cfg.ss_end:
        return 1.0
    return (epoch - cfg.ss_start) / (cfg.ss_end - cfg.ss_start)


@dataclass
class Checkpoint:
    config: TrainConfig
    schema: EventSchema
    vocab: Vocab
    state: Dict[str, torch.Tensor]
    epoch: int
    rng_state: Optional[torch.Tensor] = None

    def build_model(self) -> EventExtractor:
        model = EventExtractor(self.config.model, self.schema, self.vocab)
        if self.config.double:
            model.double()
        model.load_state_dict(self.state)
        model.eval()
        return model

    def to_bytes(self) -> bytes:
        header = json.dumps({
            "version": CHECKPOINT_VERSION,
            "config": self.config.to_dict(),
            "epoch": self.epoch,
            "schema": self.schema.to_json(),
            "vocab": self.vocab.itos,
        }).encode("utf-8")
        buf = io.BytesIO()
        torch.save({"state": self.state, "rng_state": self.rng_state}, buf)
        return CHECKPOINT_MAGIC + struct.pack("<Q", len(header)) + header + buf.getvalue()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "Checkpoint":
        if not blob.startswith(CHECKPOINT_MAGIC):
            raise CorpusError("not a checkpoint file")
        pos = len(CHECKPOINT_MAGIC)
        (n,) = struct.unpack("<Q", blob[pos:pos + 8])
        header = json.loads(blob[pos + 8:pos + 8 + n].decode("utf-8"))
        if header["version"] != CHECKPOINT_VERSION:
            raise CorpusError(f"unsupported checkpoint version {header['version']}")
        payload = torch.load(io.BytesIO(blob[pos + 8 + n:]), weights_only=True)
        vocab = Vocab()
        vocab.itos = list(header["vocab"])
        vocab.stoi = {t: i for i, t in enumerate(vocab.itos)}
        return cls(TrainConfig.from_dict(header["config"]), EventSchema.from_json(header["schema"]),
                   vocab, payload["state"], header["epoch"], payload["rng_state"])

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "Checkpoint":
        return cls.from_bytes(Path(path).read_bytes())


def _snapshot(model, cfg, schema, vocab, epoch) -> Checkpoint:
    state = {k: v.detach().clone() for k, v in model.state_dict().items()}
    return Checkpoint(copy.deepcopy(cfg), schema, vocab, state, epoch, torch.get_rng_state())


def train(corpus: Sequence[Document], cfg: TrainConfig, schema: EventSchema,
          dev: Optional[Sequence[Document]] = None, log_path=None, vocab: Optional[Vocab] = None):
    """Train from scratch; returns (checkpoint, per-epoch metric log).

    With a dev set and ``eval_every > 0`` the checkpoint with the best dev
    record micro-F1 is returned, otherwise the last epoch's.
    """
    if not corpus:
        raise CorpusError("training corpus is empty")
    for d in corpus:
        d.validate(schema)
    torch.set_num_threads(cfg.threads)
    torch.manual_seed(cfg.seed)
    rng = random.Random(cfg.seed)
    vocab = vocab or Vocab.from_documents(list(corpus) + list(dev or []))
    model = EventExtractor(cfg.model, schema, vocab)
    if cfg.double:
        model.double()
    optim = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    docs = list(corpus)
    log: List[Dict] = []
    best, best_f1 = None, -1.0
    last_good = _snapshot(model, cfg, schema, vocab, 0)
    log_file = open(log_path, "w", encoding="utf-8") if log_path else None
    step_docs = cfg.batch_size * cfg.grad_accum
    try:
        for epoch in range(cfg.epochs):
            t0 = time.perf_counter()
            model.train()
            model.stats.clear()
            frac = scheduled_sampling_fraction(epoch, cfg) if cfg.scheduled_sampling else 0.0
            order = list(range(len(docs)))
            rng.shuffle(order)
            sums = {"ner": 0.0, "detect": 0.0, "record": 0.0, "total": 0.0}
            n_pred = 0
            optim.zero_grad()
            for k, i in enumerate(order):
                use_pred = rng.random() < frac
                n_pred += use_pred
                parts = model.losses(docs[i], use_predicted=use_pred)
                try:
                    loss = total_loss(parts["ner"], parts["detect"], parts["record"], cfg)
                except DivergenceError as e:
                    raise DivergenceError(f"epoch {epoch}, doc {docs[i].doc_id}: {e}", last_good) from None
                (loss / step_docs).backward()
                for name in ("ner", "detect", "record"):
                    sums[name] += float(parts[name].detach())
                sums["total"] += float(loss.detach())
                if (k + 1) % step_docs == 0 or k + 1 == len(order):
                    optim.step()
                    optim.zero_grad()
            entry = {"epoch": epoch, "ss_fraction": frac, "predicted_entity_docs": n_pred,
                     **{f"loss_{k}": v for k, v in sums.items()}, **dict(model.stats)}
            last_good = _snapshot(model, cfg, schema, vocab, epoch + 1)
            if dev and cfg.eval_every and (epoch + 1) % cfg.eval_every == 0:
                f1 = evaluate(dev, predict_with(model, dev), schema).record_f1
                entry["dev_record_f1"] = f1
                if f1 > best_f1:
                    best, best_f1 = last_good, f1
            entry["seconds"] = round(time.perf_counter() - t0, 3)
            logger.info("epoch %d: %s", epoch, {k: v for k, v in entry.items() if k != "epoch"})
            log.append(entry)
            if log_file:
                # wall time is left out of the file so identical runs produce identical logs
                log_file.write(json.dumps({k: v for k, v in entry.items() if k != "seconds"}) + "\n")
                log_file.flush()
    finally:
        if log_file:
            log_file.close()
    return (best or last_good), log


def predict_with(model: EventExtractor, corpus: Sequence[Document]) -> List[Dict]:
    model.eval()
    out = []
    for doc in corpus:
        mentions, types, records = model.predict(doc)
        out.append({
            "doc_id": doc.doc_id,
            "types": types,
            "records": [r.to_json() for r in records],
            "mentions": [{"sent": m.sentence_index, "start": m.start, "end": m.end} for m in mentions],
        })
    return out


def predict(corpus: Sequence[Document], checkpoint: Checkpoint, schema: Optional[EventSchema] = None) -> List[Dict]:
    """Prediction dump using only predicted entities."""
    if schema is not None and schema != checkpoint.schema:
        raise CorpusError("corpus schema differs from the checkpoint's schema")
    return predict_with(checkpoint.build_model(), corpus)
