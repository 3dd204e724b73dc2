"""Synthetic corpus generator for desk-scale experiments.

Documents are built from sentences of placeholder tokens:

* ``T<t>`` marks a sentence that talks about an event of type ``t``;
* ``R<t>_<j>`` precedes the mention filling role ``j`` of type ``t``;
* ``e<n>`` tokens form entity mentions, ``w<n>`` tokens are filler.

Each record owns a block of ``min(scatter_radius, n_roles)`` consecutive
sentences and every sentence of the block carries at least one argument, so
the number of sentences a record touches is exactly controlled.
"""
from __future__ import annotations

import random
from dataclasses import asdict, dataclass, fields
from typing import Dict, List, Optional, Tuple

from .types import CorpusError, Document, EntityMention, EventSchema


@dataclass
class SynthConfig:
    n_docs: int = 50
    n_types: int = 2
    roles_per_type: int = 3
    max_records_per_doc: int = 2
    multi_record_fraction: float = 0.3
    scatter_radius: int = 3
    vocab_size: int = 100
    entity_vocab_size: int = 400
    max_entity_len: int = 2
    filler_len: Tuple[int, int] = (2, 5)
    filler_sentences: Tuple[int, int] = (0, 2)
    distractors: int = 1
    repeat_prob: float = 0.3
    # probability that a later record reuses an argument of the preceding record (same role slot)
    shared_arg_prob: float = 0.0
    # shared arguments are then referred to by the token SAME instead of being mentioned again
    elide_shared: bool = False

    @classmethod
    def from_dict(cls, obj: Dict) -> "SynthConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise CorpusError(f"unknown generator config keys {sorted(unknown)}")
        obj = dict(obj)
        for k in ("filler_len", "filler_sentences"):
            if k in obj:
                obj[k] = tuple(obj[k])
        return cls(**obj)

    def to_dict(self) -> Dict:
        return asdict(self)

    def schema(self) -> EventSchema:
        types = [f"EV{t}" for t in range(self.n_types)]
        return EventSchema(types, {t: [f"arg{j}" for j in range(self.roles_per_type)] for t in types})

    def n_multi_docs(self) -> int:
        return round(self.n_docs * self.multi_record_fraction)

    def check(self) -> None:
        if self.n_docs < 0 or self.n_types < 1 or self.roles_per_type < 1:
            raise CorpusError("need n_docs >= 0, n_types >= 1, roles_per_type >= 1")
        if self.max_records_per_doc < 1:
            raise CorpusError("max_records_per_doc must be >= 1")
        if not 0.0 <= self.multi_record_fraction <= 1.0:
            raise CorpusError("multi_record_fraction must lie in [0, 1]")
        if self.n_multi_docs() > 0 and self.max_records_per_doc < 2:
            raise CorpusError("multi-record documents requested but max_records_per_doc < 2")
        if self.scatter_radius < 1:
            raise CorpusError("scatter_radius must be >= 1")
        if self.max_entity_len < 1 or self.filler_len[0] < 0 or self.filler_len[0] > self.filler_len[1]:
            raise CorpusError("bad entity or filler length settings")
        needed = self.max_records_per_doc * self.roles_per_type + self.distractors
        if needed > self.entity_vocab_size:
            raise CorpusError(f"{needed} distinct entities per document do not fit "
                              f"an entity vocabulary of {self.entity_vocab_size}")


class _DocBuilder:
    def __init__(self, rng: random.Random, cfg: SynthConfig):
        self.rng = rng
        self.cfg = cfg
        self.sentences: List[List[str]] = []
        self.mentions: List[EntityMention] = []
        self.used_surfaces = set()

    def filler(self) -> List[str]:
        lo, hi = self.cfg.filler_len
        return [f"w{self.rng.randrange(self.cfg.vocab_size)}" for _ in range(self.rng.randint(lo, hi))]

    def new_entity(self) -> Tuple[str, ...]:
        while True:
            n = self.rng.randint(1, self.cfg.max_entity_len)
            toks = tuple(f"e{self.rng.randrange(self.cfg.entity_vocab_size)}" for _ in range(n))
            if "".join(toks) not in self.used_surfaces:
                self.used_surfaces.add("".join(toks))
                return toks

    def add_sentence(self, pieces: List[Tuple[List[str], Optional[Tuple[str, ...]]]], head: List[str]) -> int:
        """Append ``head`` then each (cue tokens, entity) piece, with filler between pieces."""
        idx = len(self.sentences)
        toks = list(head) + self.filler()
        for cues, ent in pieces:
            toks.extend(cues)
            if ent is not None:
                start = len(toks)
                toks.extend(ent)
                self.mentions.append(EntityMention(idx, start, len(toks), "".join(ent)))
            toks.extend(self.filler())
        if not toks:
            toks = [f"w{self.rng.randrange(self.cfg.vocab_size)}"]
        self.sentences.append(toks)
        return idx


def _split_roles(rng: random.Random, n_roles: int, n_groups: int) -> List[List[int]]:
    order = list(range(n_roles))
    rng.shuffle(order)
    groups = [[r] for r in order[:n_groups]]
    for r in order[n_groups:]:
        groups[rng.randrange(n_groups)].append(r)
    return [sorted(g) for g in groups]


def synth_corpus(config: SynthConfig, seed: int) -> List[Document]:
    """Generate ``config.n_docs`` documents; a pure function of (config, seed)."""
    config.check()
    cfg = config
    rng = random.Random(seed)
    schema = cfg.schema()
    n_roles = cfg.roles_per_type
    n_multi = cfg.n_multi_docs()
    multi_ids = set(rng.sample(range(cfg.n_docs), n_multi))
    docs = []
    for d in range(cfg.n_docs):
        b = _DocBuilder(rng, cfg)
        n_rec = rng.randint(2, cfg.max_records_per_doc) if d in multi_ids else 1
        for _ in range(rng.randint(*cfg.filler_sentences)):
            b.add_sentence([], [])

        records = []
        prev_args: Optional[List[Tuple[str, ...]]] = None
        for _ in range(n_rec):
            t = rng.randrange(cfg.n_types)
            args: List[Tuple[str, ...]] = []
            shared = [False] * n_roles
            for j in range(n_roles):
                if prev_args is not None and rng.random() < cfg.shared_arg_prob:
                    args.append(prev_args[j])
                    shared[j] = True
                else:
                    args.append(b.new_entity())
            if all(shared):
                # a record must differ from its predecessor
                args[0] = b.new_entity()
                shared[0] = False
            groups = _split_roles(rng, n_roles, min(cfg.scatter_radius, n_roles))
            for group in groups:
                pieces = []
                for j in group:
                    cue = f"R{t}_{j}"
                    if shared[j] and cfg.elide_shared:
                        pieces.append(([cue, "SAME"], None))
                    else:
                        pieces.append(([cue], args[j]))
                        if rng.random() < cfg.repeat_prob:
                            pieces.append(([], args[j]))
                b.add_sentence(pieces, [f"T{t}"])
            records.append(schema.make_record(schema.types[t], {
                schema.roles[schema.types[t]][j]: "".join(args[j]) for j in range(n_roles)
            }))
            prev_args = args
            for _ in range(rng.randint(*cfg.filler_sentences)):
                b.add_sentence([], [])

        for _ in range(cfg.distractors):
            b.add_sentence([([], b.new_entity())], [])

        # distractor sentences are moved to random positions
        docs.append(_finish(b, records, schema, f"synth-{seed}-{d:04d}", rng, cfg.distractors))
    return docs


def _finish(b: _DocBuilder, records, schema: EventSchema, doc_id: str, rng: random.Random,
            n_tail: int) -> Document:
    n = len(b.sentences)
    body = list(range(n - n_tail))
    order = body[:]
    for s in range(n - n_tail, n):
        order.insert(rng.randint(0, len(order)), s)
    new_index = {old: new for new, old in enumerate(order)}
    sentences = tuple(tuple(b.sentences[old]) for old in order)
    mentions = tuple(sorted(EntityMention(new_index[m.sentence_index], m.start, m.end, m.surface)
                            for m in b.mentions))
    types = {r.event_type for r in records}
    doc = Document(
        doc_id=doc_id,
        sentences=sentences,
        gold_mentions=mentions,
        gold_types=tuple(t for t in schema.types if t in types),
        gold_records=tuple(records),
    )
    doc.validate(schema)
    return doc


def audit_corpus(docs: List[Document]) -> Dict[str, object]:
    """Recount generator-controlled quantities by re-reading the documents."""
    n_multi = sum(len(d.gold_records) > 1 for d in docs)
    spans = []
    for d in docs:
        for r in d.gold_records:
            surfaces = {v for _, v in r.args if v is not None}
            spans.append(len({m.sentence_index for m in d.gold_mentions if m.surface in surfaces}))
    return {
        "n_docs": len(docs),
        "n_multi_record_docs": n_multi,
        "n_records": sum(len(d.gold_records) for d in docs),
        "records_per_doc": [len(d.gold_records) for d in docs],
        "record_sentence_spans": spans,
        "types_used": sorted({r.event_type for d in docs for r in d.gold_records}),
    }
