"""The full extraction model: encoder, CRF tagger, interaction graph, type detector, record decoder."""
from __future__ import annotations

import logging
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import torch
import torch.nn as nn

from .corpus.bio import LABELS, bio_labels, extract_mentions
from .corpus.types import Document, EntityMention, EventRecord, EventSchema
from .detect import TypeDetector, detect_loss_from_logits
from .encoder import EncoderConfig, SentenceEncoder, Vocab
from .hetgraph import EDGE_TYPES, RGCN, build_graph, coref_by_string, init_node_states, pool_entities
from .ner import CRF
from .recdec import MODES, RecordDecoder

logger = logging.getLogger(__name__)


@dataclass
class ModelConfig:
    hidden_dim: int = 32
    ff_dim: int = 64
    heads: int = 2
    encoder_layers: int = 2
    decoder_layers: int = 2
    gcn_layers: int = 3
    max_sentence_len: int = 128
    max_sentences: int = 64
    dropout: float = 0.1
    type_threshold: float = 0.5
    role_threshold: float = 0.5
    max_children: int = 6
    # ablations: edge types kept in the graph, and the decoder variant
    edge_types: List[str] = field(default_factory=lambda: list(EDGE_TYPES))
    decoder_mode: str = "full"

    def __post_init__(self):
        if self.decoder_mode not in MODES:
            raise ValueError(f"decoder_mode must be one of {MODES}")
        unknown = set(self.edge_types) - set(EDGE_TYPES)
        if unknown:
            raise ValueError(f"unknown edge types {sorted(unknown)}")

    @classmethod
    def full_scale(cls) -> "ModelConfig":
        return cls(hidden_dim=768, ff_dim=1024, heads=8, encoder_layers=8, decoder_layers=4, gcn_layers=3)

    def to_dict(self) -> Dict:
        return asdict(self)


class DocEncoding(NamedTuple):
    mentions: List[EntityMention]
    clusters: List[List[int]]
    sentences: torch.Tensor  # S rows, (n_sentences, d)
    entities: torch.Tensor  # E rows, (n_entities, d)
    emissions: torch.Tensor  # (n_sentences, max_len, n_labels)
    lengths: List[int]


class EventExtractor(nn.Module):
    def __init__(self, cfg: ModelConfig, schema: EventSchema, vocab: Vocab):
        super().__init__()
        self.cfg, self.schema, self.vocab = cfg, schema, vocab
        d = cfg.hidden_dim
        self.encoder = SentenceEncoder(EncoderConfig(len(vocab), d, cfg.ff_dim, cfg.heads, cfg.encoder_layers,
                                                     cfg.max_sentence_len, cfg.dropout))
        self.crf = CRF(d, len(LABELS))
        self.gcn = RGCN(d, cfg.gcn_layers, cfg.dropout, cfg.max_sentences, cfg.edge_types)
        self.detector = TypeDetector(d, schema.num_types, cfg.heads, cfg.type_threshold)
        self.decoder = RecordDecoder(schema, d, cfg.ff_dim, cfg.heads, cfg.decoder_layers, cfg.dropout,
                                     cfg.role_threshold, cfg.max_children, cfg.decoder_mode)
        self.stats: Counter = Counter()

    # -- shared forward pieces --------------------------------------------

    def encode(self, doc: Document, mentions: Optional[Sequence[EntityMention]] = None) -> DocEncoding:
        """Run encoder, CRF emissions and the graph; ``mentions=None`` uses Viterbi output."""
        ids = [self.vocab.encode(s) for s in doc.sentences]
        batch_ids, pad_mask, lengths = self.encoder.batch(ids)
        reps = self.encoder(batch_ids, pad_mask)
        emissions = self.crf.emission(reps)
        if mentions is None:
            mentions = self.viterbi_mentions(doc, emissions, lengths)
        else:
            kept = [m for m in mentions if m.end <= lengths[m.sentence_index]]
            if len(kept) < len(mentions):
                logger.info("%s: %d mentions fall past the sentence length limit", doc.doc_id,
                            len(mentions) - len(kept))
            mentions = kept
        mentions = sorted(set(mentions))
        clusters = coref_by_string(mentions)
        graph = build_graph(len(doc.sentences), mentions, clusters)
        states0 = init_node_states([reps[i, :n] for i, n in enumerate(lengths)], graph, self.gcn.sent_pos)
        _, sent_states, mention_states = self.gcn(graph, states0)
        entities = pool_entities(mention_states, clusters)
        return DocEncoding(mentions, clusters, sent_states, entities, emissions, lengths)

    def viterbi_mentions(self, doc: Document, emissions, lengths) -> List[EntityMention]:
        out = []
        for i, path in enumerate(self.crf.decode(emissions.detach(), lengths)):
            out += extract_mentions(path, i, doc.sentences[i][:lengths[i]])
        return out

    def gold_paths(self, doc: Document, enc: DocEncoding) -> Dict[int, List[Tuple]]:
        """Gold records as entity-index paths; arguments without a candidate entity become NA."""
        index = {enc.mentions[c[0]].surface: k for k, c in enumerate(enc.clusters)}
        paths: Dict[int, List[Tuple]] = {}
        for rec in doc.gold_records:
            path = []
            for _, value in rec.args:
                if value is not None and value not in index:
                    self.stats["unmatched_args"] += 1
                path.append(index.get(value) if value is not None else None)
            if all(p is None for p in path):
                self.stats["unsupervised_records"] += 1
                continue
            paths.setdefault(self.schema.type_index(rec.event_type), []).append(tuple(path))
        return paths

    # -- training ------------------------------------------------------------

    def losses(self, doc: Document, use_predicted: bool = False) -> Dict[str, torch.Tensor]:
        enc = self.encode(doc, None if use_predicted else doc.gold_mentions)
        tags = bio_labels([s[:n] for s, n in zip(doc.sentences, enc.lengths)],
                          [m for m in doc.gold_mentions if m.end <= enc.lengths[m.sentence_index]])
        width = enc.emissions.shape[1]
        tag_ids = torch.full((len(tags), width), LABELS.index("O"), dtype=torch.long)
        for i, row in enumerate(tags):
            tag_ids[i, :len(row)] = torch.tensor([LABELS.index(t) for t in row])
        mask = torch.arange(width)[None, :] < torch.tensor(enc.lengths)[:, None]
        ner = self.crf.nll(enc.emissions, tag_ids, mask).sum()

        gold_types = torch.zeros(self.schema.num_types)
        for t in doc.gold_types:
            gold_types[self.schema.type_index(t)] = 1.0
        detect = detect_loss_from_logits(self.detector.logits(enc.sentences), gold_types.to(enc.sentences.dtype))

        record = self.decoder.record_loss(enc.entities, enc.sentences, self.gold_paths(doc, enc))
        return {"ner": ner, "detect": detect, "record": record}

    # -- inference -------------------------------------------------------------

    @torch.no_grad()
    def predict(self, doc: Document) -> Tuple[List[EntityMention], List[str], List[EventRecord]]:
        enc = self.encode(doc)
        type_ids = self.detector.predict(self.detector(enc.sentences))
        surfaces = [enc.mentions[c[0]].surface for c in enc.clusters]
        records = []
        for t, path in self.decoder.decode(enc.entities, enc.sentences, type_ids):
            if all(p is None for p in path):
                continue
            event_type = self.schema.types[t]
            roles = self.schema.roles[event_type]
            records.append(EventRecord(event_type, tuple(
                (r, None if p is None else surfaces[p]) for r, p in zip(roles, path))))
        return enc.mentions, [self.schema.types[t] for t in type_ids], records
