"""BIO conversion between mention spans and per-token labels."""
from __future__ import annotations

import logging
from typing import Iterable, List, Sequence

from .types import Document, EntityMention

logger = logging.getLogger(__name__)

LABELS = ("B", "I", "O")
B, I, O = range(3)


def resolve_overlaps(mentions: Iterable[EntityMention]) -> List[EntityMention]:
    """Drop overlapping mentions: longer span wins, then the earlier start."""
    kept: List[EntityMention] = []
    for m in sorted(set(mentions), key=lambda m: (m.sentence_index, m.start - m.end, m.start)):
        clash = next((k for k in kept if k.sentence_index == m.sentence_index
                      and k.start < m.end and m.start < k.end), None)
        if clash is not None:
            logger.warning("overlapping mentions %s and %s in sentence %d; keeping %s",
                           clash.span, m.span, m.sentence_index, clash.span)
            continue
        kept.append(m)
    return sorted(kept)


def bio_labels(sentences: Sequence[Sequence[str]], mentions: Iterable[EntityMention]) -> List[List[str]]:
    labels = [["O"] * len(s) for s in sentences]
    for m in resolve_overlaps(mentions):
        row = labels[m.sentence_index]
        row[m.start] = "B"
        for j in range(m.start + 1, m.end):
            row[j] = "I"
    return labels


def to_bio(doc: Document) -> List[List[str]]:
    return bio_labels(doc.sentences, doc.gold_mentions)


def extract_mentions(labels: Sequence, sentence_index: int, tokens: Sequence[str]) -> List[EntityMention]:
    """Turn a label sequence into mentions.

    Accepts label strings or indices into ``LABELS``. Maximal ``B I*`` runs
    become mentions; an ``I`` that does not continue a run starts one.
    """
    tags = [LABELS[x] if not isinstance(x, str) else x for x in labels]
    out = []
    start = None
    for j, tag in enumerate(tags):
        if tag == "B" or (tag == "I" and start is None):
            if start is not None:
                out.append(EntityMention.from_tokens([tokens], 0, start, j))
            start = j
        elif tag == "O" and start is not None:
            out.append(EntityMention.from_tokens([tokens], 0, start, j))
            start = None
    if start is not None:
        out.append(EntityMention.from_tokens([tokens], 0, start, len(tags)))
    return [EntityMention(sentence_index, m.start, m.end, m.surface) for m in out]
