"""Reading and writing corpora.

The canonical layout is a JSON array of documents::

    {"doc_id": str, "sentences": [[token, ...], ...],
     "mentions": [{"sent": int, "start": int, "end": int}],
     "event_types": [str], "records": [{"type": str, "args": {role: surface-or-null}}]}

The released ChFinAnn layout is accepted only through :func:`import_chfinann`.
"""
from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import List, Mapping, Sequence

from .types import CorpusError, Document, EntityMention, EventSchema

logger = logging.getLogger(__name__)


def document_from_json(obj: Mapping, schema: EventSchema) -> Document:
    doc_id = obj.get("doc_id") if isinstance(obj, Mapping) else None
    where = f"doc {doc_id!r}"
    if not isinstance(doc_id, str):
        raise CorpusError(f"{where}: field 'doc_id' must be a string")
    sentences = obj.get("sentences")
    if not isinstance(sentences, list) or not all(
        isinstance(s, list) and all(isinstance(t, str) for t in s) for s in sentences
    ):
        raise CorpusError(f"{where}: field 'sentences' must be a list of token lists")
    sents = tuple(tuple(s) for s in sentences)

    mentions = []
    for i, m in enumerate(obj.get("mentions", [])):
        try:
            sent, start, end = int(m["sent"]), int(m["start"]), int(m["end"])
        except (KeyError, TypeError, ValueError):
            raise CorpusError(f"{where}: field 'mentions[{i}]' needs integer sent/start/end") from None
        if not 0 <= sent < len(sents) or not 0 <= start < end <= len(sents[sent]):
            raise CorpusError(f"{where}: field 'mentions[{i}]' span ({sent}, {start}, {end}) out of bounds")
        mentions.append(EntityMention.from_tokens(sents, sent, start, end))

    types = obj.get("event_types", [])
    if not isinstance(types, list):
        raise CorpusError(f"{where}: field 'event_types' must be a list")
    for t in types:
        if t not in schema.roles:
            raise CorpusError(f"{where}: field 'event_types' has unknown event type {t!r}")

    records = []
    for i, r in enumerate(obj.get("records", [])):
        if not isinstance(r, Mapping) or not isinstance(r.get("args"), Mapping):
            raise CorpusError(f"{where}: field 'records[{i}]' needs 'type' and 'args'")
        try:
            records.append(schema.make_record(r.get("type"), r["args"]))
        except CorpusError as e:
            raise CorpusError(f"{where}: field 'records[{i}]': {e}") from None

    doc = Document(
        doc_id=doc_id,
        sentences=sents,
        gold_mentions=tuple(sorted(set(mentions))),
        gold_types=tuple(t for t in schema.types if t in set(types)),
        gold_records=tuple(records),
    )
    doc.validate(schema)
    return doc


def document_to_json(doc: Document) -> dict:
    return {
        "doc_id": doc.doc_id,
        "sentences": [list(s) for s in doc.sentences],
        "mentions": [{"sent": m.sentence_index, "start": m.start, "end": m.end} for m in doc.gold_mentions],
        "event_types": list(doc.gold_types),
        "records": [r.to_json() for r in doc.gold_records],
    }


def load_corpus(path, schema: EventSchema) -> List[Document]:
    with open(path, encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise CorpusError(f"{path}: not valid JSON ({e})") from None
    if not isinstance(data, list):
        raise CorpusError(f"{path}: top level must be a JSON array")
    docs = [document_from_json(obj, schema) for obj in data]
    ids = [d.doc_id for d in docs]
    if len(set(ids)) != len(ids):
        raise CorpusError(f"{path}: duplicate doc_id values")
    return docs


def dump_corpus(docs: Sequence[Document], path) -> None:
    text = json.dumps([document_to_json(d) for d in docs], ensure_ascii=False, indent=1)
    Path(path).write_text(text + "\n", encoding="utf-8")


def import_chfinann(path, schema: EventSchema = None) -> List[Document]:
    """Convert the released dataset layout: ``[[doc_id, detail], ...]``.

    ``detail`` carries ``sentences`` (strings, tokenized per character),
    ``ann_mspan2dranges`` ({surface: [[sent, start, end], ...]}) and
    ``recguid_eventname_eventdict_list`` ([[guid, type, {role: surface}]]).
    """
    schema = schema or EventSchema.chfinann()
    with open(path, encoding="utf-8") as f:
        data = json.load(f)
    docs = []
    for entry in data:
        doc_id, detail = entry[0], entry[1]
        sents = tuple(tuple(s) for s in detail["sentences"])
        mentions = set()
        for surface, dranges in detail.get("ann_mspan2dranges", {}).items():
            for sent, start, end in dranges:
                if not (0 <= sent < len(sents) and 0 <= start < end <= len(sents[sent])):
                    logger.warning("%s: dropping mention %r at %s, outside its sentence",
                                   doc_id, surface, (sent, start, end))
                    continue
                m = EntityMention.from_tokens(sents, sent, start, end)
                if m.surface != surface:
                    logger.warning("%s: dropping mention %r at %s, tokens read %r",
                                   doc_id, surface, (sent, start, end), m.surface)
                    continue
                mentions.add(m)
        surfaces = {m.surface for m in mentions}
        records, types = [], set()
        for _guid, event_type, args in detail.get("recguid_eventname_eventdict_list", []):
            kept = {}
            for role, value in args.items():
                if value is not None and value not in surfaces:
                    logger.warning("%s: %s.%s=%r has no valid mention; set to NULL", doc_id, event_type, role, value)
                    value = None
                kept[role] = value
            rec = schema.make_record(event_type, kept)
            if rec.filled == 0:
                raise CorpusError(f"doc {doc_id!r}: {event_type} record has no resolvable arguments")
            records.append(rec)
            types.add(event_type)
        doc = Document(
            doc_id=str(doc_id),
            sentences=sents,
            gold_mentions=tuple(sorted(mentions)),
            gold_types=tuple(t for t in schema.types if t in types),
            gold_records=tuple(records),
        )
        doc.validate(schema)
        docs.append(doc)
    return docs


def dump_chfinann(docs: Sequence[Document], path) -> None:
    """Write documents in the released layout (sentences joined as strings)."""
    out = []
    for d in docs:
        spans = {}
        for m in d.gold_mentions:
            spans.setdefault(m.surface, []).append([m.sentence_index, m.start, m.end])
        out.append([d.doc_id, {
            "sentences": ["".join(s) for s in d.sentences],
            "ann_valid_mspans": list(spans),
            "ann_mspan2dranges": spans,
            "recguid_eventname_eventdict_list": [
                [i, r.event_type, dict(r.args)] for i, r in enumerate(d.gold_records)
            ],
        }])
    Path(path).write_text(json.dumps(out, ensure_ascii=False), encoding="utf-8")
