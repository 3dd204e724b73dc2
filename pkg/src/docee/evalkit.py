"""Metrics for the three sub-tasks plus the cross-sentence and single/multi slices.

All scores are micro scores recomputed from summed TP/FP/FN counts.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from .corpus.types import Document, EventRecord, EventSchema

logger = logging.getLogger(__name__)

BUCKETS = ("I", "II", "III", "IV")


@dataclass(frozen=True)
class Counts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __add__(self, other: "Counts") -> "Counts":
        return Counts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    def to_json(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn,
                "precision": self.precision, "recall": self.recall, "f1": self.f1}


def total(counts: Iterable[Counts]) -> Counts:
    out = Counts()
    for c in counts:
        out = out + c
    return out


def set_counts(pred: Iterable, gold: Iterable) -> Counts:
    p, g = set(pred), set(gold)
    return Counts(len(p & g), len(p - g), len(g - p))


def entity_f1(pred: Sequence[Iterable[Tuple[int, int, int]]], gold: Sequence[Iterable[Tuple[int, int, int]]]) -> Counts:
    """Exact (sentence, start, end) span match, one iterable of spans per document."""
    if len(pred) != len(gold):
        raise ValueError("prediction and gold cover different numbers of documents")
    return total(set_counts(p, g) for p, g in zip(pred, gold))


def type_f1(pred: Sequence[Iterable[str]], gold: Sequence[Iterable[str]],
            types: Optional[Sequence[str]] = None) -> Dict[str, Counts]:
    """Per-type counts plus ``"overall"``, comparing type sets document by document."""
    if len(pred) != len(gold):
        raise ValueError("prediction and gold cover different numbers of documents")
    pred, gold = [set(p) for p in pred], [set(g) for g in gold]
    if types is None:
        types = sorted(set().union(*pred, *gold))
    out = {t: total(set_counts({t} & p, {t} & g) for p, g in zip(pred, gold)) for t in types}
    out["overall"] = total(set_counts(p, g) for p, g in zip(pred, gold))
    return out


def role_counts(pred: EventRecord, gold: EventRecord) -> Counts:
    tp = fp = fn = 0
    for (_, p), (_, g) in zip(pred.args, gold.args):
        if p is not None and p == g:
            tp += 1
            continue
        if p is not None:
            fp += 1
        if g is not None:
            fn += 1
    return Counts(tp, fp, fn)


def match_records(pred: Sequence[EventRecord], gold: Sequence[EventRecord]) -> List[Tuple[int, int]]:
    """Greedy one-to-one matching of same-type records.

    Repeatedly takes the unmatched pair with the most equal non-NULL role
    values; ties go to the pair with fewer non-NULL arguments in total, then to
    the earlier (pred, gold) input position.
    """
    cand = []
    for i, p in enumerate(pred):
        for j, g in enumerate(gold):
            if p.event_type == g.event_type:
                cand.append((-role_counts(p, g).tp, p.filled + g.filled, i, j))
    cand.sort()
    used_p, used_g, pairs = set(), set(), []
    for _, _, i, j in cand:
        if i not in used_p and j not in used_g:
            used_p.add(i)
            used_g.add(j)
            pairs.append((i, j))
    return pairs


def record_counts(pred: Sequence[EventRecord], gold: Sequence[EventRecord]) -> Dict[str, Counts]:
    """Role-level counts for one document, keyed by event type."""
    out: Dict[str, Counts] = {}

    def add(t, c):
        out[t] = out.get(t, Counts()) + c

    pairs = match_records(pred, gold)
    for i, j in pairs:
        add(gold[j].event_type, role_counts(pred[i], gold[j]))
    mp, mg = {i for i, _ in pairs}, {j for _, j in pairs}
    for i, p in enumerate(pred):
        if i not in mp:
            add(p.event_type, Counts(fp=p.filled))
    for j, g in enumerate(gold):
        if j not in mg:
            add(g.event_type, Counts(fn=g.filled))
    return out


def record_micro_f1(pred: Sequence[Sequence[EventRecord]], gold: Sequence[Sequence[EventRecord]],
                    types: Optional[Sequence[str]] = None) -> Dict[str, Counts]:
    """Per-type and ``"overall"`` record counts over a corpus (one record list per document)."""
    if len(pred) != len(gold):
        raise ValueError("prediction and gold cover different numbers of documents")
    per_doc = [record_counts(p, g) for p, g in zip(pred, gold)]
    if types is None:
        types = sorted({t for d in per_doc for t in d})
    out = {t: total(d.get(t, Counts()) for d in per_doc) for t in types}
    out["overall"] = total(c for d in per_doc for c in d.values())
    return out


def involved_sentences(doc: Document) -> Optional[float]:
    """Average over gold records of the number of sentences mentioning any argument."""
    if not doc.gold_records:
        return None
    sizes = []
    for r in doc.gold_records:
        surfaces = {v for _, v in r.args if v is not None}
        sizes.append(len({m.sentence_index for m in doc.gold_mentions if m.surface in surfaces}))
    return sum(sizes) / len(sizes)


def bucket_report(docs: Sequence[Document], doc_counts: Mapping[str, Counts]) -> Dict[str, dict]:
    """Four equal-size sets by ascending average involved sentences; extra documents go to later sets."""
    keyed = []
    for d in docs:
        avg = involved_sentences(d)
        if avg is None:
            continue
        keyed.append((avg, d.doc_id))
    skipped = len(docs) - len(keyed)
    if skipped:
        logger.info("bucket report: %d documents without records excluded", skipped)
    keyed.sort()
    n = len(keyed)
    sizes = [n // 4 + (1 if b >= 4 - n % 4 else 0) for b in range(4)]
    out, pos = {}, 0
    for name, size in zip(BUCKETS, sizes):
        chunk = keyed[pos:pos + size]
        pos += size
        c = total(doc_counts.get(doc_id, Counts()) for _, doc_id in chunk)
        out[name] = {"docs": len(chunk), "avg_sentences_range": [chunk[0][0], chunk[-1][0]] if chunk else None,
                     **c.to_json()}
    return out


def single_multi_report(docs: Sequence[Document], doc_counts: Mapping[str, Counts]) -> Dict[str, Optional[dict]]:
    """Split by gold record count (1 vs more); an empty side is reported as None."""
    sides = {"S": [], "M": []}
    for d in docs:
        n = len(d.gold_records)
        if n == 0:
            logger.info("single/multi report: %s has no records, excluded", d.doc_id)
            continue
        sides["S" if n == 1 else "M"].append(d.doc_id)
    return {k: ({"docs": len(ids), **total(doc_counts.get(i, Counts()) for i in ids).to_json()} if ids else None)
            for k, ids in sides.items()}


@dataclass
class MetricReport:
    entity: Optional[Counts]
    types: Dict[str, Counts]
    records: Dict[str, Counts]
    buckets: Dict[str, dict] = field(default_factory=dict)
    single_multi: Dict[str, Optional[dict]] = field(default_factory=dict)

    @property
    def record_f1(self) -> float:
        return self.records["overall"].f1

    def to_json(self) -> dict:
        return {
            "entity": self.entity.to_json() if self.entity is not None else None,
            "types": {k: v.to_json() for k, v in self.types.items()},
            "records": {k: v.to_json() for k, v in self.records.items()},
            "buckets": self.buckets,
            "single_multi": self.single_multi,
        }

    def to_text(self) -> str:
        lines = []
        cols = [k for k in self.records if k != "overall"] + ["overall"]
        lines.append(_table("Record extraction", ["P", "R", "F1"],
                            [(c, [self.records[c].precision, self.records[c].recall, self.records[c].f1])
                             for c in cols]))
        if self.buckets:
            lines.append(_table("Involved-sentence sets", ["docs", "F1"],
                                [(b, [self.buckets[b]["docs"], self.buckets[b]["f1"]]) for b in BUCKETS]))
        if self.single_multi:
            rows = [(k, [v["docs"], v["f1"]] if v else ["-", "-"]) for k, v in self.single_multi.items()]
            lines.append(_table("Single / multi record", ["docs", "F1"], rows))
        t = self.types["overall"]
        lines.append(_table("Event type detection", ["P", "R", "F1"], [("overall", [t.precision, t.recall, t.f1])]))
        if self.entity is not None:
            e = self.entity
            lines.append(_table("Entity extraction", ["P", "R", "F1"], [("overall", [e.precision, e.recall, e.f1])]))
        return "\n\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{100 * v:.1f}"
    return str(v)


def _table(title: str, header: Sequence[str], rows: Sequence[Tuple[str, Sequence]]) -> str:
    width = max([len(title)] + [len(r[0]) for r in rows])
    out = [f"{title:<{width}}  " + "  ".join(f"{h:>7}" for h in header)]
    out += [f"{name:<{width}}  " + "  ".join(f"{_fmt(v):>7}" for v in vals) for name, vals in rows]
    return "\n".join(out)


def evaluate(gold_docs: Sequence[Document], predictions: Sequence[Mapping], schema: EventSchema) -> MetricReport:
    """Score a prediction dump (recdec's JSON objects) against gold documents, joined by doc_id."""
    by_id = {p["doc_id"]: p for p in predictions}
    missing = [d.doc_id for d in gold_docs if d.doc_id not in by_id]
    if missing:
        logger.warning("%d gold documents have no prediction; scored as empty", len(missing))
    pred_records, pred_types, pred_spans, have_mentions = [], [], [], True
    for d in gold_docs:
        p = by_id.get(d.doc_id, {"doc_id": d.doc_id, "types": [], "records": []})
        # a gold corpus file (``event_types``) is accepted as a prediction dump too
        pred_types.append(p["types"] if "types" in p else p.get("event_types", []))
        pred_records.append([schema.make_record(r["type"], r["args"]) for r in p.get("records", [])])
        if "mentions" in p:
            pred_spans.append([(m["sent"], m["start"], m["end"]) for m in p["mentions"]])
        else:
            have_mentions = False
    gold_records = [list(d.gold_records) for d in gold_docs]
    per_doc = {d.doc_id: total(record_counts(p, g).values())
               for d, p, g in zip(gold_docs, pred_records, gold_records)}
    return MetricReport(
        entity=entity_f1(pred_spans, [[m.key for m in d.gold_mentions] for d in gold_docs]) if have_mentions else None,
        types=type_f1(pred_types, [d.gold_types for d in gold_docs], schema.types),
        records=record_micro_f1(pred_records, gold_records, schema.types),
        buckets=bucket_report(gold_docs, per_doc),
        single_multi=single_multi_report(gold_docs, per_doc),
    )


def dump_report(report: MetricReport, path_json, path_text=None) -> None:
    with open(path_json, "w", encoding="utf-8") as f:
        json.dump(report.to_json(), f, indent=2)
    if path_text is not None:
        with open(path_text, "w", encoding="utf-8") as f:
            f.write(report.to_text())
