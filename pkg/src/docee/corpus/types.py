"""Value types shared by the whole pipeline.

All types are frozen dataclasses so documents can be shared freely between
threads and used as dictionary keys.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple


class CorpusError(ValueError):
    """Raised when a corpus or schema violates the canonical format."""


@dataclass(frozen=True, order=True)
class EntityMention:
    sentence_index: int
    start: int
    end: int
    surface: str = field(compare=False)

    def __post_init__(self):
        if not 0 <= self.start < self.end:
            raise CorpusError(f"bad mention span [{self.start}, {self.end})")

    @property
    def span(self) -> Tuple[int, int]:
        return self.start, self.end

    @property
    def key(self) -> Tuple[int, int, int]:
        return self.sentence_index, self.start, self.end

    @classmethod
    def from_tokens(cls, sentences: Sequence[Sequence[str]], sent: int, start: int, end: int) -> "EntityMention":
        return cls(sent, start, end, "".join(sentences[sent][start:end]))


@dataclass(frozen=True)
class Entity:
    """An equivalence class of mentions that share one surface string."""

    surface: str
    mentions: Tuple[EntityMention, ...]

    def __post_init__(self):
        if not self.mentions:
            raise CorpusError(f"entity {self.surface!r} has no mentions")
        if any(m.surface != self.surface for m in self.mentions):
            raise CorpusError(f"entity {self.surface!r} groups mentions with other surfaces")


@dataclass(frozen=True)
class EventRecord:
    event_type: str
    args: Tuple[Tuple[str, Optional[str]], ...]

    @property
    def arg_dict(self) -> Dict[str, Optional[str]]:
        return dict(self.args)

    @property
    def filled(self) -> int:
        return sum(v is not None for _, v in self.args)

    def to_json(self) -> dict:
        return {"type": self.event_type, "args": dict(self.args)}


class EventSchema:
    """Event types with their ordered role lists.

    Role order is the decoding order and is taken verbatim from the schema file.
    """

    def __init__(self, types: Sequence[str], roles: Mapping[str, Sequence[str]]):
        self.types: Tuple[str, ...] = tuple(types)
        if len(set(self.types)) != len(self.types):
            raise CorpusError("duplicate event type in schema")
        missing = [t for t in self.types if t not in roles]
        if missing:
            raise CorpusError(f"schema has no role list for types {missing}")
        self.roles: Dict[str, Tuple[str, ...]] = {}
        for t in self.types:
            rs = tuple(roles[t])
            if not rs or len(set(rs)) != len(rs):
                raise CorpusError(f"role list for {t!r} must be nonempty and unique")
            self.roles[t] = rs
        self._type_index = {t: i for i, t in enumerate(self.types)}
        # flat (type, role) index, used for role embeddings
        self._role_offset = {}
        offset = 0
        for t in self.types:
            self._role_offset[t] = offset
            offset += len(self.roles[t])
        self.total_roles = offset

    def __eq__(self, other):
        return isinstance(other, EventSchema) and self.to_json() == other.to_json()

    def __repr__(self):
        return f"EventSchema(types={list(self.types)}, total_roles={self.total_roles})"

    @property
    def num_types(self) -> int:
        return len(self.types)

    def type_index(self, event_type: str) -> int:
        try:
            return self._type_index[event_type]
        except KeyError:
            raise CorpusError(f"unknown event type {event_type!r}") from None

    def role_index(self, event_type: str, j: int) -> int:
        return self._role_offset[event_type] + j

    def make_record(self, event_type: str, args: Mapping[str, Optional[str]]) -> EventRecord:
        """Build a record with roles in schema order; absent roles become NULL."""
        roles = self.roles.get(event_type)
        if roles is None:
            raise CorpusError(f"unknown event type {event_type!r}")
        unknown = set(args) - set(roles)
        if unknown:
            raise CorpusError(f"roles {sorted(unknown)} not in schema for {event_type!r}")
        return EventRecord(event_type, tuple((r, args.get(r)) for r in roles))

    def to_json(self) -> dict:
        return {"types": list(self.types), "roles": {t: list(r) for t, r in self.roles.items()}}

    @classmethod
    def from_json(cls, obj: Mapping) -> "EventSchema":
        if not isinstance(obj, Mapping) or "types" not in obj or "roles" not in obj:
            raise CorpusError("schema must be an object with 'types' and 'roles'")
        return cls(obj["types"], obj["roles"])

    @classmethod
    def load(cls, path) -> "EventSchema":
        with open(path, encoding="utf-8") as f:
            return cls.from_json(json.load(f))

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2, ensure_ascii=False), encoding="utf-8")

    @classmethod
    def chfinann(cls) -> "EventSchema":
        """The five financial event types and their 35 roles, in decoding order."""
        return cls.load(Path(__file__).with_name("chfinann_schema.json"))


@dataclass(frozen=True)
class Document:
    doc_id: str
    sentences: Tuple[Tuple[str, ...], ...]
    gold_mentions: Tuple[EntityMention, ...] = ()
    gold_types: Tuple[str, ...] = ()
    gold_records: Tuple[EventRecord, ...] = ()

    @property
    def num_tokens(self) -> int:
        return sum(len(s) for s in self.sentences)

    def entities(self) -> List[Entity]:
        """Gold entities by exact surface match, ordered by first mention."""
        groups: Dict[str, List[EntityMention]] = {}
        for m in sorted(set(self.gold_mentions)):
            groups.setdefault(m.surface, []).append(m)
        return [Entity(s, tuple(ms)) for s, ms in groups.items()]

    def validate(self, schema: Optional[EventSchema] = None) -> None:
        where = f"doc {self.doc_id!r}"
        if not self.sentences:
            raise CorpusError(f"{where}: field 'sentences' is empty")
        for i, s in enumerate(self.sentences):
            if not s:
                raise CorpusError(f"{where}: field 'sentences[{i}]' is empty")
        for m in self.gold_mentions:
            if not 0 <= m.sentence_index < len(self.sentences):
                raise CorpusError(f"{where}: field 'mentions' has sentence index {m.sentence_index} out of range")
            sent = self.sentences[m.sentence_index]
            if m.end > len(sent):
                raise CorpusError(f"{where}: field 'mentions' span {m.span} exceeds sentence {m.sentence_index}")
            if m.surface != "".join(sent[m.start:m.end]):
                raise CorpusError(f"{where}: field 'mentions' surface {m.surface!r} disagrees with tokens")
        surfaces = {m.surface for m in self.gold_mentions}
        for rec in self.gold_records:
            if rec.event_type not in self.gold_types:
                raise CorpusError(f"{where}: field 'records' uses type {rec.event_type!r} missing from 'event_types'")
            if rec.filled == 0:
                raise CorpusError(f"{where}: field 'records' has a {rec.event_type!r} record with no arguments")
            for role, value in rec.args:
                if value is not None and value not in surfaces:
                    raise CorpusError(f"{where}: field 'records' argument {role}={value!r} matches no mention")
        if schema is not None:
            for t in self.gold_types:
                schema.type_index(t)
            for rec in self.gold_records:
                roles = tuple(r for r, _ in rec.args)
                if roles != schema.roles.get(rec.event_type):
                    raise CorpusError(f"{where}: field 'records' roles {roles} differ from schema")


def mentions_by_sentence(mentions: Iterable[EntityMention], n_sentences: int) -> List[List[EntityMention]]:
    out: List[List[EntityMention]] = [[] for _ in range(n_sentences)]
    for m in mentions:
        out[m.sentence_index].append(m)
    for ms in out:
        ms.sort()
    return out
