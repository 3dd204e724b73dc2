from .bio import LABELS, bio_labels, extract_mentions, resolve_overlaps, to_bio
from .io import (document_from_json, document_to_json, dump_chfinann, dump_corpus,
                 import_chfinann, load_corpus)
from .synth import SynthConfig, audit_corpus, synth_corpus
from .types import CorpusError, Document, Entity, EntityMention, EventRecord, EventSchema

__all__ = [
    "LABELS", "bio_labels", "extract_mentions", "resolve_overlaps", "to_bio",
    "document_from_json", "document_to_json", "dump_chfinann", "dump_corpus",
    "import_chfinann", "load_corpus", "SynthConfig", "audit_corpus", "synth_corpus",
    "CorpusError", "Document", "Entity", "EntityMention", "EventRecord", "EventSchema",
]
