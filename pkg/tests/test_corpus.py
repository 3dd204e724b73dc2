import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from docee.corpus import (
    CorpusError, EntityMention, EventSchema, SynthConfig, audit_corpus, bio_labels, document_from_json,
    document_to_json, dump_chfinann, dump_corpus, extract_mentions, import_chfinann, load_corpus, synth_corpus, to_bio,
)
from docee.hetgraph import coref_by_string

SCHEMA = EventSchema(["Buy", "Sell"], {"Buy": ["buyer", "item"], "Sell": ["seller", "item", "price"]})


def _doc_json(doc_id="d0", **overrides):
    obj = {
        "doc_id": doc_id,
        "sentences": [["A", "bought", "X"], ["X", "costs", "9"]],
        "mentions": [{"sent": 0, "start": 0, "end": 1}, {"sent": 0, "start": 2, "end": 3},
                     {"sent": 1, "start": 0, "end": 1}],
        "event_types": ["Buy"],
        "records": [{"type": "Buy", "args": {"buyer": "A", "item": "X"}}],
    }
    obj.update(overrides)
    return obj


def _write(tmp_path, objs, name="c.json"):
    p = tmp_path / name
    p.write_text(json.dumps(objs), encoding="utf-8")
    return p


def test_load_two_docs_round_trip(tmp_path):
    p = _write(tmp_path, [_doc_json("a"), _doc_json("b")])
    docs = load_corpus(p, SCHEMA)
    assert [d.doc_id for d in docs] == ["a", "b"]
    assert docs[0].gold_records[0].arg_dict == {"buyer": "A", "item": "X"}
    dump_corpus(docs, tmp_path / "out.json")
    assert load_corpus(tmp_path / "out.json", SCHEMA) == docs


def test_unknown_role_is_rejected(tmp_path):
    bad = _doc_json(records=[{"type": "Buy", "args": {"buyer": "A", "colour": "X"}}])
    with pytest.raises(CorpusError, match="colour"):
        load_corpus(_write(tmp_path, [bad]), SCHEMA)


@pytest.mark.parametrize("change, field", [
    ({"mentions": [{"sent": 0, "start": 2, "end": 4}]}, "mentions"),
    ({"records": [{"type": "Buy", "args": {"buyer": "Nobody"}}]}, "records"),
    ({"sentences": [], "mentions": [], "event_types": [], "records": []}, "sentences"),
    ({"event_types": ["Rent"]}, "event_types"),
])
def test_errors_name_document_and_field(tmp_path, change, field):
    with pytest.raises(CorpusError) as err:
        load_corpus(_write(tmp_path, [_doc_json("doc-x", **change)]), SCHEMA)
    assert "doc-x" in str(err.value) and field in str(err.value)


def test_duplicate_doc_ids(tmp_path):
    with pytest.raises(CorpusError, match="duplicate"):
        load_corpus(_write(tmp_path, [_doc_json("a"), _doc_json("a")]), SCHEMA)


def test_chfinann_empty_list(tmp_path):
    assert import_chfinann(_write(tmp_path, [])) == []


def test_chfinann_layout_matches_canonical_loader(tmp_path):
    # single-character tokens so that joining and per-character splitting agree
    obj = {
        "doc_id": "cf-1",
        "sentences": [list("张三冻结股份"), list("法院执行")],
        "mentions": [{"sent": 0, "start": 0, "end": 2}, {"sent": 1, "start": 0, "end": 2}],
        "event_types": ["EquityFreeze"],
        "records": [{"type": "EquityFreeze", "args": {"EquityHolder": "张三", "LegalInstitution": "法院"}}],
    }
    schema = EventSchema.chfinann()
    canonical = load_corpus(_write(tmp_path, [obj]), schema)
    dump_chfinann(canonical, tmp_path / "released.json")
    assert import_chfinann(tmp_path / "released.json", schema) == canonical


def test_chfinann_drops_bad_spans_and_nulls_orphan_args(tmp_path):
    released = [["x", {
        "sentences": ["张三冻结", "法院"],
        "ann_mspan2dranges": {"张三": [[0, 0, 2], [5, 0, 2]], "法院": [[1, 0, 1]]},
        "recguid_eventname_eventdict_list": [[0, "EquityFreeze", {"EquityHolder": "张三", "LegalInstitution": "法院"}]],
    }]]
    (doc,) = import_chfinann(_write(tmp_path, released))
    assert [m.key for m in doc.gold_mentions] == [(0, 0, 2)]
    assert doc.gold_records[0].arg_dict["LegalInstitution"] is None


def test_chfinann_schema_shape():
    schema = EventSchema.chfinann()
    assert schema.num_types == 5
    assert schema.total_roles == 35
    assert schema.roles["EquityPledge"][0] == "Pledger"


def test_bio_examples():
    tokens = list("abcde")
    assert bio_labels([tokens], [EntityMention.from_tokens([tokens], 0, 1, 3)]) == [list("OBIOO")]
    assert bio_labels([tokens], []) == [list("OOOOO")]
    overlapping = [EntityMention.from_tokens([tokens], 0, 0, 3), EntityMention.from_tokens([tokens], 0, 2, 4)]
    assert bio_labels([tokens], overlapping) == [list("BIIOO")]


def test_to_bio_on_document(tmp_path):
    (doc,) = load_corpus(_write(tmp_path, [_doc_json()]), SCHEMA)
    assert to_bio(doc) == [["B", "O", "B"], ["B", "O", "O"]]


@pytest.mark.parametrize("labels, spans", [
    ("OBIO", [(1, 3)]),
    ("OIIO", [(1, 3)]),
    ("BBO", [(0, 1), (1, 2)]),
    ("OOO", []),
    ("BII", [(0, 3)]),
])
def test_extract_mentions_examples(labels, spans):
    tokens = [f"t{i}" for i in range(len(labels))]
    assert [m.span for m in extract_mentions(list(labels), 4, tokens)] == spans
    assert all(m.sentence_index == 4 for m in extract_mentions(list(labels), 4, tokens))


@st.composite
def _spans(draw):
    n = draw(st.integers(1, 12))
    cuts = sorted(draw(st.sets(st.integers(0, n), max_size=8)))
    spans = [(a, b) for a, b in zip(cuts, cuts[1:]) if draw(st.booleans())]
    return n, spans


@given(_spans())
@settings(max_examples=200, deadline=None)
def test_bio_round_trip(case):
    n, spans = case
    tokens = [f"t{i}" for i in range(n)]
    mentions = [EntityMention.from_tokens([tokens], 0, a, b) for a, b in spans]
    (labels,) = bio_labels([tokens], mentions)
    assert [m.span for m in extract_mentions(labels, 0, tokens)] == spans


def _corpus_bytes(docs, tmp_path, name):
    dump_corpus(docs, tmp_path / name)
    return (tmp_path / name).read_bytes()


def test_synth_is_deterministic(tmp_path):
    cfg = SynthConfig()
    a = _corpus_bytes(synth_corpus(cfg, 7), tmp_path, "a.json")
    b = _corpus_bytes(synth_corpus(cfg, 7), tmp_path, "b.json")
    c = _corpus_bytes(synth_corpus(cfg, 8), tmp_path, "c.json")
    assert a == b and a != c


def test_synth_radius_one_keeps_records_in_one_sentence():
    docs = synth_corpus(SynthConfig(scatter_radius=1), 3)
    assert set(audit_corpus(docs)["record_sentence_spans"]) == {1}


def test_synth_audit_matches_config(tmp_path):
    cfg = SynthConfig(n_docs=50, n_types=2, roles_per_type=3, max_records_per_doc=2, scatter_radius=3)
    docs = synth_corpus(cfg, 7)
    # audit the re-parsed file, not the in-memory objects
    dump_corpus(docs, tmp_path / "toy.json")
    reparsed = load_corpus(tmp_path / "toy.json", cfg.schema())
    assert reparsed == docs
    audit = audit_corpus(reparsed)
    assert audit["n_docs"] == 50
    assert audit["n_multi_record_docs"] == cfg.n_multi_docs() == 15
    assert audit["n_records"] == sum(audit["records_per_doc"]) == 65
    assert set(audit["records_per_doc"]) == {1, 2}
    assert max(audit["record_sentence_spans"]) <= 3
    assert set(audit["types_used"]) == {"EV0", "EV1"}


def test_synth_rejects_bad_config():
    with pytest.raises(CorpusError):
        synth_corpus(SynthConfig(max_records_per_doc=1, multi_record_fraction=0.5), 0)
    with pytest.raises((CorpusError, ValueError)):
        SynthConfig.from_dict({"n_docs": 3, "colour": 1})


def test_coref_matches_generated_entities():
    for d in synth_corpus(SynthConfig(n_docs=10, repeat_prob=0.8), 1):
        mentions = list(d.gold_mentions)
        clusters = coref_by_string(mentions)
        assert sorted(sorted(mentions[i].key for i in c) for c in clusters) == \
            sorted(sorted(m.key for m in e.mentions) for e in d.entities())


def test_document_json_round_trip():
    for d in synth_corpus(SynthConfig(n_docs=5), 2):
        assert document_from_json(document_to_json(d), SynthConfig().schema()) == d
