import io
import json

import pytest

from minireduce.json_dictionary import (
    EntryShapeError,
    EntryStream,
    JsonParseError,
    LexicalEntry,
    Sense,
    flatten_entry,
    generate_lexicon,
    ingest,
    stream_entries,
)
from minireduce.ngram import Backend
from minireduce.sink import CollectionManifest, open_collection, read_collection
from tests.oracles import flatten_count_oracle, reference_flatten

ENTRY = {
    "lemma": "casa",
    "pos": "s.f.",
    "senses": [
        {"gloss": "edificio", "examples": ["la casa è grande", "casa mia"]},
        {"gloss": "famiglia", "examples": []},
    ],
    "forms": ["case"],
}


def write(tmp_path, text, name="lex.json"):
    p = tmp_path / name
    p.write_bytes(text.encode("utf-8") if isinstance(text, str) else text)
    return p


def docs_key(docs):
    return sorted(tuple(d.values()) for d in docs)


class TestStreamEntries:
    def test_empty_array(self, tmp_path):
        assert list(stream_entries(write(tmp_path, "[]"))) == []

    def test_single_entry(self, tmp_path):
        (entry,) = stream_entries(write(tmp_path, json.dumps([ENTRY])))
        assert entry.lemma == "casa"
        assert len(entry.senses) == 2
        assert entry.senses[0] == Sense("edificio", ("la casa è grande", "casa mia"))
        assert entry.forms == ("case",)

    @pytest.mark.parametrize("chunk_size", [1, 2, 3, 7, 64, 1 << 16])
    def test_chunk_boundaries(self, tmp_path, chunk_size):
        tricky = dict(ENTRY, lemma='qu"o{t}e[d]\\', senses=[{"gloss": "a\\\"}b", "examples": ["ù", "è"]}])
        data = [ENTRY, tricky, {"lemma": "x", "pos": "", "senses": [], "forms": []}]
        path = write(tmp_path, json.dumps(data, ensure_ascii=False, indent=1))
        got = [e.to_json() for e in stream_entries(path, chunk_size=chunk_size)]
        assert got == data

    def test_round_trip_generated(self, tmp_path):
        path = tmp_path / "g.json"
        generate_lexicon(path, 300, seed=1, indent=2)
        expected = json.loads(path.read_text(encoding="utf-8"))
        assert [e.to_json() for e in stream_entries(path, chunk_size=4096)] == expected

    @pytest.mark.parametrize(
        "text, offset, where",
        [
            ('{"a": 1}', 0, "$"),
            ("[1, 2]", 1, "$[0]"),
            ('[{"lemma": "a", "pos": "n"} {"lemma": "b"}]', 28, "$[0]"),
            ('[{"lemma": "a", "pos": "n"},]', 28, "$[1]"),
            ('[{"lemma": "a", "pos": "n"}] x', 29, "$"),
            ('[{"lemma": "a", "pos": "n"}', 27, "$"),
            ('[{"lemma": "a", "pos": "n"', 26, "$[0]"),
            ('[{"lemma": "a", "pos" "n"}]', 22, "$[0]"),
        ],
    )
    def test_parse_errors_report_offset(self, tmp_path, text, offset, where):
        with pytest.raises(JsonParseError) as info:
            list(stream_entries(write(tmp_path, text)))
        assert info.value.offset == offset
        assert info.value.path == where

    def test_invalid_utf8_in_entry(self, tmp_path):
        path = write(tmp_path, b'[{"lemma": "a\xff", "pos": "n"}]')
        with pytest.raises(JsonParseError):
            list(stream_entries(path))

    def test_shape_error_and_skip(self, tmp_path):
        data = [ENTRY, {"lemma": "", "pos": "n"}, {"lemma": "b", "pos": "n", "senses": [{"examples": []}]}, ENTRY]
        path = write(tmp_path, json.dumps(data))
        with pytest.raises(EntryShapeError) as info:
            list(stream_entries(path))
        assert info.value.ordinal == 1
        with open(path, "rb") as fh:
            stream = EntryStream(fh, skip_malformed=True)
            assert len(list(stream)) == 2
        assert (stream.entries_read, stream.skipped) == (2, 2)

    def test_buffer_bounded_by_largest_entry(self, tmp_path):
        path = tmp_path / "m.json"
        size = generate_lexicon(path, 3000, seed=2)
        largest = max(len(json.dumps(e, ensure_ascii=False).encode()) for e in json.loads(path.read_bytes()))
        with open(path, "rb") as fh:
            stream = EntryStream(fh, chunk_size=1024)
            assert sum(1 for _ in stream) == 3000
        assert stream.peak_buffer_bytes <= 1024 + largest + 2
        assert stream.peak_buffer_bytes < size / 100

    def test_from_file_object(self):
        fh = io.BytesIO(json.dumps([ENTRY, ENTRY]).encode())
        assert len(list(EntryStream(fh))) == 2


class TestFlatten:
    def test_two_senses(self):
        e = LexicalEntry.from_json(ENTRY, 0)
        docs = flatten_entry(e)
        assert [d["sense_index"] for d in docs] == [0, 1]
        assert docs[0] == {"lemma": "casa", "pos": "s.f.", "sense_index": 0, "gloss": "edificio",
                           "example_count": 2, "form_count": 1}

    def test_stub_for_senseless_entry(self):
        docs = flatten_entry(LexicalEntry("x", "avv.", (), ("a", "b")))
        assert docs == [{"lemma": "x", "pos": "avv.", "sense_index": -1, "gloss": "", "example_count": 0,
                         "form_count": 2}]

    def test_fixture_document_sum(self, tmp_path):
        path = tmp_path / "f.json"
        generate_lexicon(path, 500, seed=9)
        _, expected = flatten_count_oracle(path)
        assert sum(len(flatten_entry(e)) for e in stream_entries(path)) == expected


@pytest.fixture
def lexicon(tmp_path):
    path = tmp_path / "lexicon.json"
    generate_lexicon(path, 1200, seed=4)
    return path


class TestIngest:
    @pytest.mark.parametrize("backend", list(Backend), ids=lambda b: b.value)
    def test_empty(self, ctx, tmp_path, backend):
        sink = open_collection("db", "Lex", tmp_path / backend.value)
        report = ingest(write(tmp_path, "[]"), backend, sink, ctx)
        assert (report.documents_written, report.entries_read) == (0, 0)
        assert CollectionManifest.load(sink.path / "manifest.json").document_count == 0

    def test_three_entries_same_documents(self, ctx, tmp_path):
        data = [ENTRY, {"lemma": "vuoto", "pos": "agg.", "senses": [], "forms": []}, ENTRY]
        path = write(tmp_path, json.dumps(data))
        results = {}
        for backend in Backend:
            sink = open_collection("db", "Lex", tmp_path / backend.value)
            ingest(path, backend, sink, ctx)
            results[backend] = docs_key(read_collection(sink.path))
        assert results[Backend.RECORDS] == results[Backend.TABLE] == reference_flatten(path)
        assert len(results[Backend.RECORDS]) == 5

    @pytest.mark.parametrize("backend", list(Backend), ids=lambda b: b.value)
    def test_counts_match_oracle(self, ctx, tmp_path, lexicon, backend):
        entries, documents = flatten_count_oracle(lexicon)
        sink = open_collection("db", "Lex", tmp_path / "out")
        report = ingest(lexicon, backend, sink, ctx, batch_size=100)
        assert report.entries_read == entries
        assert report.documents_written == documents
        assert report.documents_written >= report.entries_read
        manifest = CollectionManifest.load(sink.path / "manifest.json")
        assert manifest.completed and manifest.document_count == documents
        assert docs_key(read_collection(sink.path)) == reference_flatten(lexicon)

    def test_document_key_order(self, ctx, tmp_path):
        sink = open_collection("db", "Lex", tmp_path)
        ingest(write(tmp_path, json.dumps([ENTRY])), Backend.TABLE, sink, ctx)
        first = (sink.path / "part-00000.jsonl").read_text(encoding="utf-8").splitlines()
        lines = [line for p in sorted(sink.path.glob("part-*.jsonl")) for line in p.read_text().splitlines()]
        assert lines[0].startswith('{"lemma":"casa","pos":"s.f.","sense_index":0,"gloss":')
        assert first == lines[:len(first)]

    def test_parse_error_leaves_incomplete_marker(self, ctx, tmp_path):
        path = write(tmp_path, json.dumps([ENTRY])[:-1])
        sink = open_collection("db", "Lex", tmp_path / "out")
        with pytest.raises(JsonParseError):
            ingest(path, Backend.RECORDS, sink, ctx)
        assert (sink.path / "_INCOMPLETE").exists()
        assert not (sink.path / "manifest.json").exists()


def test_generator_is_deterministic(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    generate_lexicon(a, 200, seed=5)
    generate_lexicon(b, 200, seed=5)
    assert a.read_bytes() == b.read_bytes()
    data = json.loads(a.read_text(encoding="utf-8"))
    assert len(data) == 200
    assert max(len(e["senses"]) for e in data) <= 4
