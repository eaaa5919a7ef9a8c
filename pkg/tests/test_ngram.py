import pytest

from minireduce.ngram import (
    Backend,
    DictionaryEntry,
    ThreeGramEntry,
    TwoGramEntry,
    build_collection,
    build_dictionary,
    build_three_grams,
    build_two_grams,
    tokenize,
)
from tests.conftest import BUNDLED_CORPORA, CORPORA
from tests.oracles import reference_dictionary, reference_lines, reference_ngrams, reference_tokenize

BACKENDS = list(Backend)


def as_tuples(entries):
    return sorted(tuple(vars(e).values()) for e in entries)


class TestTokenize:
    def test_basic(self):
        assert tokenize("Il gatto.") == ["il", "gatto"]

    def test_empty(self):
        assert tokenize("") == []
        assert tokenize(" ,;. ") == []

    def test_elision_kept(self):
        assert tokenize("L'acqua, dell’arte!") == ["l'acqua", "dell’arte"]

    def test_digits_and_accents(self):
        assert tokenize("Nel 2024 la CITTÀ crebbe_molto") == ["nel", "2024", "la", "città", "crebbe", "molto"]

    @pytest.mark.parametrize("name", BUNDLED_CORPORA + ["tiny.txt"])
    def test_matches_reference(self, name):
        for line in reference_lines(CORPORA / name):
            assert tokenize(line) == reference_tokenize(line)


@pytest.fixture(params=BACKENDS, ids=lambda b: b.value)
def backend(request):
    return request.param


class TestDictionary:
    def test_example(self, ctx, backend):
        corpus = ctx.parallelize(["il gatto e il cane"], 1)
        got = as_tuples(build_dictionary(corpus, backend).collect())
        assert got == sorted([("il", 2, 2), ("gatto", 1, 5), ("e", 1, 1), ("cane", 1, 4)])

    def test_single(self, ctx, backend):
        assert build_dictionary(ctx.parallelize(["a"], 1), backend).collect() == [DictionaryEntry("a", 1, 1)]

    def test_empty(self, ctx, backend):
        assert build_dictionary(ctx.parallelize([], 2), backend).count() == 0

    def test_count_is_distinct_tokens(self, ctx, backend, tiny_corpus):
        corpus = ctx.read_text_lines(tiny_corpus, 2)
        distinct = {t for line in reference_lines(tiny_corpus) for t in reference_tokenize(line)}
        assert build_dictionary(corpus, backend).count() == len(distinct)


class TestTwoGrams:
    def test_example(self, ctx, backend):
        got = as_tuples(build_two_grams(ctx.parallelize(["il gatto e il cane"], 1), backend).collect())
        assert got == sorted([("il", "gatto", 1), ("gatto", "e", 1), ("e", "il", 1), ("il", "cane", 1)])

    def test_single_token_line(self, ctx, backend):
        assert build_two_grams(ctx.parallelize(["solo"], 1), backend).count() == 0

    def test_repeated(self, ctx, backend):
        assert build_two_grams(ctx.parallelize(["a a a"], 1), backend).collect() == [TwoGramEntry("a", "a", 2)]

    def test_no_cross_line_pairs(self, ctx, backend):
        got = as_tuples(build_two_grams(ctx.parallelize(["a b", "c d"], 2), backend).collect())
        assert got == [("a", "b", 1), ("c", "d", 1)]


class TestThreeGrams:
    def test_example(self, ctx, backend):
        got = as_tuples(build_three_grams(ctx.parallelize(["il gatto e il cane"], 1), backend).collect())
        assert got == sorted([("il", "gatto", "e", 1), ("gatto", "e", "il", 1), ("e", "il", "cane", 1)])

    def test_two_token_line(self, ctx, backend):
        assert build_three_grams(ctx.parallelize(["due parole"], 1), backend).count() == 0

    def test_empty(self, ctx, backend):
        assert build_three_grams(ctx.parallelize([], 3), backend).count() == 0

    def test_entry_type(self, ctx, backend):
        (entry,) = build_three_grams(ctx.parallelize(["x y z"], 1), backend).collect()
        assert entry == ThreeGramEntry("x", "y", "z", 1)


@pytest.mark.parametrize("name", BUNDLED_CORPORA)
def test_count_relations(ctx, name):
    path = CORPORA / name
    lines = reference_lines(path)
    lengths = [len(reference_tokenize(line)) for line in lines]
    corpus = ctx.read_text_lines(path)
    d = build_dictionary(corpus, Backend.RECORDS).collect()
    two = build_two_grams(corpus, Backend.TABLE).collect()
    three = build_three_grams(corpus, Backend.RECORDS).collect()
    assert sum(e.freq for e in d) == sum(lengths)
    assert sum(e.freq for e in two) == sum(max(0, n - 1) for n in lengths)
    assert sum(e.freq for e in three) == sum(max(0, n - 2) for n in lengths)
    assert all(e.chars == len(e.term) and e.freq >= 1 for e in d)
    assert len(d) <= len(two) <= len(three)


def test_tiny_corpus_matches_oracle_both_backends(ctx, tiny_corpus):
    lines = reference_lines(tiny_corpus)
    corpus = ctx.read_text_lines(tiny_corpus, 2)
    for backend in BACKENDS:
        assert as_tuples(build_dictionary(corpus, backend).collect()) == reference_dictionary(lines)
        assert as_tuples(build_two_grams(corpus, backend).collect()) == reference_ngrams(lines, 2)
        assert as_tuples(build_three_grams(corpus, backend).collect()) == reference_ngrams(lines, 3)


def test_unknown_collection(ctx):
    with pytest.raises(ValueError, match="unknown collection"):
        build_collection("FourGrams", ctx.parallelize([], 1), Backend.RECORDS)
