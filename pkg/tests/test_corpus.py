import numpy as np
import pytest

from taxoforge.corpus import (
    CorpusError,
    build_index,
    candidate_terms,
    export_text,
    ingest,
    load_corpus,
    relation_statements,
    sample_negative_sentences,
    save_corpus,
)


def brute_force_pair_sentences(corpus, a, b):
    """Independent oracle: scan every sentence for joint containment."""
    return [
        sid
        for sid, sent in enumerate(corpus.sentences)
        if a in sent.tokens and b in sent.tokens
    ]


def test_ingest_no_filtering():
    corpus = ingest("a b. a c.", min_count=1)
    assert sorted(corpus.terms) == ["a", "b", "c"]
    assert corpus.n_sentences == 2
    assert corpus.n_docs == 1


def test_ingest_filters_below_min_count():
    corpus = ingest("a b. a c.", min_count=2)
    assert corpus.terms == ["a"]
    assert [s.tokens for s in corpus.sentences] == [(0,), (0,)]


def test_ingest_case_folds_and_splits_on_terminators():
    corpus = ingest("Apples are Good! are they? apples are", min_count=1)
    assert "apples" in corpus.term_ids and "Apples" not in corpus.term_ids
    assert corpus.n_sentences == 3


def test_ingest_counts_frequencies_over_whole_corpus():
    corpus = ingest("x y. x z.\nx y y.", min_count=1)
    assert corpus.frequencies[corpus.term_id("x")] == 3
    assert corpus.frequencies[corpus.term_id("y")] == 3
    assert corpus.n_docs == 2


def test_ingest_empty_corpus_errors():
    with pytest.raises(CorpusError, match="empty corpus"):
        ingest("", min_count=1)
    with pytest.raises(CorpusError, match="empty corpus"):
        ingest("   \n  \n", min_count=1)


def test_ingest_min_count_too_high_errors():
    with pytest.raises(CorpusError, match="min_count too high"):
        ingest("a b. a c.", min_count=10)


def test_ingest_idempotent_through_export():
    corpus = ingest("a b c. a d.\nb b a. c c c.", min_count=2)
    again = ingest(export_text(corpus), min_count=2)
    assert again.terms == corpus.terms
    assert again.frequencies == corpus.frequencies
    assert again.sentences == corpus.sentences


def test_relation_statements_example():
    corpus = ingest("x y. x z. y z x.", min_count=1)
    index = build_index(corpus)
    x, y = corpus.term_id("x"), corpus.term_id("y")
    stmts = relation_statements(index, x, y, cap=10)
    assert [s.sentence_id for s in stmts] == [0, 2]
    for s in stmts:
        assert s.tokens[s.pos_a] == x and s.tokens[s.pos_b] == y


def test_relation_statements_identical_terms_error():
    corpus = ingest("x y.", min_count=1)
    index = build_index(corpus)
    with pytest.raises(CorpusError):
        relation_statements(index, 0, 0, cap=10)


def test_relation_statements_disjoint_terms_empty():
    corpus = ingest("x y. z w.", min_count=1)
    index = build_index(corpus)
    assert relation_statements(index, corpus.term_id("x"), corpus.term_id("z"), 10) == []


def test_relation_statements_cap_and_first_positions():
    corpus = ingest("a b a b. a b. a b.", min_count=1)
    index = build_index(corpus)
    a, b = corpus.term_id("a"), corpus.term_id("b")
    stmts = relation_statements(index, a, b, cap=2)
    assert [s.sentence_id for s in stmts] == [0, 1]
    assert stmts[0].pos_a == 0 and stmts[0].pos_b == 1  # first occurrences


def test_relation_statements_unknown_term():
    corpus = ingest("x y.", min_count=1)
    index = build_index(corpus)
    with pytest.raises(CorpusError, match="not in vocabulary"):
        relation_statements(index, 0, 99, cap=10)


def test_relation_statements_match_brute_force_on_random_corpora():
    rng = np.random.default_rng(7)
    for _ in range(25):
        n_sents = int(rng.integers(1, 50))
        lines = []
        for _ in range(n_sents):
            length = int(rng.integers(2, 8))
            lines.append(" ".join(f"t{int(rng.integers(12))}" for _ in range(length)) + " .")
        corpus = ingest("\n".join(lines), min_count=1)
        index = build_index(corpus)
        for _ in range(10):
            a, b = rng.choice(corpus.n_terms, size=2, replace=False)
            got = [s.sentence_id for s in relation_statements(index, int(a), int(b), 10**6)]
            assert got == brute_force_pair_sentences(corpus, a, b)


def test_candidate_terms_counts():
    corpus = ingest("x y. x y. x z.", min_count=1)
    index = build_index(corpus)
    x = corpus.term_id("x")
    assert corpus.term_strings(candidate_terms(index, x, min_cooccur=2)) == ["y"]
    assert corpus.term_strings(candidate_terms(index, x, min_cooccur=1)) == ["y", "z"]


def test_candidate_terms_ordering_is_total():
    # equal counts break ties by term id, so the order is a total order
    corpus = ingest("x a b. x b a. x c.", min_count=1)
    index = build_index(corpus)
    x = corpus.term_id("x")
    ordered = candidate_terms(index, x, min_cooccur=1)
    assert ordered == sorted(
        ordered,
        key=lambda t: (-len(index.pair_sentences(x, t)), t),
    )


def test_candidate_terms_no_cooccurrence():
    corpus = ingest("x. y z.", min_count=1)
    index = build_index(corpus)
    assert candidate_terms(index, corpus.term_id("x"), 1) == []


def test_sample_negatives_deterministic():
    corpus = ingest("a b c. d e. f g h i.", min_count=1)
    one = sample_negative_sentences(corpus, 20, rng_seed=5)
    two = sample_negative_sentences(corpus, 20, rng_seed=5)
    assert one == two
    assert sample_negative_sentences(corpus, 0, rng_seed=5) == []


def test_sample_negatives_range_and_distinct_tokens():
    lines = "\n".join(f"w{i} u{i} v{i} ." for i in range(10))
    corpus = ingest(lines, min_count=1)
    stmts = sample_negative_sentences(corpus, 1000, rng_seed=3)
    assert len(stmts) == 1000
    for st in stmts:
        assert 0 <= st.sentence_id <= 9
        assert st.pos_a != st.pos_b
        assert st.tokens[st.pos_a] != st.tokens[st.pos_b]


def test_sample_negatives_requires_two_distinct_tokens():
    corpus = ingest("a a a. b.", min_count=1)
    with pytest.raises(CorpusError):
        sample_negative_sentences(corpus, 1, rng_seed=1)


def test_binary_round_trip(tmp_path):
    corpus = ingest("alpha beta_gamma. delta alpha!\nbeta_gamma delta?", min_count=1)
    path = tmp_path / "corpus.bin"
    save_corpus(corpus, str(path))
    back = load_corpus(str(path))
    assert back.terms == corpus.terms
    assert back.frequencies == corpus.frequencies
    assert back.sentences == corpus.sentences
    assert back.n_docs == corpus.n_docs


def test_binary_rejects_other_files(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"NOPE....")
    with pytest.raises(CorpusError, match="not a corpus file"):
        load_corpus(str(path))
