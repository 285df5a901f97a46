import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ldseq.corpus import (BOL_ID, BOS_ID, EOS_ID, UNK_ID, SequenceExample, Token, Vocabs, build_vocab,
                          concepts, decode_labels, encode, extract_chunks, format_conll, parse_conll,
                          parse_label_column, read_conll, repair_bio, split_label)
from ldseq.errors import DataError, ParseError


def test_parse_three_columns():
    [ex] = parse_conll("Boston city fromloc.city-name\n")
    assert len(ex) == 1
    tok = ex.tokens[0]
    assert (tok.word, tok.word_class, tok.label) == ("Boston", "city", "fromloc.city-name")


def test_parse_blank_line_separates():
    exs = parse_conll("a O\nb O\n\nc O\n")
    assert [len(e) for e in exs] == [2, 1]


def test_parse_error_reports_line():
    with pytest.raises(ParseError, match="line 2"):
        parse_conll("a O\nb X Y Z\n")


def test_parse_mixed_column_counts_rejected():
    with pytest.raises(ParseError, match="line 2"):
        parse_conll("a k O\nb O\n")


def test_parse_skips_comments_and_extra_blanks():
    exs = parse_conll("# header\n\n\na O\n# mid\nb B-X\n\n\n")
    assert [e.words for e in exs] == [["a", "b"]]


def test_build_vocab_examples():
    v = build_vocab([["a", "a", "b"]])
    assert v.itos == ["<unk>", "<s>", "</s>", "<bol>", "a", "b"]
    pruned = build_vocab([["a", "a", "b"]], min_count=2)
    assert pruned.index("b") == UNK_ID
    assert pruned.index("a") == 4


def test_reserved_indices():
    v = build_vocab([])
    assert (v.index("<unk>"), v.index("<s>"), v.index("</s>"), v.index("<bol>")) == (UNK_ID, BOS_ID, EOS_ID, BOL_ID)


def test_labels_never_pruned():
    exs = parse_conll("a X\nb Y\nc X\n")
    vocabs = Vocabs.from_examples(exs, min_count=5)
    assert "Y" in vocabs.labels and "X" in vocabs.labels
    assert len(vocabs.words) == 4     # every word pruned


def test_encode_examples():
    exs = parse_conll("a O\nb O\n")
    vocabs = Vocabs.from_examples(exs)
    enc = encode(exs[0], vocabs)
    assert enc.words[0] == 4
    unseen = SequenceExample((Token("zzz", "O"),))
    assert encode(unseen, vocabs).words[0] == UNK_ID
    with pytest.raises(DataError):
        encode(SequenceExample((Token("a", "NEW"),)), vocabs)
    assert encode(SequenceExample((Token("a", "NEW"),)), vocabs, training=False).labels[0] == UNK_ID


def test_encoded_indices_in_range():
    exs = parse_conll("x k1 A\ny k2 B\n\nz k1 A\n")
    vocabs = Vocabs.from_examples(exs)
    for ex in exs:
        enc = encode(ex, vocabs)
        assert enc.words.max() < len(vocabs.words)
        assert enc.labels.max() < len(vocabs.labels)
        assert enc.classes.max() < len(vocabs.classes)
        assert all(c.max() < len(vocabs.chars) for c in enc.chars)


def test_vocab_is_deterministic():
    text = "b O\na B-X\n\nc I-X\na O\n"
    assert Vocabs.from_examples(parse_conll(text)) == Vocabs.from_examples(parse_conll(text))


def test_empty_corpus_rejected():
    with pytest.raises(DataError):
        Vocabs.from_examples([])


def test_encoded_reversed():
    exs = parse_conll("a k A\nb j B\nc k C\n")
    enc = encode(exs[0], Vocabs.from_examples(exs))
    rev = enc.reversed()
    assert list(rev.words) == list(enc.words[::-1])
    assert list(rev.labels) == list(enc.labels[::-1])
    assert list(rev.classes) == list(enc.classes[::-1])
    assert rev.gold == ["C", "B", "A"]


words = st.text(alphabet="abcdefgh", min_size=1, max_size=6)
labels = st.sampled_from(["O", "B-X", "I-X", "B-Y"])
sentences = st.lists(st.tuples(words, labels), min_size=1, max_size=8)


@given(st.lists(sentences, min_size=1, max_size=5))
def test_decode_encode_round_trip(corpus):
    exs = [SequenceExample(tuple(Token(w, l) for w, l in s)) for s in corpus]
    vocabs = Vocabs.from_examples(exs)
    for ex in exs:
        enc = encode(ex, vocabs)
        assert decode_labels(enc.labels, vocabs.labels) == ex.labels
        assert [vocabs.words.item(i) for i in enc.words] == ex.words


@given(st.lists(sentences, min_size=1, max_size=5))
def test_format_parse_round_trip(corpus):
    exs = [SequenceExample(tuple(Token(w, l) for w, l in s)) for s in corpus]
    assert parse_conll(format_conll(exs)) == exs


def test_format_with_prediction_column():
    exs = parse_conll("a k O\nb k B-X\n")
    text = format_conll(exs, [["O", "O"]])
    assert text == "a k O O\nb k B-X O\n\n"
    assert parse_label_column(text) == [["O", "O"]]


def test_read_conll(tmp_path):
    p = tmp_path / "c.txt"
    p.write_text("a O\n\nb B-X\n", encoding="utf-8")
    assert [e.labels for e in read_conll(p)] == [["O"], ["B-X"]]


def test_split_label_notations():
    assert split_label("O") == ("O", None)
    assert split_label("B-loc") == ("B", "loc")
    assert split_label("I-loc") == ("I", "loc")
    assert split_label("loc-B") == ("B", "loc")
    assert split_label("fromloc.city-name") == ("I", "fromloc.city-name")


def test_extract_chunks_examples():
    assert set(extract_chunks(["B-X", "I-X", "O", "B-Y"])) == {("X", 0, 2), ("Y", 3, 4)}
    assert extract_chunks(["O", "O"]) == []
    assert extract_chunks(["I-X", "I-X"]) == [("X", 0, 2)]
    assert extract_chunks(["B-X", "B-X"]) == [("X", 0, 1), ("X", 1, 2)]
    assert extract_chunks(["B-X", "I-Y"]) == [("X", 0, 1), ("Y", 1, 2)]


def test_bare_labels_form_runs():
    assert extract_chunks(["city", "city", "O", "date"]) == [("city", 0, 2), ("date", 3, 4)]


@given(st.lists(st.sampled_from(["O", "B-X", "I-X", "B-Y", "I-Y", "Z"]), max_size=12))
def test_chunks_sorted_and_disjoint(seq):
    chunks = extract_chunks(seq)
    for (_, s0, e0), (_, s1, e1) in zip(chunks, chunks[1:]):
        assert s0 < e0 <= s1 < e1
    for _, s, e in chunks:
        assert 0 <= s < e <= len(seq)


@given(st.lists(st.sampled_from(["O", "B-X", "I-X", "B-Y", "I-Y"]), max_size=12))
def test_repair_bio_preserves_chunks_and_is_valid(seq):
    fixed = repair_bio(seq)
    assert extract_chunks(fixed) == extract_chunks(seq)
    prev = "O"
    for lab in fixed:
        if lab.startswith("I-"):
            assert prev[2:] == lab[2:] and prev != "O"
        prev = lab


def test_concepts():
    labs = ["O", "B-X", "I-X", "O", "O", "B-Y"]
    assert concepts(labs) == ["X", "Y"]
    assert concepts(labs, include_void=True) == ["O", "X", "O", "Y"]
