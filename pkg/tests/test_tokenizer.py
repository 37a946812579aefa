from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from minihtml.tokenizer import (
    DecodeError,
    SubwordTokenizer,
    TokenizerConfigError,
    TokenizerError,
    WhitespaceTokenizer,
    load_tokenizer,
)

FIXTURES = Path(__file__).parent / "fixtures" / "subword"


class TestWhitespace:
    def test_split_on_whitespace_runs(self):
        assert len(WhitespaceTokenizer().encode("a b  c")) == 3

    def test_empty_string(self):
        assert WhitespaceTokenizer().encode("") == []

    def test_round_trip_preserves_whitespace(self):
        tok = WhitespaceTokenizer()
        for text in ("a b  c", "  lead", "trail  ", "\t a \n b ", "   "):
            assert tok.decode(tok.encode(text)) == text

    def test_mask_sentinel_is_its_own_token(self):
        tok = WhitespaceTokenizer()
        tokens = tok.encode("x <mask>12 y")
        assert "<mask>" in tokens
        assert tok.decode(tokens) == "x <mask>12 y"

    def test_decode_rejects_non_strings(self):
        with pytest.raises(DecodeError):
            WhitespaceTokenizer().decode([1, 2])

    @settings(max_examples=300, deadline=None)
    @given(st.text(max_size=80))
    def test_lossless_on_arbitrary_text(self, text):
        tok = WhitespaceTokenizer()
        assert tok.decode(tok.encode(text)) == text

    @settings(max_examples=100, deadline=None)
    @given(st.text(alphabet="ab <>mask0123456789", max_size=60))
    def test_lossless_around_sentinel_lookalikes(self, text):
        tok = WhitespaceTokenizer()
        assert tok.decode(tok.encode(text)) == text


class TestSubword:
    @pytest.fixture()
    def tok(self):
        return SubwordTokenizer.from_files(FIXTURES / "vocab.json", FIXTURES / "merges.txt")

    def test_hand_traced_merge_application(self, tok):
        # "the": t+h -> th (rank 0), th+e -> the (rank 1)
        # " cat": a+t -> at (rank 2), c+at -> cat (rank 3); the leading
        # space stays its own symbol since no merge involves it.
        ids = tok.encode("the cat sat the mat")
        assert ids == [10, 0, 11, 0, 12, 0, 10, 0, 13]

    def test_partial_merge_stops_without_rule(self, tok):
        # "that": t+h -> th, a+t -> at, no (th, at) rule.
        assert tok.encode("that") == [8, 9]

    def test_rank_priority_beats_position(self, tok):
        # In "aat" the only ranked pair is (a, t) even though (a, a) comes first.
        assert tok.encode("aat") == [5, 9]

    def test_round_trip(self, tok):
        text = "the cat sat the mat"
        assert tok.decode(tok.encode(text)) == text

    def test_sentinel_never_merged(self, tok):
        ids = tok.encode("the<mask>the")
        assert ids == [10, 14, 10]
        assert tok.decode(ids) == "the<mask>the"

    def test_out_of_alphabet_symbol_raises(self, tok):
        with pytest.raises(TokenizerError):
            tok.encode("zzz")

    def test_unknown_id_raises(self, tok):
        with pytest.raises(DecodeError):
            tok.decode([999])

    def test_empty_sequence_decodes_to_empty(self, tok):
        assert tok.decode([]) == ""

    def test_counts_stable_across_instances(self):
        a = SubwordTokenizer.from_files(FIXTURES / "vocab.json", FIXTURES / "merges.txt")
        b = SubwordTokenizer.from_files(FIXTURES / "vocab.json", FIXTURES / "merges.txt")
        text = "the mat sat"
        assert a.encode(text) == b.encode(text)


class TestConfigErrors:
    def test_missing_vocab_file(self, tmp_path):
        with pytest.raises(TokenizerConfigError):
            SubwordTokenizer.from_files(tmp_path / "nope.json", FIXTURES / "merges.txt")

    def test_vocab_not_object(self, tmp_path):
        bad = tmp_path / "vocab.json"
        bad.write_text("[1, 2]")
        with pytest.raises(TokenizerConfigError):
            SubwordTokenizer.from_files(bad, FIXTURES / "merges.txt")

    def test_malformed_merges_line(self, tmp_path):
        bad = tmp_path / "merges.txt"
        bad.write_text("a b c\n")
        with pytest.raises(TokenizerConfigError):
            SubwordTokenizer.from_files(FIXTURES / "vocab.json", bad)

    def test_special_missing_from_vocab(self):
        with pytest.raises(TokenizerConfigError):
            SubwordTokenizer({"a": 0}, [])

    def test_duplicate_ids_rejected(self):
        with pytest.raises(TokenizerConfigError):
            SubwordTokenizer({"a": 0, "b": 0, "<mask>": 1}, [])

    def test_load_tokenizer_dispatch(self):
        assert isinstance(load_tokenizer("whitespace"), WhitespaceTokenizer)
        sub = load_tokenizer("bpe", FIXTURES / "vocab.json", FIXTURES / "merges.txt")
        assert isinstance(sub, SubwordTokenizer)
        with pytest.raises(TokenizerConfigError):
            load_tokenizer("bogus")
        with pytest.raises(TokenizerConfigError):
            load_tokenizer("bpe")
