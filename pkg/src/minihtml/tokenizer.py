"""Lossless tokenizers used for token counting, size hints, and masking.

Two kinds ship: a whitespace tokenizer (default, no assets) and a merge-
table subword tokenizer loaded from vocab/merges files. Both are lossless:
``decode(encode(text)) == text`` for any input they accept, which the
masking pipeline relies on to cut documents at token boundaries.

The whitespace tokenizer attaches each word's preceding whitespace run to
the word itself, so ``"a b  c"`` encodes to three tokens whose
concatenation reproduces the input exactly.

Subword asset formats:
  * vocab file: one JSON object mapping token string -> integer id.
  * merges file: UTF-8 text, one merge per line, the two symbols
    separated by a single space; line order is merge priority.
Special tokens (the mask sentinel by default) are never split or merged
and must have vocab entries in the subword case.
"""

from __future__ import annotations

import json
import re
from pathlib import Path
from typing import Protocol, Sequence, Union

DEFAULT_MASK_TOKEN = "<mask>"

_WORD_WITH_PREFIX = re.compile(r"\s*\S+")


class TokenizerError(Exception):
    pass


class TokenizerConfigError(TokenizerError):
    """Bad or unloadable tokenizer assets."""


class DecodeError(TokenizerError):
    """An id outside the vocabulary was decoded."""


class Tokenizer(Protocol):
    def encode(self, text: str) -> list:
        ...

    def decode(self, ids: Sequence) -> str:
        ...


def _split_specials(text: str, specials: tuple[str, ...]) -> list[str]:
    """Split text into alternating plain/special pieces, keeping specials."""
    if not specials or not text:
        return [text] if text else []
    pattern = "|".join(re.escape(s) for s in sorted(specials, key=len, reverse=True))
    pieces = re.split(f"({pattern})", text)
    return [p for p in pieces if p]


def _word_pieces(text: str) -> list[str]:
    """Whitespace-attached word pieces whose concatenation equals text."""
    pieces = [m.group(0) for m in _WORD_WITH_PREFIX.finditer(text)]
    consumed = sum(len(p) for p in pieces)
    if consumed < len(text):
        tail = text[consumed:]
        if pieces:
            pieces[-1] += tail
        else:
            pieces = [tail]
    return pieces


class WhitespaceTokenizer:
    """Splits on whitespace runs; tokens are their own ids (strings)."""

    def __init__(self, special_tokens: Sequence[str] = (DEFAULT_MASK_TOKEN,)) -> None:
        self.special_tokens = tuple(special_tokens)

    def encode(self, text: str) -> list[str]:
        out: list[str] = []
        for piece in _split_specials(text, self.special_tokens):
            if piece in self.special_tokens:
                out.append(piece)
            else:
                out.extend(_word_pieces(piece))
        return out

    def decode(self, ids: Sequence[str]) -> str:
        for token in ids:
            if not isinstance(token, str):
                raise DecodeError(f"whitespace tokenizer ids are strings, got {token!r}")
        return "".join(ids)


class SubwordTokenizer:
    """Greedy pair-merge subword tokenizer over explicit vocab and merges."""

    def __init__(
        self,
        vocab: dict[str, int],
        merges: list[tuple[str, str]],
        special_tokens: Sequence[str] = (DEFAULT_MASK_TOKEN,),
    ) -> None:
        if not vocab:
            raise TokenizerConfigError("empty vocab")
        self.vocab = dict(vocab)
        self.merges = list(merges)
        self.special_tokens = tuple(special_tokens)
        self.ranks = {pair: i for i, pair in enumerate(self.merges)}
        self.id_to_token: dict[int, str] = {}
        for token, token_id in self.vocab.items():
            if token_id in self.id_to_token:
                raise TokenizerConfigError(f"duplicate id {token_id} in vocab")
            self.id_to_token[token_id] = token
        for special in self.special_tokens:
            if special not in self.vocab:
                raise TokenizerConfigError(f"special token {special!r} missing from vocab")
        self._word_cache: dict[str, tuple[str, ...]] = {}

    @staticmethod
    def from_files(
        vocab_path: Union[str, Path],
        merges_path: Union[str, Path],
        special_tokens: Sequence[str] = (DEFAULT_MASK_TOKEN,),
    ) -> "SubwordTokenizer":
        try:
            vocab_raw = json.loads(Path(vocab_path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise TokenizerConfigError(f"cannot load vocab {vocab_path}: {exc}") from exc
        if not isinstance(vocab_raw, dict):
            raise TokenizerConfigError(f"{vocab_path}: vocab must be a JSON object")
        vocab = {str(k): int(v) for k, v in vocab_raw.items()}

        merges: list[tuple[str, str]] = []
        try:
            lines = Path(merges_path).read_text(encoding="utf-8").splitlines()
        except OSError as exc:
            raise TokenizerConfigError(f"cannot load merges {merges_path}: {exc}") from exc
        for lineno, line in enumerate(lines, start=1):
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split(" ")
            if len(parts) != 2:
                raise TokenizerConfigError(
                    f"{merges_path}:{lineno}: expected two space-separated symbols"
                )
            merges.append((parts[0], parts[1]))
        return SubwordTokenizer(vocab, merges, special_tokens)

    def _merge_word(self, word: str) -> tuple[str, ...]:
        cached = self._word_cache.get(word)
        if cached is not None:
            return cached
        symbols = list(word)
        while len(symbols) > 1:
            best_rank = None
            best_index = -1
            for i in range(len(symbols) - 1):
                rank = self.ranks.get((symbols[i], symbols[i + 1]))
                if rank is not None and (best_rank is None or rank < best_rank):
                    best_rank = rank
                    best_index = i
            if best_rank is None:
                break
            symbols[best_index:best_index + 2] = [symbols[best_index] + symbols[best_index + 1]]
        result = tuple(symbols)
        if len(self._word_cache) < 65536:
            self._word_cache[word] = result
        return result

    def encode(self, text: str) -> list[int]:
        ids: list[int] = []
        for piece in _split_specials(text, self.special_tokens):
            if piece in self.special_tokens:
                ids.append(self.vocab[piece])
                continue
            for word in _word_pieces(piece):
                for symbol in self._merge_word(word):
                    try:
                        ids.append(self.vocab[symbol])
                    except KeyError:
                        raise TokenizerError(
                            f"symbol {symbol!r} not in vocab (out-of-alphabet input)"
                        ) from None
        return ids

    def decode(self, ids: Sequence[int]) -> str:
        parts = []
        for token_id in ids:
            try:
                parts.append(self.id_to_token[token_id])
            except KeyError:
                raise DecodeError(f"unknown token id {token_id}") from None
        return "".join(parts)


def load_tokenizer(
    kind: str = "whitespace",
    vocab_path: Union[str, Path, None] = None,
    merges_path: Union[str, Path, None] = None,
    special_tokens: Sequence[str] = (DEFAULT_MASK_TOKEN,),
) -> Tokenizer:
    if kind == "whitespace":
        return WhitespaceTokenizer(special_tokens)
    if kind == "subword" or kind == "bpe":
        if vocab_path is None or merges_path is None:
            raise TokenizerConfigError("subword tokenizer needs vocab and merges paths")
        return SubwordTokenizer.from_files(vocab_path, merges_path, special_tokens)
    raise TokenizerConfigError(f"unknown tokenizer kind {kind!r}")
