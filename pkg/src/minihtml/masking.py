"""Span-mask training examples with noisy size hints.

Documents are cut at token boundaries: non-overlapping spans (lengths
drawn from a zero-truncated Poisson) are replaced by a single sentinel
until the target fraction of tokens is covered. Most spans also receive a
size hint, an integer drawn around the true span length and rendered as
decimal digits glued to the sentinel (``<mask>12``), so a model can be
taught to respect rough length targets when infilling.

Every example reconstructs exactly: substituting each span's original
tokens back at its sentinel reproduces the target text.

Per-document RNG streams are derived by hashing (seed, doc_id), which
makes emission order- and parallelism-independent.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .corpus import read_records
from .tokenizer import DEFAULT_MASK_TOKEN, Tokenizer


class MaskingError(Exception):
    pass


class TooShortError(MaskingError):
    """Document has fewer than two tokens."""


@dataclass(frozen=True)
class MaskingConfig:
    poisson_lambda: float = 3.5
    mask_rate: float = 0.30
    hint_prob: float = 0.80
    epsilon: float = 0.10
    seed: int = 0
    mask_token: str = DEFAULT_MASK_TOKEN

    def __post_init__(self) -> None:
        if self.poisson_lambda <= 0:
            raise ValueError("poisson_lambda must be > 0")
        if not 0 < self.mask_rate < 1:
            raise ValueError("mask_rate must be in (0, 1)")
        if not 0 <= self.hint_prob <= 1:
            raise ValueError("hint_prob must be in [0, 1]")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if not self.mask_token:
            raise ValueError("mask_token must be non-empty")


@dataclass(frozen=True)
class SpanMask:
    start: int  # token index
    m: int      # true span length in tokens
    hint: Optional[int] = None

    def __post_init__(self) -> None:
        if self.m < 1:
            raise ValueError("span length must be >= 1")
        if self.hint is not None and self.hint < 1:
            raise ValueError("hint must be >= 1 when present")


@dataclass
class MaskedExample:
    doc_id: str
    source: str
    target: str
    spans: list[SpanMask] = field(default_factory=list)
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "source": self.source,
            "target": self.target,
            "spans": [{"start": s.start, "m": s.m, "hint": s.hint} for s in self.spans],
            "seed": self.seed,
        }

    @staticmethod
    def from_dict(data: dict) -> "MaskedExample":
        return MaskedExample(
            doc_id=data["doc_id"],
            source=data["source"],
            target=data["target"],
            spans=[SpanMask(s["start"], s["m"], s["hint"]) for s in data["spans"]],
            seed=data["seed"],
        )


def sample_span_length(rng: np.random.Generator, poisson_lambda: float) -> int:
    """Zero-truncated Poisson draw: zeros are rejected and redrawn."""
    if poisson_lambda <= 0:
        raise ValueError("poisson_lambda must be > 0")
    while True:
        value = int(rng.poisson(poisson_lambda))
        if value >= 1:
            return value


def sample_hint(rng: np.random.Generator, m: int, epsilon: float) -> int:
    """Noisy size hint: floor of a normal around the true length, min 1."""
    if m < 1:
        raise ValueError("m must be >= 1")
    drawn = rng.normal(m, m * epsilon)
    return max(1, math.floor(drawn))


def derive_doc_seed(seed: int, doc_id: str) -> int:
    digest = hashlib.sha256(f"{seed}:{doc_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def _legal_starts(masked: list[bool], length: int) -> list[int]:
    # A span may start at s when [s, s+length) plus a one-token buffer on
    # each side is unmasked (buffers clamp at document edges).
    n = len(masked)
    starts = []
    for s in range(0, n - length + 1):
        lo = max(0, s - 1)
        hi = min(n, s + length + 1)
        if not any(masked[lo:hi]):
            starts.append(s)
    return starts


def _max_placeable(masked: list[bool]) -> int:
    # Longest placeable span inside the largest free gap, honoring buffers.
    n = len(masked)
    best = 0
    run_start = None
    for i in range(n + 1):
        free = i < n and not masked[i]
        if free and run_start is None:
            run_start = i
        elif not free and run_start is not None:
            gap = i - run_start
            buffer = (1 if run_start > 0 else 0) + (1 if i < n else 0)
            best = max(best, gap - buffer)
            run_start = None
    return best


def mask_document(
    text: str,
    tokenizer: Tokenizer,
    cfg: MaskingConfig,
    rng: np.random.Generator,
    doc_id: str = "",
    seed: int = 0,
) -> MaskedExample:
    """Mask one document into a (source, target) training example.

    Spans are chosen until at least ``mask_rate`` of tokens are covered or
    no legal position remains; each span gets a hint with probability
    ``hint_prob``. No sentence shuffling or other reordering is applied.
    """
    if cfg.mask_token in text:
        raise MaskingError(
            f"document contains the mask sentinel {cfg.mask_token!r}; "
            "pick a different --mask-token"
        )
    tokens = tokenizer.encode(text)
    n = len(tokens)
    if n < 2:
        raise TooShortError(f"document has {n} token(s); need at least 2")

    masked = [False] * n
    covered = 0
    chosen: list[tuple[int, int]] = []
    while covered < cfg.mask_rate * n:
        length = sample_span_length(rng, cfg.poisson_lambda)
        cap = _max_placeable(masked)
        if cap < 1:
            break
        length = min(length, cap)
        starts = _legal_starts(masked, length)
        start = int(starts[rng.integers(0, len(starts))])
        chosen.append((start, length))
        for i in range(start, start + length):
            masked[i] = True
        covered += length

    spans: list[SpanMask] = []
    for start, length in chosen:
        hint = None
        if rng.random() < cfg.hint_prob:
            hint = sample_hint(rng, length, cfg.epsilon)
        spans.append(SpanMask(start=start, m=length, hint=hint))
    spans.sort(key=lambda s: s.start)

    parts: list[str] = []
    cursor = 0
    for span in spans:
        parts.append(tokenizer.decode(tokens[cursor:span.start]))
        parts.append(cfg.mask_token + (str(span.hint) if span.hint is not None else ""))
        cursor = span.start + span.m
    parts.append(tokenizer.decode(tokens[cursor:]))

    return MaskedExample(
        doc_id=doc_id,
        source="".join(parts),
        target=text,
        spans=spans,
        seed=seed,
    )


def reconstruct(example: MaskedExample, tokenizer: Tokenizer, mask_token: str = DEFAULT_MASK_TOKEN) -> str:
    """Substitute original span tokens back into the source.

    Exact inverse of :func:`mask_document`; used by round-trip checks.
    Spans are consumed left to right, matching their file order.
    """
    tokens = tokenizer.encode(example.target)
    source = example.source
    out: list[str] = []
    cursor = 0
    for index, span in enumerate(example.spans):
        rendered = mask_token + (str(span.hint) if span.hint is not None else "")
        position = source.find(mask_token, cursor)
        if position < 0 or source[position:position + len(rendered)] != rendered:
            raise MaskingError(f"sentinel {index} not found during reconstruction")
        out.append(source[cursor:position])
        out.append(tokenizer.decode(tokens[span.start:span.start + span.m]))
        cursor = position + len(rendered)
    out.append(source[cursor:])
    return "".join(out)


def _mask_one_payload(payload: tuple[str, str, MaskingConfig, Tokenizer]) -> Optional[dict]:
    doc_id, text, cfg, tokenizer = payload
    doc_seed = derive_doc_seed(cfg.seed, doc_id)
    rng = np.random.default_rng(doc_seed)
    try:
        example = mask_document(text, tokenizer, cfg, rng, doc_id=doc_id, seed=doc_seed)
    except TooShortError:
        return None
    return example.to_dict()


def emit_training_set(
    shards: Union[str, Path, Sequence[Union[str, Path]]],
    tokenizer: Tokenizer,
    cfg: MaskingConfig,
    out: Union[str, Path],
    workers: int = 1,
) -> int:
    """Write one masked-example JSONL row per shard record; returns count.

    ``shards`` is a shard directory (with manifest) or explicit shard
    paths. Output ordering and bytes are independent of ``workers``
    because every document gets its own derived RNG stream and rows are
    ordered by doc_id. Documents below two tokens are skipped.
    """
    if isinstance(shards, (str, Path)):
        records: Iterable = read_records(shards)
    else:
        from .corpus import read_records_from_paths

        records = read_records_from_paths(shards)

    docs = sorted(((r.doc_id, r.mhtml) for r in records), key=lambda pair: pair[0])
    if not docs:
        return 0
    payloads = [(doc_id, text, cfg, tokenizer) for doc_id, text in docs]

    if workers <= 1 or len(payloads) < 2:
        rows = [_mask_one_payload(p) for p in payloads]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunk = max(1, len(payloads) // (workers * 4))
            rows = list(pool.map(_mask_one_payload, payloads, chunksize=chunk))

    out_path = Path(out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    written = 0
    with open(out_path, "w", encoding="utf-8") as handle:
        for row in rows:
            if row is None:
                continue
            handle.write(json.dumps(row, ensure_ascii=False))
            handle.write("\n")
            written += 1
    return written


def zero_truncated_poisson_mean(poisson_lambda: float) -> float:
    """Closed-form mean of the zero-truncated Poisson distribution."""
    return poisson_lambda / (1.0 - math.exp(-poisson_lambda))
