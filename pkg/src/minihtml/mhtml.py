"""Reduce parsed web pages to a minimal HTML form and gate what survives.

The transform keeps only markup that plausibly carries document-level
text: boilerplate elements are dropped, subtrees without a sufficiently
large textual element are pruned, nested single-child ``<div>`` chains are
folded, and all attributes except ``class``/``id`` are stripped. Documents
then pass a language gate up front and a text-to-markup ratio gate at the
end; each gate failure is reported as a typed :class:`RejectReason`.

All transforms are pure: they build new trees and never mutate inputs,
so documents can be simplified concurrently without coordination.
"""

from __future__ import annotations

import json
import statistics
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Optional, Union

from .dom import (
    DEFAULT_MAX_DOC_BYTES,
    DomDocument,
    DomNode,
    OversizedDocumentError,
    RAW_TEXT_ELEMENTS,
    _WS_RUN,
    parse_html,
    serialize_node,
    visible_text,
)
from .tokenizer import Tokenizer

DEFAULT_FORBIDDEN_TAGS = frozenset({
    "header", "footer", "form", "iframe", "script", "style", "noscript",
})

DEFAULT_COPYRIGHT_TOKENS = frozenset({"copyright", "footer", "header"})

DEFAULT_COMPACT_TAGS = frozenset({
    "ul", "ol", "li", "dl", "dt", "dd",
    "table", "thead", "tbody", "tr", "td", "th", "span",
})

_SKELETON_TAGS = frozenset({"html", "head", "body"})

REJECT_CODES = frozenset({
    "wrong_lang", "low_ratio", "empty_after_prune", "oversized", "parse_error",
})


class EmptyReportError(Exception):
    """Raised when statistics are requested over zero records."""


@dataclass(frozen=True)
class MhtmlConfig:
    """Thresholds and filters for the simplification pipeline."""

    standard_threshold: int = 128
    compact_threshold: int = 64
    min_text_ratio: float = 0.46
    required_lang: str = "en"
    forbidden_tags: frozenset[str] = DEFAULT_FORBIDDEN_TAGS
    copyright_tokens: frozenset[str] = DEFAULT_COPYRIGHT_TOKENS
    compact_tags: frozenset[str] = DEFAULT_COMPACT_TAGS
    max_doc_bytes: int = DEFAULT_MAX_DOC_BYTES
    accept_missing_lang: bool = False

    def __post_init__(self) -> None:
        if not 0 < self.min_text_ratio < 1:
            raise ValueError("min_text_ratio must be in (0, 1)")
        if self.standard_threshold <= 0 or self.compact_threshold <= 0:
            raise ValueError("thresholds must be positive")
        if self.compact_threshold > self.standard_threshold:
            raise ValueError("compact_threshold must not exceed standard_threshold")

    def threshold_for(self, tag: str) -> int:
        return self.compact_threshold if tag in self.compact_tags else self.standard_threshold

    @staticmethod
    def from_file(path: Union[str, Path]) -> "MhtmlConfig":
        """Load a config from a JSON key-value file; unknown keys rejected."""
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(data, dict):
            raise ValueError(f"{path}: config must be a JSON object")
        known = {f for f in MhtmlConfig.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"{path}: unknown config keys {sorted(unknown)}")
        for key in ("forbidden_tags", "copyright_tokens", "compact_tags"):
            if key in data:
                data[key] = frozenset(data[key])
        return MhtmlConfig(**data)


@dataclass
class MhtmlRecord:
    """An accepted simplified document plus size statistics."""

    doc_id: str
    url: Optional[str]
    mhtml: str
    raw_chars: int
    mhtml_chars: int
    text_chars: int
    text_ratio: float
    lang: Optional[str]

    @property
    def reduction(self) -> float:
        return 1.0 - self.mhtml_chars / self.raw_chars if self.raw_chars else 0.0

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "url": self.url,
            "mhtml": self.mhtml,
            "raw_chars": self.raw_chars,
            "mhtml_chars": self.mhtml_chars,
            "text_chars": self.text_chars,
            "text_ratio": self.text_ratio,
            "lang": self.lang,
        }

    @staticmethod
    def from_dict(data: dict) -> "MhtmlRecord":
        return MhtmlRecord(
            doc_id=data["doc_id"],
            url=data["url"],
            mhtml=data["mhtml"],
            raw_chars=data["raw_chars"],
            mhtml_chars=data["mhtml_chars"],
            text_chars=data["text_chars"],
            text_ratio=data["text_ratio"],
            lang=data["lang"],
        )


@dataclass(frozen=True)
class RejectReason:
    code: str
    detail: str = ""

    def __post_init__(self) -> None:
        if self.code not in REJECT_CODES:
            raise ValueError(f"unknown reject code: {self.code!r}")


def _clone_shallow(node: DomNode) -> DomNode:
    return DomNode(kind=node.kind, tag=node.tag, attrs=list(node.attrs), text=node.text)


def _has_copyright_marker(node: DomNode, tokens: frozenset[str]) -> bool:
    for name in ("class", "id"):
        value = node.attr(name)
        if not value:
            continue
        for word in value.split():
            lowered = word.lower()
            if any(tok in lowered for tok in tokens):
                return True
    return False


def remove_forbidden(root: DomNode, cfg: MhtmlConfig) -> DomNode:
    """Drop forbidden elements, copyright-marked elements, and comments."""

    def drop(node: DomNode) -> bool:
        if node.kind == "comment":
            return True
        if node.kind != "element" or node.tag in _SKELETON_TAGS:
            return False
        return node.tag in cfg.forbidden_tags or _has_copyright_marker(node, cfg.copyright_tokens)

    new_root = _clone_shallow(root)
    stack = [(root, new_root)]
    while stack:
        orig, copy = stack.pop()
        for child in orig.children:
            if drop(child):
                continue
            child_copy = _clone_shallow(child)
            copy.children.append(child_copy)
            if child.kind == "element":
                stack.append((child, child_copy))
    return new_root


def _collapsed_len(raw: str) -> int:
    return len(_WS_RUN.sub(" ", raw).strip())


def _qualifies(node: DomNode, vis_raw: str, cfg: MhtmlConfig) -> bool:
    if node.kind != "element" or node.tag in RAW_TEXT_ELEMENTS:
        return False
    has_direct_text = any(c.kind == "text" and c.text.strip() for c in node.children)
    if not has_direct_text:
        return False
    return _collapsed_len(vis_raw) >= cfg.threshold_for(node.tag)


def prune_nontextual(root: DomNode, cfg: MhtmlConfig) -> DomNode:
    """Remove every element whose subtree holds no qualifying textual element.

    Computed bottom-up, so a container's text measure reflects what its
    surviving descendants still contribute; applying the prune twice
    yields the same tree. The html/head/body skeleton is never removed.
    """
    # id(node) -> (copy-or-None, uncollapsed visible text of the kept subtree)
    results: dict[int, tuple[Optional[DomNode], str]] = {}
    stack: list[tuple[DomNode, bool]] = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if node.kind == "text":
            results[id(node)] = (_clone_shallow(node), node.text)
            continue
        if node.kind == "comment":
            results[id(node)] = (_clone_shallow(node), "")
            continue
        if not processed:
            stack.append((node, True))
            for child in reversed(node.children):
                stack.append((child, False))
            continue

        kept_children: list[DomNode] = []
        vis_parts: list[str] = []
        has_kept_element = False
        for child in node.children:
            child_copy, child_vis = results.pop(id(child))
            if child.kind == "text":
                kept_children.append(child_copy)  # type: ignore[arg-type]
                vis_parts.append(child_vis)
            elif child.kind == "comment":
                kept_children.append(child_copy)  # type: ignore[arg-type]
            elif child_copy is not None:
                kept_children.append(child_copy)
                has_kept_element = True
                if child.tag not in RAW_TEXT_ELEMENTS:
                    vis_parts.append(child_vis)

        vis_raw = "".join(vis_parts)
        keep = (
            node.tag in _SKELETON_TAGS
            or has_kept_element
            or _qualifies(node, vis_raw, cfg)
        )
        if keep:
            copy = _clone_shallow(node)
            copy.children = kept_children
            results[id(node)] = (copy, vis_raw)
        else:
            results[id(node)] = (None, "")

    new_root, _ = results[id(root)]
    assert new_root is not None  # skeleton root is always kept
    return new_root


def has_qualifying_element(root: DomNode, cfg: MhtmlConfig) -> bool:
    """True when some element meets its tag-class text threshold.

    Evaluated on the tree as given; usable both inside the pipeline and as
    an independent check over re-parsed output.
    """
    # Post-order pass computing uncollapsed visible text per element.
    vis: dict[int, str] = {}
    stack: list[tuple[DomNode, bool]] = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if node.kind == "text":
            vis[id(node)] = node.text
            continue
        if node.kind == "comment":
            vis[id(node)] = ""
            continue
        if not processed:
            stack.append((node, True))
            for child in reversed(node.children):
                stack.append((child, False))
            continue
        parts = []
        for child in node.children:
            child_vis = vis.pop(id(child))
            if child.kind == "element" and child.tag in RAW_TEXT_ELEMENTS:
                continue
            parts.append(child_vis)
        raw = "".join(parts)
        vis[id(node)] = raw
        if _qualifies(node, raw, cfg):
            return True
    return False


def _merge_div_attrs(outer: list[tuple[str, str]], inner: list[tuple[str, str]]) -> list[tuple[str, str]]:
    outer_map = dict(outer)
    inner_map = dict(inner)
    class_tokens: list[str] = []
    for value in (outer_map.get("class", ""), inner_map.get("class", "")):
        for token in value.split():
            if token not in class_tokens:
                class_tokens.append(token)
    merged: list[tuple[str, str]] = []
    saw_class = False
    for name, value in outer:
        if name == "class":
            merged.append(("class", " ".join(class_tokens)))
            saw_class = True
        else:
            merged.append((name, value))
    if not saw_class and class_tokens:
        merged.append(("class", " ".join(class_tokens)))
    if "id" not in outer_map and "id" in inner_map:
        merged.append(("id", inner_map["id"]))
    return merged


def _fold_at(div: DomNode) -> None:
    # Children are already folded; collapse this div onto a lone div child.
    while True:
        elements = [c for c in div.children if c.kind == "element"]
        blockers = [
            c for c in div.children
            if (c.kind == "text" and c.text.strip()) or c.kind == "comment"
        ]
        if len(elements) != 1 or elements[0].tag != "div" or blockers:
            return
        inner = elements[0]
        div.attrs = _merge_div_attrs(div.attrs, inner.attrs)
        div.children = inner.children


def fold_divs(root: DomNode) -> DomNode:
    """Fold nested single-child div chains into one div with merged attributes."""
    new_root = _clone_shallow(root)
    order: list[DomNode] = []
    stack = [(root, new_root)]
    while stack:
        orig, copy = stack.pop()
        order.append(copy)
        for child in orig.children:
            child_copy = _clone_shallow(child)
            copy.children.append(child_copy)
            if child.kind == "element":
                stack.append((child, child_copy))
    # Children were copied before parents were folded; fold leaf-first.
    for node in reversed(order):
        if node.kind == "element" and node.tag == "div":
            _fold_at(node)
    return new_root


def strip_attributes(root: DomNode) -> DomNode:
    """Keep only class and id attributes, in that order."""
    new_root = _clone_shallow(root)
    stack = [(root, new_root)]
    while stack:
        orig, copy = stack.pop()
        kept = []
        cls = orig.attr("class")
        if cls is not None:
            kept.append(("class", cls))
        ident = orig.attr("id")
        if ident is not None:
            kept.append(("id", ident))
        copy.attrs = kept
        copy.children = []
        for child in orig.children:
            child_copy = _clone_shallow(child)
            copy.children.append(child_copy)
            if child.kind == "element":
                stack.append((child, child_copy))
    return new_root


def _lang_gate(root: DomNode, cfg: MhtmlConfig) -> tuple[bool, Optional[str]]:
    raw = root.attr("lang")
    if raw is None or not raw.strip():
        return cfg.accept_missing_lang, None
    lang = raw.strip().lower()
    ok = lang == cfg.required_lang or lang.startswith(cfg.required_lang + "-")
    return ok, lang


def simplify(
    doc: DomDocument,
    cfg: MhtmlConfig,
    doc_id: str = "",
    url: Optional[str] = None,
) -> Union[MhtmlRecord, RejectReason]:
    """Run the full simplification pipeline over a parsed document.

    Gates run in order: language, forbidden-element removal, textual
    pruning, div folding, attribute stripping, serialization, ratio.
    """
    lang_ok, lang = _lang_gate(doc.root, cfg)
    if not lang_ok:
        detail = f"lang={lang!r}" if lang is not None else "lang attribute missing"
        return RejectReason("wrong_lang", detail)

    tree = remove_forbidden(doc.root, cfg)
    tree = prune_nontextual(tree, cfg)
    if not has_qualifying_element(tree, cfg):
        return RejectReason("empty_after_prune", "no qualifying textual element")
    tree = fold_divs(tree)
    tree = strip_attributes(tree)

    mhtml = serialize_node(tree)
    text_chars = len(visible_text(tree))
    ratio = text_chars / len(mhtml)
    if ratio <= cfg.min_text_ratio:
        return RejectReason("low_ratio", f"ratio={ratio:.4f}")

    return MhtmlRecord(
        doc_id=doc_id,
        url=url,
        mhtml=mhtml,
        raw_chars=doc.source_length,
        mhtml_chars=len(mhtml),
        text_chars=text_chars,
        text_ratio=ratio,
        lang=lang,
    )


def simplify_bytes(
    raw: bytes,
    cfg: MhtmlConfig,
    doc_id: str = "",
    url: Optional[str] = None,
) -> Union[MhtmlRecord, RejectReason]:
    """Parse raw bytes and simplify, mapping failures to reject reasons."""
    try:
        doc = parse_html(raw, max_bytes=cfg.max_doc_bytes)
    except OversizedDocumentError as exc:
        return RejectReason("oversized", str(exc))
    except Exception as exc:  # parsing is total by contract; belt and braces
        return RejectReason("parse_error", f"{type(exc).__name__}: {exc}")
    return simplify(doc, cfg, doc_id=doc_id, url=url)


def resimplify(record: MhtmlRecord, cfg: MhtmlConfig) -> Union[MhtmlRecord, RejectReason]:
    """Re-run simplify over an emitted record's own output.

    The simplified form no longer carries a lang attribute (only class/id
    survive stripping), so the language gate is relaxed to accept-missing
    for the second pass; everything else uses the given config.
    """
    second = replace(cfg, accept_missing_lang=True)
    return simplify_bytes(
        record.mhtml.encode("utf-8"), second, doc_id=record.doc_id, url=record.url
    )


@dataclass
class StatsReport:
    """Corpus-level summary over emitted records."""

    records: int
    mean_reduction: float
    median_reduction: float
    ratio_min: float
    ratio_mean: float
    ratio_median: float
    ratio_max: float
    token_budget: int
    within_budget_fraction: float

    def to_dict(self) -> dict:
        return {
            "records": self.records,
            "mean_reduction": self.mean_reduction,
            "median_reduction": self.median_reduction,
            "ratio_min": self.ratio_min,
            "ratio_mean": self.ratio_mean,
            "ratio_median": self.ratio_median,
            "ratio_max": self.ratio_max,
            "token_budget": self.token_budget,
            "within_budget_fraction": self.within_budget_fraction,
        }


def corpus_stats(
    records: Iterable[MhtmlRecord],
    tokenizer: Tokenizer,
    budget: int,
) -> StatsReport:
    """Summarize reductions, ratio distribution, and token-budget fit.

    Order-independent: the report depends only on the multiset of records.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    reductions: list[float] = []
    ratios: list[float] = []
    fitting = 0
    total = 0
    for record in records:
        total += 1
        reductions.append(record.reduction)
        ratios.append(record.text_ratio)
        if len(tokenizer.encode(record.mhtml)) <= budget:
            fitting += 1
    if total == 0:
        raise EmptyReportError("no records to summarize")
    return StatsReport(
        records=total,
        mean_reduction=statistics.fmean(reductions),
        median_reduction=statistics.median(reductions),
        ratio_min=min(ratios),
        ratio_mean=statistics.fmean(ratios),
        ratio_median=statistics.median(ratios),
        ratio_max=max(ratios),
        token_budget=budget,
        within_budget_fraction=fitting / total,
    )
