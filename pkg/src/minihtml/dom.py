"""Parse tag-soup HTML into a small document tree and serialize it back.

The parser is built on the stdlib tokenizer (``html.parser``) with a
lightweight tree-construction layer: an ``<html>``/``<head>``/``<body>``
skeleton is always synthesized, misnested close tags are matched
best-effort, and a pragmatic subset of the standard auto-close rules is
applied (``<p>`` before block elements, ``<li>``/``<td>``/``<tr>``
siblings, and so on). Parsing never fails on byte content; the only error
is the document size cap.

Serialization is deterministic and round-trip stable: parsing the
serialized form of any parsed document yields an equal tree, so a second
serialization is byte-identical.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from html.parser import HTMLParser
from typing import Iterator, Optional

DEFAULT_MAX_DOC_BYTES = 8 * 1024 * 1024

VOID_ELEMENTS = frozenset({
    "area", "base", "br", "col", "embed", "hr", "img", "input", "link",
    "meta", "param", "source", "track", "wbr",
})

# Content kept verbatim: never entity-escaped, excluded from visible text.
RAW_TEXT_ELEMENTS = frozenset({"script", "style"})

# Elements routed into <head> while no body content has been seen.
_HEAD_ELEMENTS = frozenset({
    "title", "meta", "link", "base", "style", "script", "noscript",
})

_HEADINGS = frozenset({"h1", "h2", "h3", "h4", "h5", "h6"})

# Start tags that implicitly close an open <p>.
_P_CLOSERS = frozenset({
    "address", "article", "aside", "blockquote", "details", "dd", "div",
    "dl", "dt", "fieldset", "figcaption", "figure", "footer", "form",
    "header", "hr", "li", "main", "menu", "nav", "ol", "p", "pre",
    "section", "table", "ul",
}) | _HEADINGS

# tag -> (tags it closes when opened as a sibling, scope barriers).
_SIBLING_CLOSERS = {
    "li": ({"li"}, {"ul", "ol", "table", "td", "th"}),
    "dt": ({"dt", "dd"}, {"dl", "table", "td", "th"}),
    "dd": ({"dt", "dd"}, {"dl", "table", "td", "th"}),
    "tr": ({"tr", "td", "th"}, {"table"}),
    "td": ({"td", "th"}, {"tr", "table"}),
    "th": ({"td", "th"}, {"tr", "table"}),
    "thead": ({"thead", "tbody", "tfoot", "tr", "td", "th"}, {"table"}),
    "tbody": ({"thead", "tbody", "tfoot", "tr", "td", "th"}, {"table"}),
    "tfoot": ({"thead", "tbody", "tfoot", "tr", "td", "th"}, {"table"}),
    "option": ({"option"}, {"select"}),
    "optgroup": ({"optgroup", "option"}, {"select"}),
}

_P_SCOPE_BARRIERS = frozenset({"table", "td", "th", "caption"})

_WS_RUN = re.compile(r"\s+")


class DomError(Exception):
    """Base error for document parsing."""


class OversizedDocumentError(DomError):
    """Input exceeds the configured document size cap."""


@dataclass
class DomNode:
    """One node of the document tree.

    ``kind`` is one of ``element``, ``text``, ``comment``; element nodes
    carry ``tag``/``attrs``/``children``, the others carry ``text``.
    Attribute names are unique per element and already lowercased. Nodes
    are treated as immutable once a tree has been handed out; transforms
    build new trees instead of mutating.
    """

    kind: str
    tag: str = ""
    attrs: list[tuple[str, str]] = field(default_factory=list)
    children: list["DomNode"] = field(default_factory=list)
    text: str = ""

    @staticmethod
    def element(tag: str, attrs: Optional[list[tuple[str, str]]] = None) -> "DomNode":
        return DomNode(kind="element", tag=tag, attrs=list(attrs or []))

    @staticmethod
    def text_node(text: str) -> "DomNode":
        return DomNode(kind="text", text=text)

    @staticmethod
    def comment(text: str) -> "DomNode":
        return DomNode(kind="comment", text=text)

    def attr(self, name: str) -> Optional[str]:
        for key, value in self.attrs:
            if key == name:
                return value
        return None


@dataclass
class DomDocument:
    """A parsed document: the ``<html>`` root plus doctype and input size."""

    root: DomNode
    doctype: Optional[str] = None
    source_length: int = 0


def _dedup_attrs(attrs: list[tuple[str, Optional[str]]]) -> list[tuple[str, str]]:
    # First occurrence wins, bare attributes normalize to "".
    seen: set[str] = set()
    out: list[tuple[str, str]] = []
    for name, value in attrs:
        if name in seen:
            continue
        seen.add(name)
        out.append((name, value if value is not None else ""))
    return out


class _TreeBuilder(HTMLParser):
    def __init__(self) -> None:
        super().__init__(convert_charrefs=True)
        self.html = DomNode.element("html")
        self.head = DomNode.element("head")
        self.body = DomNode.element("body")
        self.html.children = [self.head, self.body]
        self.stack: list[DomNode] = []
        self.in_body = False
        self.doctype: Optional[str] = None

    # -- insertion helpers -------------------------------------------------

    def _parent(self) -> DomNode:
        if self.stack:
            return self.stack[-1]
        return self.body if self.in_body else self.head

    def _append(self, node: DomNode) -> None:
        parent = self._parent()
        if node.kind == "text" and parent.children and parent.children[-1].kind == "text":
            parent.children[-1].text += node.text
        else:
            parent.children.append(node)

    def _switch_to_body(self) -> None:
        if not self.in_body:
            self.stack.clear()
            self.in_body = True

    def _merge_attrs(self, node: DomNode, attrs: list[tuple[str, Optional[str]]]) -> None:
        existing = {name for name, _ in node.attrs}
        for name, value in _dedup_attrs(attrs):
            if name not in existing:
                node.attrs.append((name, value))
                existing.add(name)

    def _close_through(self, targets: set[str], barriers: frozenset[str] | set[str]) -> None:
        for i in range(len(self.stack) - 1, -1, -1):
            tag = self.stack[i].tag
            if tag in targets:
                del self.stack[i:]
                return
            if tag in barriers:
                return

    # -- tokenizer callbacks -----------------------------------------------

    def handle_starttag(self, tag: str, attrs: list[tuple[str, Optional[str]]]) -> None:
        if tag == "html":
            self._merge_attrs(self.html, attrs)
            return
        if tag == "head":
            self._merge_attrs(self.head, attrs)
            return
        if tag == "body":
            self._merge_attrs(self.body, attrs)
            self._switch_to_body()
            return
        if not self.in_body and not (tag in _HEAD_ELEMENTS and not self.stack):
            if not self.stack:
                self._switch_to_body()

        if tag in _P_CLOSERS:
            self._close_through({"p"}, _P_SCOPE_BARRIERS)
        sibling = _SIBLING_CLOSERS.get(tag)
        if sibling is not None:
            self._close_through(sibling[0], sibling[1])

        node = DomNode.element(tag, _dedup_attrs(attrs))
        self._append(node)
        if tag not in VOID_ELEMENTS:
            self.stack.append(node)

    def handle_endtag(self, tag: str) -> None:
        if tag in ("html", "body"):
            self.stack.clear()
            self.in_body = True
            return
        if tag == "head":
            self.stack.clear()
            return
        for i in range(len(self.stack) - 1, -1, -1):
            if self.stack[i].tag == tag:
                del self.stack[i:]
                return
        # Unmatched close tag: ignored.

    def handle_data(self, data: str) -> None:
        if not data:
            return
        if not self.in_body and not self.stack and data.strip():
            self._switch_to_body()
        self._append(DomNode.text_node(data))

    def handle_comment(self, data: str) -> None:
        self._append(DomNode.comment(data))

    def handle_decl(self, decl: str) -> None:
        if self.doctype is None and decl.lower().startswith("doctype"):
            self.doctype = decl[len("doctype"):].strip()

    def handle_pi(self, data: str) -> None:
        pass

    def unknown_decl(self, data: str) -> None:
        pass


def parse_html(raw: bytes | str, max_bytes: int = DEFAULT_MAX_DOC_BYTES) -> DomDocument:
    """Parse raw HTML into a :class:`DomDocument`.

    Accepts bytes (decoded as UTF-8 with replacement) or already-decoded
    text. Raises :class:`OversizedDocumentError` when the input exceeds
    ``max_bytes``; any other byte content parses successfully.
    """
    if isinstance(raw, bytes):
        source_length = len(raw)
        if source_length > max_bytes:
            raise OversizedDocumentError(
                f"document is {source_length} bytes, cap is {max_bytes}"
            )
        text = raw.decode("utf-8", errors="replace")
    else:
        source_length = len(raw.encode("utf-8", errors="replace"))
        if source_length > max_bytes:
            raise OversizedDocumentError(
                f"document is {source_length} bytes, cap is {max_bytes}"
            )
        text = raw

    builder = _TreeBuilder()
    builder.feed(text)
    builder.close()
    return DomDocument(root=builder.html, doctype=builder.doctype, source_length=source_length)


def _escape_text(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _escape_attr(value: str) -> str:
    return (
        value.replace("&", "&amp;")
        .replace('"', "&quot;")
        .replace("<", "&lt;")
        .replace(">", "&gt;")
    )


def serialize_node(node: DomNode) -> str:
    """Serialize a subtree to HTML text (deterministic, iterative)."""
    out: list[str] = []
    # Work stack holds (node, raw_text) pairs or literal close-tag strings.
    stack: list[object] = [(node, False)]
    while stack:
        item = stack.pop()
        if isinstance(item, str):
            out.append(item)
            continue
        current, raw = item  # type: ignore[misc]
        if current.kind == "text":
            out.append(current.text if raw else _escape_text(current.text))
            continue
        if current.kind == "comment":
            out.append(f"<!--{current.text}-->")
            continue
        attrs = "".join(f' {name}="{_escape_attr(value)}"' for name, value in current.attrs)
        out.append(f"<{current.tag}{attrs}>")
        if current.tag in VOID_ELEMENTS:
            continue
        stack.append(f"</{current.tag}>")
        child_raw = current.tag in RAW_TEXT_ELEMENTS
        for child in reversed(current.children):
            stack.append((child, child_raw))
    return "".join(out)


def serialize(doc: DomDocument) -> str:
    """Serialize a full document, including its doctype when present."""
    prefix = f"<!DOCTYPE {doc.doctype}>" if doc.doctype is not None else ""
    return prefix + serialize_node(doc.root)


def visible_text(node: DomNode) -> str:
    """Concatenated descendant text, script/style excluded, whitespace collapsed."""
    chunks: list[str] = []
    stack = [node]
    while stack:
        current = stack.pop()
        if current.kind == "text":
            chunks.append(current.text)
        elif current.kind == "element" and current.tag not in RAW_TEXT_ELEMENTS:
            stack.extend(reversed(current.children))
    return _WS_RUN.sub(" ", "".join(chunks)).strip()


def iter_nodes(root: DomNode) -> Iterator[DomNode]:
    """Pre-order iteration over a subtree (iterative, safe for deep trees)."""
    stack = [root]
    while stack:
        node = stack.pop()
        yield node
        if node.kind == "element":
            stack.extend(reversed(node.children))
