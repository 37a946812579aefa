import json

import pytest

from minihtml.dom import parse_html, visible_text
from minihtml.mhtml import (
    EmptyReportError,
    MhtmlConfig,
    MhtmlRecord,
    RejectReason,
    corpus_stats,
    fold_divs,
    has_qualifying_element,
    prune_nontextual,
    remove_forbidden,
    resimplify,
    simplify,
    simplify_bytes,
    strip_attributes,
)
from minihtml.tokenizer import WhitespaceTokenizer

CFG = MhtmlConfig()

LONG = (
    "This paragraph carries enough running text to clear the standard "
    "threshold for textual elements by a comfortable margin, word after word."
)
assert len(LONG) >= 128


def simplify_text(html, cfg=CFG, doc_id="d"):
    return simplify_bytes(html.encode("utf-8"), cfg, doc_id=doc_id)


def page(body, lang='lang="en"'):
    return f"<html {lang}><head><title>t</title></head><body>{body}</body></html>"


class TestLangGate:
    def test_french_rejected(self):
        result = simplify_text(page(f"<p>{LONG}</p>", lang='lang="fr"'))
        assert isinstance(result, RejectReason)
        assert result.code == "wrong_lang"

    def test_english_accepted(self):
        result = simplify_text(page(f"<p>{LONG}</p>"))
        assert isinstance(result, MhtmlRecord)

    def test_regional_variant_accepted(self):
        result = simplify_text(page(f"<p>{LONG}</p>", lang='lang="en-US"'))
        assert isinstance(result, MhtmlRecord)
        assert result.lang == "en-us"

    def test_missing_lang_rejected_by_default(self):
        result = simplify_text(f"<html><body><p>{LONG}</p></body></html>")
        assert isinstance(result, RejectReason)
        assert result.code == "wrong_lang"

    def test_missing_lang_accepted_when_configured(self):
        cfg = MhtmlConfig(accept_missing_lang=True)
        result = simplify_text(f"<html><body><p>{LONG}</p></body></html>", cfg)
        assert isinstance(result, MhtmlRecord)
        assert result.lang is None


class TestRemoveForbidden:
    def parse_body(self, html):
        return parse_html(html).root

    def test_form_subtree_removed(self):
        root = self.parse_body(f"<body><form><input name=q>x</form><p>{LONG}</p></body>")
        cleaned = remove_forbidden(root, CFG)
        assert "form" not in [n.tag for n in _all_elements(cleaned)]
        assert "p" in [n.tag for n in _all_elements(cleaned)]

    def test_copyright_class_removed(self):
        root = self.parse_body('<body><div class="site-copyright">c</div><p>x</p></body>')
        cleaned = remove_forbidden(root, CFG)
        assert "div" not in [n.tag for n in _all_elements(cleaned)]

    def test_copyright_id_case_insensitive(self):
        root = self.parse_body('<body><div id="PageFooter">c</div></body>')
        cleaned = remove_forbidden(root, CFG)
        assert "div" not in [n.tag for n in _all_elements(cleaned)]

    def test_comments_removed(self):
        root = self.parse_body("<body><!--gone--><p>x</p></body>")
        cleaned = remove_forbidden(root, CFG)
        assert all(n.kind != "comment" for n in _all_nodes(cleaned))

    def test_clean_tree_unchanged(self):
        root = self.parse_body(f"<body><div><p>{LONG}</p></div></body>")
        cleaned = remove_forbidden(root, CFG)
        assert cleaned == root

    def test_input_not_mutated(self):
        root = self.parse_body("<body><form>x</form></body>")
        before = [n.tag for n in _all_elements(root)]
        remove_forbidden(root, CFG)
        assert [n.tag for n in _all_elements(root)] == before


class TestPrune:
    def test_standard_threshold_boundary(self):
        text_128 = "x" * 128
        text_127 = "x" * 127
        kept = simplify_text(page(f"<p>{text_128}</p>"))
        assert isinstance(kept, MhtmlRecord)
        dropped = simplify_text(page(f"<p>{text_127}</p>"))
        assert isinstance(dropped, RejectReason)
        assert dropped.code == "empty_after_prune"

    def test_compact_threshold_boundary(self):
        text_64 = "y" * 64
        text_63 = "y" * 63
        kept = simplify_text(page(f"<ul><li>{text_64}</li></ul>"))
        assert isinstance(kept, MhtmlRecord)
        dropped = simplify_text(page(f"<ul><li>{text_63}</li></ul>"))
        assert isinstance(dropped, RejectReason)
        assert dropped.code == "empty_after_prune"

    def test_li_70_chars_retained(self):
        result = simplify_text(page(f"<ul><li>{'z' * 70}</li></ul>"))
        assert isinstance(result, MhtmlRecord)
        assert "<li>" in result.mhtml

    def test_short_sibling_removed(self):
        html = page(f"<p>{LONG}</p><p>short text</p>")
        result = simplify_text(html)
        assert isinstance(result, MhtmlRecord)
        assert result.mhtml.count("<p>") == 1

    def test_container_kept_via_descendant(self):
        root = parse_html(page(f"<div><section><p>{LONG}</p></section></div>")).root
        pruned = prune_nontextual(root, CFG)
        tags = [n.tag for n in _all_elements(pruned)]
        assert "section" in tags and "p" in tags

    def test_container_text_recomputed_after_child_pruning(self):
        # The paragraph's direct text is below threshold; the span child's
        # text would push it over but the span is pruned first.
        direct = "w" * 100
        inner = "v" * 40  # span: 40 < 64, no qualifying descendant
        root = parse_html(page(f"<p>{direct}<span>{inner}</span></p>")).root
        pruned = prune_nontextual(root, CFG)
        assert "p" not in [n.tag for n in _all_elements(pruned)]

    def test_whitespace_only_text_child_does_not_qualify_container(self):
        html = page(f"<div>\n  <p>{'x' * 100}</p>\n</div>")
        result = simplify_text(html)
        assert isinstance(result, RejectReason)
        assert result.code == "empty_after_prune"


class TestFoldDivs:
    def parse_div(self, html):
        root = parse_html(html).root
        return root.children[1].children[0]

    def test_nested_divs_merge_classes(self):
        div = self.parse_div('<body><div class="a"><div class="b"><p>t</p></div></div></body>')
        folded = fold_divs(div)
        assert folded.attr("class") == "a b"
        assert [c.tag for c in folded.children if c.kind == "element"] == ["p"]

    def test_outer_id_wins(self):
        div = self.parse_div('<body><div id="x"><div id="y"><p>t</p></div></div></body>')
        folded = fold_divs(div)
        assert folded.attr("id") == "x"

    def test_inner_id_used_when_outer_missing(self):
        div = self.parse_div('<body><div><div id="y"><p>t</p></div></div></body>')
        folded = fold_divs(div)
        assert folded.attr("id") == "y"

    def test_sibling_divs_unchanged(self):
        body = parse_html("<body><div>a</div><div>b</div></body>").root.children[1]
        folded = fold_divs(body)
        divs = [c for c in folded.children if c.kind == "element"]
        assert len(divs) == 2

    def test_chain_of_three_folds_to_one(self):
        div = self.parse_div(
            '<body><div class="a"><div class="b"><div class="c"><p>t</p></div></div></div></body>'
        )
        folded = fold_divs(div)
        assert folded.attr("class") == "a b c"
        assert [c.tag for c in folded.children if c.kind == "element"] == ["p"]

    def test_class_tokens_deduplicated(self):
        div = self.parse_div('<body><div class="a b"><div class="b c"><p>t</p></div></div></body>')
        folded = fold_divs(div)
        assert folded.attr("class") == "a b c"

    def test_whitespace_only_text_ignored(self):
        div = self.parse_div('<body><div class="a">\n  <div class="b"><p>t</p></div>\n</div></body>')
        folded = fold_divs(div)
        assert folded.attr("class") == "a b"

    def test_nonempty_text_blocks_fold(self):
        div = self.parse_div('<body><div class="a">words<div class="b"><p>t</p></div></div></body>')
        folded = fold_divs(div)
        assert folded.attr("class") == "a"


class TestStripAttributes:
    def test_only_class_and_id_survive(self):
        root = parse_html('<body><p style="c:red" class="x" data-k="v">t</p></body>').root
        stripped = strip_attributes(root)
        (p,) = [n for n in _all_elements(stripped) if n.tag == "p"]
        assert p.attrs == [("class", "x")]

    def test_id_only(self):
        root = parse_html('<body><a href="u" id="i">t</a></body>').root
        stripped = strip_attributes(root)
        (a,) = [n for n in _all_elements(stripped) if n.tag == "a"]
        assert a.attrs == [("id", "i")]

    def test_class_before_id(self):
        root = parse_html('<body><p id="i" class="c">t</p></body>').root
        stripped = strip_attributes(root)
        (p,) = [n for n in _all_elements(stripped) if n.tag == "p"]
        assert p.attrs == [("class", "c"), ("id", "i")]

    def test_no_attrs_unchanged(self):
        root = parse_html("<body><p>t</p></body>").root
        stripped = strip_attributes(root)
        (p,) = [n for n in _all_elements(stripped) if n.tag == "p"]
        assert p.attrs == []


class TestRatioGate:
    def test_ratio_above_threshold_kept(self):
        result = simplify_text(page(f"<p>{LONG * 3}</p>"))
        assert isinstance(result, MhtmlRecord)
        assert result.text_ratio > 0.46

    def test_ratio_at_exactly_0_46_rejected(self):
        # Skeleton <html><head></head><body><p>...</p></body></html> plus
        # text: choose text length so text/total == 0.46 exactly.
        # total = 48 + n  (wrapper chars), need n / (48 + n) == 0.46
        # n = 0.46 * 48 / 0.54 -> not integer; instead pad with an id
        # attribute to hit the boundary exactly.
        n = 138
        wrapper = len("<html><head></head><body><p></p></body></html>")
        total_needed = n / 0.46
        pad = total_needed - wrapper - n
        assert pad == int(pad)
        pad = int(pad)
        id_attr = "q" * (pad - len(' id=""'))
        html = f'<html lang="en"><body><p id="{id_attr}">{"x" * n}</p></body></html>'
        result = simplify_text(html)
        assert isinstance(result, RejectReason)
        assert result.code == "low_ratio"

    def test_low_ratio_rejected(self):
        # Big class attribute survives stripping and dilutes the ratio.
        noise = " ".join(f"cls{i}" for i in range(120))
        html = page(f'<p class="{noise}">{"x" * 130}</p>')
        result = simplify_text(html)
        assert isinstance(result, RejectReason)
        assert result.code == "low_ratio"


class TestSimplifyOutput:
    def test_output_invariants(self):
        html = page(
            f'<header>nav nav</header><div class="wrap"><div class="inner">'
            f'<p style="x" data-a="b">{LONG}</p></div></div>'
            f"<script>var x=1;</script><!--note--><form>f</form>"
        )
        result = simplify_text(html)
        assert isinstance(result, MhtmlRecord)
        reparsed = parse_html(result.mhtml).root
        tags = [n.tag for n in _all_elements(reparsed)]
        assert not set(tags) & CFG.forbidden_tags
        assert all(n.kind != "comment" for n in _all_nodes(reparsed))
        for node in _all_elements(reparsed):
            assert all(name in ("class", "id") for name, _ in node.attrs)
        assert has_qualifying_element(reparsed, CFG)

    def test_record_arithmetic(self):
        result = simplify_text(page(f"<p>{LONG}</p>"))
        assert isinstance(result, MhtmlRecord)
        assert result.mhtml_chars == len(result.mhtml)
        assert result.text_chars == len(visible_text(parse_html(result.mhtml).root))
        assert result.text_ratio == pytest.approx(result.text_chars / result.mhtml_chars)

    def test_idempotence(self):
        html = page(
            f'<div class="a"><div class="b"><p>{LONG}</p></div></div>'
            f"<ul><li>{'k' * 80}</li><li>tiny</li></ul>"
        )
        first = simplify_text(html)
        assert isinstance(first, MhtmlRecord)
        second = resimplify(first, CFG)
        assert isinstance(second, MhtmlRecord)
        assert second.mhtml == first.mhtml

    def test_determinism(self):
        html = page(f"<p>{LONG}</p>")
        a = simplify_text(html)
        b = simplify_text(html)
        assert a == b

    def test_oversized_reject(self):
        cfg = MhtmlConfig(max_doc_bytes=64)
        result = simplify_bytes(b"<p>" + b"x" * 200, cfg)
        assert isinstance(result, RejectReason)
        assert result.code == "oversized"

    def test_kept_ratio_arithmetic_from_spec(self):
        # 100 text chars in 200 mhtml chars -> ratio 0.5 > 0.46 keeps the doc.
        record = MhtmlRecord("d", None, "m", 1000, 200, 100, 0.5, "en")
        assert record.text_ratio > CFG.min_text_ratio


class TestStats:
    def test_mean_reduction_from_spec_example(self):
        record = MhtmlRecord("d", None, "m" * 60, 1000, 60, 40, 0.6, "en")
        report = corpus_stats([record], WhitespaceTokenizer(), budget=1024)
        assert report.mean_reduction == pytest.approx(0.94)

    def test_budget_boundary_inclusive(self):
        mhtml = "a b c"
        record = MhtmlRecord("d", None, mhtml, 100, len(mhtml), 5, 0.9, "en")
        tok = WhitespaceTokenizer()
        exact = len(tok.encode(mhtml))
        report = corpus_stats([record], tok, budget=exact)
        assert report.within_budget_fraction == 1.0
        report = corpus_stats([record], tok, budget=exact - 1)
        assert report.within_budget_fraction == 0.0

    def test_empty_stream_raises(self):
        with pytest.raises(EmptyReportError):
            corpus_stats([], WhitespaceTokenizer(), budget=10)

    def test_order_independent(self):
        records = [
            MhtmlRecord(f"d{i}", None, "m" * (i + 10), 100 * (i + 1), i + 10, 8, 0.5 + i / 100, "en")
            for i in range(5)
        ]
        tok = WhitespaceTokenizer()
        forward = corpus_stats(records, tok, budget=100)
        backward = corpus_stats(list(reversed(records)), tok, budget=100)
        assert forward == backward


class TestConfig:
    def test_invalid_ratio_rejected(self):
        with pytest.raises(ValueError):
            MhtmlConfig(min_text_ratio=1.5)

    def test_compact_above_standard_rejected(self):
        with pytest.raises(ValueError):
            MhtmlConfig(standard_threshold=64, compact_threshold=128)

    def test_from_file(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"standard_threshold": 100, "required_lang": "de"}))
        cfg = MhtmlConfig.from_file(path)
        assert cfg.standard_threshold == 100
        assert cfg.required_lang == "de"
        assert cfg.compact_threshold == 64

    def test_from_file_unknown_key(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"bogus": 1}))
        with pytest.raises(ValueError):
            MhtmlConfig.from_file(path)


def _all_nodes(root):
    stack = [root]
    while stack:
        node = stack.pop()
        yield node
        if node.kind == "element":
            stack.extend(node.children)


def _all_elements(root):
    return [n for n in _all_nodes(root) if n.kind == "element"]
