import pytest
from hypothesis import given, settings, strategies as st

from g2p.cfront import (
    CSyntaxError,
    LabelSet,
    NotOmpPragma,
    SourceLoop,
    extract_loops,
    label_loop,
    parse_pragma,
    scan_loops,
    strip_comments,
    tokenize,
)
from loop_fixtures import COUNTER_NEST, FABS, TRIPLE_NEST


class TestStripComments:
    def test_line_comment(self):
        assert strip_comments("a; // x") == "a; "

    def test_block_comment(self):
        assert strip_comments("a;/*b*/c;") == "a; c;"

    def test_string_literal_untouched(self):
        s = 's = "/*not a comment*/";'
        assert strip_comments(s) == s

    def test_char_literal_untouched(self):
        s = "c = '/'; d = 1; // gone"
        assert strip_comments(s) == "c = '/'; d = 1; "

    def test_line_count_kept(self):
        src = "a; // one\nb; /* two\nthree */ c;\n"
        assert strip_comments(src).count("\n") == src.count("\n") - 1
        assert strip_comments("x; // c\ny;") == "x; \ny;"

    def test_unterminated_block_names_line(self):
        with pytest.raises(CSyntaxError) as exc:
            strip_comments("a;\nb; /* open\nc;")
        assert exc.value.line == 2


class TestTokenize:
    def test_empty(self):
        assert tokenize("") == []

    def test_hand_counted(self):
        toks = tokenize("for (i = 0; i < 10; i++) sum += a[i];")
        assert len(toks) == 20
        assert [t.text for t in toks[:3]] == ["for", "(", "i"]
        assert toks[0].kind == "keyword"

    def test_maximal_munch(self):
        assert [t.text for t in tokenize("x-->y")] == ["x", "--", ">", "y"]

    @pytest.mark.parametrize("op", ["++", "--", "+=", "-=", "*=", "/=", "==", "!=", "<=", ">=", "&&", "||", "->"])
    def test_multichar_operators(self, op):
        toks = tokenize(f"a {op} b")
        assert [t.text for t in toks] == ["a", op, "b"]
        assert toks[1].kind == "operator"

    def test_kinds_and_positions(self):
        toks = tokenize('x = 1.5e3;\ny = "s";')
        assert [(t.kind, t.line, t.col) for t in toks] == [
            ("identifier", 1, 1), ("operator", 1, 3), ("float_constant", 1, 5), ("separator", 1, 10),
            ("identifier", 2, 1), ("operator", 2, 3), ("string_literal", 2, 5), ("separator", 2, 8),
        ]

    def test_non_keyword_identifier(self):
        assert tokenize("switch")[0].kind == "identifier"

    def test_bad_byte(self):
        with pytest.raises(CSyntaxError) as exc:
            tokenize("a = 1;\n  b = @;")
        assert (exc.value.line, exc.value.col) == (2, 7)


_frag = st.sampled_from(["a", "b1", "_x", "for", "int", "0", "42", "3.5", "(", ")", "[", "]", "{", "}", ";", ",",
                         "+", "-", "++", "--", "+=", "<", "<=", "=", "==", "&&", "->", "!", "*", "/", "%"])


@settings(max_examples=200, deadline=None)
@given(st.lists(_frag, max_size=40))
def test_space_joined_tokens_retokenize_identically(frags):
    toks = tokenize(strip_comments(" ".join(frags)))
    again = tokenize(" ".join(t.text for t in toks))
    assert [(t.kind, t.text) for t in again] == [(t.kind, t.text) for t in toks]


@settings(max_examples=100, deadline=None)
@given(st.lists(_frag, max_size=40))
def test_tokens_strictly_ordered(frags):
    toks = tokenize("\n".join(" ".join(frags[i:i + 5]) for i in range(0, len(frags), 5)))
    pos = [(t.line, t.col) for t in toks]
    assert pos == sorted(set(pos))


class TestPragma:
    def test_parallel_for_reduction(self):
        p = parse_pragma("#pragma omp parallel for reduction(+:sum)")
        assert p.directive == "omp_parallel_for"
        assert len(p.clauses) == 1
        assert p.clauses[0].name == "reduction"
        assert p.clauses[0].args == (("+", "sum"),)

    def test_omp_for(self):
        p = parse_pragma("#pragma omp for")
        assert p.directive == "omp_for" and not p.clauses

    def test_not_omp(self):
        with pytest.raises(NotOmpPragma):
            parse_pragma("#pragma once")

    def test_normalised_raw_and_case(self):
        p = parse_pragma("  #  pragma   omp parallel for PRIVATE(i, j)")
        assert p.raw.startswith("#pragma omp")
        assert p.clauses[0].name == "private"
        assert [v for _, v in p.clauses[0].args] == ["i", "j"]

    def test_unknown_clause_kept(self):
        p = parse_pragma("#pragma omp parallel for frobnicate(3)")
        assert p.clauses[0].name == "unknown"
        assert "frobnicate" in p.clauses[0].args[0][1]

    def test_target_and_simd(self):
        assert parse_pragma("#pragma omp target teams distribute parallel for").directive == "omp_target"
        assert parse_pragma("#pragma omp simd").directive == "omp_simd"


class TestLabels:
    def _loop(self, pragma):
        return SourceLoop("x:0", "for(;;);", parse_pragma(pragma) if pragma else None)

    def test_no_pragma(self):
        assert label_loop(self._loop(None)) == LabelSet()

    def test_reduction(self):
        ls = label_loop(self._loop("#pragma omp parallel for reduction(+:s)"))
        assert ls == LabelSet(parallel=True, reduction=True)

    def test_simd(self):
        assert label_loop(self._loop("#pragma omp simd")) == LabelSet(parallel=True, simd=True)

    def test_private_and_target(self):
        ls = label_loop(self._loop("#pragma omp target teams distribute parallel for private(t)"))
        assert ls == LabelSet(parallel=True, private=True, target=True)

    def test_invariant_enforced(self):
        with pytest.raises(ValueError):
            LabelSet(reduction=True)

    def test_non_worksharing_is_not_parallel(self):
        assert label_loop(self._loop("#pragma omp barrier")) == LabelSet()


class TestExtract:
    def test_no_loops(self):
        assert extract_loops("int main(void) { return 0; }") == []

    def test_nested_single_record(self):
        loops = extract_loops("void f(void) {\n" + TRIPLE_NEST + "\n}\n")
        assert len(loops) == 1 and loops[0].is_nested

    def test_function_call_flag(self):
        (lp,) = extract_loops(FABS)
        assert lp.has_function_call and not lp.is_nested

    def test_pragma_attachment(self):
        src = ("int f() {\n#pragma omp parallel for reduction(+:sum)\n  for (i = 0; i < n; i++) sum += a[i];\n"
               "#pragma omp parallel for\n  x = 1;\n  for (j = 0; j < n; j++) b[j] = 0;\n}\n")
        first, second = extract_loops(src, "f.c")
        assert first.labels == LabelSet(parallel=True, reduction=True)
        assert second.pragma is None and second.labels == LabelSet()
        assert (first.id, second.id) == ("f.c:0", "f.c:1")

    def test_comments_removed_and_loc(self):
        src = "for (i = 0; i < n; i++) { // walk\n\n  a[i] = 0; /* zero */\n}\n"
        (lp,) = extract_loops(src)
        assert "walk" not in lp.text and "zero" not in lp.text
        assert lp.loc == 3

    def test_unbalanced_is_diagnosed(self):
        loops, diags = scan_loops("for (i = 0; i < n; i++) { a[i] = 0;\n", "bad.c")
        assert loops == [] and diags and diags[0].path == "bad.c"

    def test_spans_disjoint_in_order(self):
        src = "\n".join([FABS, COUNTER_NEST, "while (x) { y++; }", FABS])
        loops = extract_loops(src)
        assert len(loops) == 3
        assert [lp.line for lp in loops] == sorted(lp.line for lp in loops)
        assert loops[1].is_nested

    def test_json_round_trip(self):
        src = "#pragma omp parallel for private(t)\nfor (i = 0; i < n; i++) { t = a[i]; b[i] = t; }"
        (lp,) = extract_loops(src, "r.c")
        d = lp.to_json()
        assert set(d) == {"id", "text", "pragma_raw", "labels", "has_function_call", "is_nested", "loc"}
        back = SourceLoop.from_json(d)
        assert back.to_json() == d
