"""Front end for a restricted C subset.

Comment stripping, tokenization, outermost ``for`` loop extraction with
OpenMP pragma attachment, and loop labelling.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

KEYWORDS = frozenset({
    "for", "while", "if", "else", "int", "float", "double", "long", "char",
    "unsigned", "return", "break", "continue",
})
TYPE_KEYWORDS = frozenset({"int", "float", "double", "long", "char", "unsigned"})

# longest first so the scanner is greedy
OPERATORS = sorted([
    "<<=", ">>=", "...",
    "++", "--", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "==", "!=",
    "<=", ">=", "&&", "||", "->", "<<", ">>",
    "+", "-", "*", "/", "%", "=", "<", ">", "!", "~", "&", "|", "^", ".",
    "?", ":",
], key=len, reverse=True)
SEPARATORS = frozenset("()[]{};,")

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_NUMBER_RE = re.compile(
    r"""(?:
        0[xX][0-9a-fA-F]+[uUlL]*
      | (?:\d+\.\d*|\.\d+)(?:[eE][+-]?\d+)?[fFlL]?
      | \d+[eE][+-]?\d+[fFlL]?
      | \d+[uUlL]*
    )""",
    re.VERBOSE,
)
_STRING_RE = re.compile(r'"(?:[^"\\\n]|\\.)*"')
_CHAR_RE = re.compile(r"'(?:[^'\\\n]|\\.)+'")


class CSyntaxError(ValueError):
    """Lexical or syntactic error with a source position."""

    def __init__(self, message: str, line: int = 0, col: int = 0):
        self.line = line
        self.col = col
        where = f"{line}:{col}: " if line else ""
        super().__init__(where + message)


class NotOmpPragma(ValueError):
    pass


@dataclass(frozen=True)
class Token:
    kind: str  # identifier, keyword, int_constant, float_constant, string_literal, operator, separator
    text: str
    line: int
    col: int

    def __str__(self):
        return self.text


@dataclass(frozen=True)
class Clause:
    name: str
    args: tuple = ()  # of (operator or None, variable)


@dataclass(frozen=True)
class Pragma:
    raw: str
    directive: str  # omp_for, omp_parallel_for, omp_simd, omp_target, other_omp
    clauses: tuple = ()
    words: tuple = ()  # directive words, e.g. ("parallel", "for", "simd")

    def clause_names(self) -> set:
        return {c.name for c in self.clauses}


LABEL_NAMES = ("parallel", "private", "reduction", "simd", "target")


@dataclass(frozen=True)
class LabelSet:
    parallel: bool = False
    private: bool = False
    reduction: bool = False
    simd: bool = False
    target: bool = False

    def __post_init__(self):
        if (self.private or self.reduction or self.simd or self.target) and not self.parallel:
            raise ValueError("clause labels require parallel=True")

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in LABEL_NAMES}

    @classmethod
    def from_dict(cls, d: dict) -> "LabelSet":
        return cls(**{name: bool(d.get(name, False)) for name in LABEL_NAMES})

    def get(self, task: str) -> bool:
        return getattr(self, task)


@dataclass
class SourceLoop:
    id: str
    text: str
    pragma: Optional[Pragma] = None
    labels: LabelSet = field(default_factory=LabelSet)
    has_function_call: bool = False
    is_nested: bool = False
    loc: int = 1
    line: int = 0

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "text": self.text,
            "pragma_raw": self.pragma.raw if self.pragma else None,
            "labels": self.labels.as_dict(),
            "has_function_call": self.has_function_call,
            "is_nested": self.is_nested,
            "loc": self.loc,
        }

    @classmethod
    def from_json(cls, d: dict) -> "SourceLoop":
        pragma = parse_pragma(d["pragma_raw"]) if d.get("pragma_raw") else None
        return cls(
            id=d["id"],
            text=d["text"],
            pragma=pragma,
            labels=LabelSet.from_dict(d["labels"]),
            has_function_call=d["has_function_call"],
            is_nested=d["is_nested"],
            loc=d["loc"],
        )


@dataclass
class Diagnostic:
    path: str
    line: int
    message: str


# --------------------------------------------------------------------------
# comments and tokens

def strip_comments(source: str) -> str:
    """Replace each ``/* */`` comment with a single space and drop ``//`` comments.

    String and character literals are copied through untouched. The newline
    that ends a line comment is kept.
    """
    out = []
    i, n = 0, len(source)
    line = 1
    while i < n:
        c = source[i]
        if c == '"' or c == "'":
            j = i + 1
            while j < n and source[j] != c and source[j] != "\n":
                j += 2 if source[j] == "\\" else 1
            j = min(j + 1, n)
            out.append(source[i:j])
            line += source.count("\n", i, j)
            i = j
        elif source.startswith("/*", i):
            end = source.find("*/", i + 2)
            if end < 0:
                raise CSyntaxError(f"unterminated block comment opened on line {line}", line, 0)
            line += source.count("\n", i, end)
            out.append(" ")
            i = end + 2
        elif source.startswith("//", i):
            end = source.find("\n", i)
            i = n if end < 0 else end
        else:
            if c == "\n":
                line += 1
            out.append(c)
            i += 1
    return "".join(out)


def blank_directives(source: str) -> tuple[str, dict]:
    """Blank out preprocessor lines, keeping offsets and line numbers.

    Returns the blanked text and a map from 1-based line number to the
    directive text (continuation lines joined).
    """
    lines = source.split("\n")
    directives = {}
    i = 0
    while i < len(lines):
        if lines[i].lstrip().startswith("#"):
            start = i
            parts = [lines[i].rstrip()]
            while parts[-1].endswith("\\") and i + 1 < len(lines):
                parts[-1] = parts[-1][:-1]
                i += 1
                parts.append(lines[i].rstrip())
            directives[start + 1] = " ".join(p.strip() for p in parts)
            for k in range(start, i + 1):
                lines[k] = " " * len(lines[k])
        i += 1
    return "\n".join(lines), directives


def tokenize(source: str) -> list[Token]:
    """Greedy maximal-munch tokenizer. Comments must already be stripped."""
    tokens = []
    i, n = 0, len(source)
    line, line_start = 1, 0
    while i < n:
        c = source[i]
        if c == "\n":
            line += 1
            line_start = i + 1
            i += 1
            continue
        if c.isspace():
            i += 1
            continue
        col = i - line_start + 1
        if (c.isascii() and c.isalpha()) or c == "_":
            m = _IDENT_RE.match(source, i)
            text = m.group()
            tokens.append(Token("keyword" if text in KEYWORDS else "identifier", text, line, col))
            i = m.end()
            continue
        if c in "0123456789" or (c == "." and i + 1 < n and source[i + 1] in "0123456789"):
            m = _NUMBER_RE.match(source, i)
            text = m.group()
            if m.end() < n and (source[m.end()].isalnum() or source[m.end()] == "_"):
                raise CSyntaxError(f"malformed number {source[i:m.end() + 1]!r}", line, col)
            is_float = any(ch in text for ch in ".eE") and not text.lower().startswith("0x")
            tokens.append(Token("float_constant" if is_float else "int_constant", text, line, col))
            i = m.end()
            continue
        if c == '"':
            m = _STRING_RE.match(source, i)
            if not m:
                raise CSyntaxError("unterminated string literal", line, col)
            tokens.append(Token("string_literal", m.group(), line, col))
            i = m.end()
            continue
        if c == "'":
            m = _CHAR_RE.match(source, i)
            if not m:
                raise CSyntaxError("unterminated character constant", line, col)
            tokens.append(Token("int_constant", m.group(), line, col))
            i = m.end()
            continue
        if c in SEPARATORS:
            tokens.append(Token("separator", c, line, col))
            i += 1
            continue
        for op in OPERATORS:
            if source.startswith(op, i):
                tokens.append(Token("operator", op, line, col))
                i += len(op)
                break
        else:
            raise CSyntaxError(f"unrecognized character {c!r}", line, col)
    return tokens


# --------------------------------------------------------------------------
# pragmas

_DIRECTIVE_WORDS = frozenset({
    "parallel", "for", "simd", "target", "teams", "distribute", "declare",
    "task", "taskloop", "sections", "section", "single", "master", "critical",
    "atomic", "barrier", "ordered", "loop", "data", "enter", "exit", "update",
    "flush", "threadprivate", "taskwait", "masked",
})
KNOWN_CLAUSES = frozenset({
    "private", "firstprivate", "lastprivate", "shared", "reduction", "schedule",
    "collapse", "nowait", "ordered", "default", "num_threads", "if", "linear",
    "aligned", "safelen", "simdlen", "map", "device", "copyin", "copyprivate",
    "proc_bind", "dist_schedule", "num_teams", "thread_limit", "is_device_ptr",
    "depend", "nontemporal", "order",
})
REDUCTION_OPS = ("+", "*", "-", "&", "|", "^", "&&", "||", "min", "max")
_PRAGMA_HEAD = re.compile(r"^\s*#\s*pragma\s+omp\b(.*)$", re.IGNORECASE | re.DOTALL)


def _split_clauses(text: str) -> list[tuple[str, Optional[str]]]:
    """Split ``name(args) name2 ...`` into (name, args-or-None) pairs."""
    items = []
    i, n = 0, len(text)
    while i < n:
        if text[i].isspace() or text[i] == ",":
            i += 1
            continue
        m = _IDENT_RE.match(text, i)
        if not m:
            # stray punctuation: keep it verbatim
            j = i
            while j < n and not text[j].isspace():
                j += 1
            items.append((text[i:j], None))
            i = j
            continue
        name = m.group()
        i = m.end()
        while i < n and text[i] in " \t":
            i += 1
        args = None
        if i < n and text[i] == "(":
            depth, j = 0, i
            while j < n:
                if text[j] == "(":
                    depth += 1
                elif text[j] == ")":
                    depth -= 1
                    if depth == 0:
                        break
                j += 1
            args = text[i + 1:j]
            i = j + 1
        items.append((name, args))
    return items


def _split_args(args: str) -> list[str]:
    parts, depth, cur = [], 0, []
    for ch in args:
        if ch == "," and depth == 0:
            parts.append("".join(cur).strip())
            cur = []
            continue
        if ch in "([":
            depth += 1
        elif ch in ")]":
            depth -= 1
        cur.append(ch)
    if "".join(cur).strip():
        parts.append("".join(cur).strip())
    return parts


def _make_clause(name: str, args: Optional[str]) -> Clause:
    lname = name.lower()
    verbatim = name if args is None else f"{name}({args})"
    if lname not in KNOWN_CLAUSES:
        return Clause("unknown", ((None, verbatim),))
    if args is None:
        return Clause(lname, ())
    if lname == "reduction":
        op, sep, rest = args.partition(":")
        op = op.strip()
        variables = _split_args(rest) if sep else []
        if op not in REDUCTION_OPS or not variables:
            return Clause("unknown", ((None, verbatim),))
        return Clause(lname, tuple((op, v) for v in variables))
    return Clause(lname, tuple((None, a) for a in _split_args(args)))


def parse_pragma(raw: str) -> Pragma:
    """Parse a ``#pragma omp ...`` line into directive and clauses."""
    m = _PRAGMA_HEAD.match(raw)
    if not m:
        raise NotOmpPragma(raw.strip())
    body = " ".join(m.group(1).split())
    items = _split_clauses(body)
    words = []
    while items and items[0][1] is None and items[0][0].lower() in _DIRECTIVE_WORDS:
        word = items.pop(0)[0].lower()
        # "ordered" and "if"-like names after the first word are clauses
        if words and word == "ordered":
            items.insert(0, (word, None))
            break
        words.append(word)
    if not words:
        directive = "other_omp"
    elif words[0] == "target":
        directive = "omp_target"
    elif words[:2] == ["parallel", "for"]:
        directive = "omp_parallel_for"
    elif words[0] == "for":
        directive = "omp_for"
    elif words[0] == "simd":
        directive = "omp_simd"
    else:
        directive = "other_omp"
    clauses = tuple(_make_clause(name, args) for name, args in items)
    normalized = "#pragma omp" + (" " + body if body else "")
    return Pragma(normalized, directive, clauses, tuple(words))


def label_loop(loop: SourceLoop) -> LabelSet:
    """Derive the five task labels from the loop's pragma."""
    p = loop.pragma
    if p is None:
        return LabelSet()
    words = set(p.words)
    parallel = p.directive != "other_omp" or bool(words & {"for", "simd", "loop", "taskloop", "distribute"})
    if not parallel:
        return LabelSet()
    names = p.clause_names()
    return LabelSet(
        parallel=True,
        private="private" in names,
        reduction="reduction" in names,
        simd="simd" in words or "simd" in names or p.directive == "omp_simd",
        target="target" in words or p.directive == "omp_target",
    )


# --------------------------------------------------------------------------
# loop extraction

def _match(tokens: list[Token], i: int, open_: str, close: str) -> int:
    """Index of the token closing the bracket opened at ``tokens[i]``."""
    depth = 0
    for j in range(i, len(tokens)):
        t = tokens[j].text
        if tokens[j].kind != "separator":
            continue
        if t == open_:
            depth += 1
        elif t == close:
            depth -= 1
            if depth == 0:
                return j
    raise CSyntaxError(f"unbalanced {open_!r}", tokens[i].line, tokens[i].col)


def statement_end(tokens: list[Token], i: int) -> int:
    """Index of the last token of the statement starting at ``tokens[i]``."""
    if i >= len(tokens):
        raise CSyntaxError("unexpected end of input")
    t = tokens[i]
    if t.text == "{":
        return _match(tokens, i, "{", "}")
    if t.kind == "keyword" and t.text in ("for", "while", "if"):
        if i + 1 >= len(tokens) or tokens[i + 1].text != "(":
            raise CSyntaxError(f"expected '(' after {t.text}", t.line, t.col)
        close = _match(tokens, i + 1, "(", ")")
        end = statement_end(tokens, close + 1)
        if t.text == "if" and end + 1 < len(tokens) and tokens[end + 1].text == "else":
            end = statement_end(tokens, end + 2)
        return end
    depth = 0
    for j in range(i, len(tokens)):
        s = tokens[j]
        if s.kind != "separator":
            continue
        if s.text in "([{":
            depth += 1
        elif s.text in ")]}":
            depth -= 1
            if depth < 0:
                break
        elif s.text == ";" and depth == 0:
            return j
    raise CSyntaxError("statement is not terminated", t.line, t.col)


def _offset(source_lines_start: list[int], tok: Token) -> int:
    return source_lines_start[tok.line - 1] + tok.col - 1


def _count_loc(text: str) -> int:
    return sum(1 for ln in text.split("\n") if ln.strip() and not ln.lstrip().startswith("#"))


def scan_loops(source: str, path: str = "<input>") -> tuple[list[SourceLoop], list[Diagnostic]]:
    """Extract outermost for-loops; return the loops and skip diagnostics."""
    stripped = strip_comments(source)
    blanked, directives = blank_directives(stripped)
    tokens = tokenize(blanked)
    line_starts = [0]
    for k, ch in enumerate(blanked):
        if ch == "\n":
            line_starts.append(k + 1)
    raw_lines = blanked.split("\n")

    loops, diags = [], []
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if not (tok.kind == "keyword" and tok.text == "for"):
            i += 1
            continue
        try:
            end = statement_end(tokens, i)
        except CSyntaxError as exc:
            diags.append(Diagnostic(path, tok.line, f"loop skipped: {exc}"))
            i += 1
            continue
        start_off = _offset(line_starts, tok)
        last = tokens[end]
        end_off = _offset(line_starts, last) + len(last.text)
        text = stripped[start_off:end_off]
        inner = tokens[i + 1:end + 1]

        pragma = None
        prev_line = tokens[i - 1].line if i > 0 else 0
        cand = [ln for ln in directives if prev_line < ln < tok.line]
        if cand:
            pl = max(cand)
            between_blank = all(not raw_lines[k - 1].strip() for k in range(pl + 1, tok.line))
            before_for = not raw_lines[tok.line - 1][:tok.col - 1].strip()
            if between_blank and before_for:
                try:
                    pragma = parse_pragma(directives[pl])
                except NotOmpPragma:
                    pragma = None

        has_call = any(
            a.kind == "identifier" and b.text == "("
            for a, b in zip(inner, inner[1:])
        )
        nested = any(t.kind == "keyword" and t.text == "for" for t in inner)
        loop = SourceLoop(
            id=f"{path}:{len(loops)}",
            text=text,
            pragma=pragma,
            has_function_call=has_call,
            is_nested=nested,
            loc=max(1, _count_loc(text)),
            line=tok.line,
        )
        loop.labels = label_loop(loop)
        loops.append(loop)
        i = end + 1
    return loops, diags


def extract_loops(source: str, path: str = "<input>") -> list[SourceLoop]:
    """Outermost for-loops of ``source`` in file order."""
    return scan_loops(source, path)[0]


def loop_tokens(text: str) -> list[Token]:
    """Tokens of a loop's text with any embedded directive lines ignored."""
    return tokenize(blank_directives(text)[0])
