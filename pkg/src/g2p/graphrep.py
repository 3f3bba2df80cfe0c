"""Heterogeneous augmented-AST graphs for single C loops.

A loop is parsed into an AST whose operators are materialised as leaves,
then three edge families are laid over it: tree edges, statement-level
control flow edges between nodes the AST already has, and lexical edges
linking neighbouring leaves. Every forward family gets its reverse kind and
every node a self loop, so each node has at least one incoming edge.
"""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .cfront import (
    TYPE_KEYWORDS, CSyntaxError, LabelSet, SourceLoop, Token, loop_tokens,
)

NODE_KINDS = (
    "for_stmt", "init_clause", "cond_clause", "update_clause", "compound_stmt",
    "expr_stmt", "decl_stmt", "if_stmt", "while_stmt", "assign", "binop",
    "unop", "call", "subscript", "identifier", "constant", "operator_leaf",
)
EDGE_KINDS = (
    "ast_child", "ast_parent", "cfg_next", "cfg_prev", "lex_next", "lex_prev",
    "self_loop",
)
NODE_KIND_ID = {k: i for i, k in enumerate(NODE_KINDS)}
EDGE_KIND_ID = {k: i for i, k in enumerate(EDGE_KINDS)}
REVERSE_KIND = {"ast_child": "ast_parent", "cfg_next": "cfg_prev", "lex_next": "lex_prev"}

INTERIOR_ID = 0
UNK_ID = 1
INTERIOR_TOKEN = "<interior>"
UNK_TOKEN = "<unk>"
N_ORDER_BUCKETS = 9
LEAF_KINDS = frozenset({"identifier", "constant", "operator_leaf"})
STATEMENT_KINDS = frozenset({"expr_stmt", "decl_stmt", "if_stmt", "while_stmt", "for_stmt"})

ASSIGN_OPS = frozenset({"=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<=", ">>="})
BINARY_LEVELS = (
    ("||",), ("&&",), ("|",), ("^",), ("&",), ("==", "!="),
    ("<", ">", "<=", ">="), ("<<", ">>"), ("+", "-"), ("*", "/", "%"),
)
PREFIX_OPS = frozenset({"++", "--", "-", "+", "!", "~", "*", "&"})


@dataclass(eq=False)
class AstNode:
    kind: str
    text: str = ""
    children: list = field(default_factory=list)
    id: int = -1
    child_index: int = 0
    line: int = 0
    col: int = 0

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def walk(self):
        """Pre-order traversal."""
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    def leaves(self) -> list:
        return [n for n in self.walk() if n.is_leaf]

    def __repr__(self):
        if self.text:
            return f"{self.kind}({self.text!r})"
        return f"{self.kind}[{', '.join(map(repr, self.children))}]"


# --------------------------------------------------------------------------
# parser

class _Parser:
    def __init__(self, tokens: list[Token]):
        self.toks = tokens
        self.pos = 0

    def peek(self, k: int = 0) -> Optional[Token]:
        j = self.pos + k
        return self.toks[j] if j < len(self.toks) else None

    def at(self, text: str) -> bool:
        t = self.peek()
        return t is not None and t.text == text and t.kind in ("separator", "operator", "keyword")

    def error(self, msg: str):
        t = self.peek()
        if t is None:
            last = self.toks[-1] if self.toks else None
            raise CSyntaxError(f"{msg} at end of input", last.line if last else 0, last.col if last else 0)
        raise CSyntaxError(f"{msg}, found {t.text!r}", t.line, t.col)

    def take(self) -> Token:
        t = self.peek()
        if t is None:
            self.error("unexpected end of input")
        self.pos += 1
        return t

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.error(f"expected {text!r}")
        return self.take()

    def leaf(self, kind: str, tok: Token, text: Optional[str] = None) -> AstNode:
        return AstNode(kind, tok.text if text is None else text, line=tok.line, col=tok.col)

    def node(self, kind: str, children: list, tok: Token) -> AstNode:
        return AstNode(kind, "", children, line=tok.line, col=tok.col)

    # statements

    def statement(self) -> AstNode:
        t = self.peek()
        if t is None:
            self.error("expected statement")
        if t.kind == "separator" and t.text == "{":
            self.take()
            if self.at("}"):
                self.take()
                return AstNode("compound_stmt", "{}", line=t.line, col=t.col)
            body = []
            while not self.at("}"):
                if self.peek() is None:
                    self.error("expected '}'")
                body.append(self.statement())
            self.take()
            return self.node("compound_stmt", body, t)
        if t.kind == "separator" and t.text == ";":
            self.take()
            return AstNode("compound_stmt", ";", line=t.line, col=t.col)
        if t.kind == "keyword":
            if t.text == "for":
                return self.for_stmt()
            if t.text == "while":
                self.take()
                self.expect("(")
                cond = self.expression()
                self.expect(")")
                return self.node("while_stmt", [cond, self.statement()], t)
            if t.text == "if":
                self.take()
                self.expect("(")
                cond = self.expression()
                self.expect(")")
                kids = [cond, self.statement()]
                if self.at("else"):
                    self.take()
                    kids.append(self.statement())
                return self.node("if_stmt", kids, t)
            if t.text in TYPE_KEYWORDS:
                return self.declaration()
            if t.text in ("break", "continue"):
                self.take()
                semi = self.expect(";")
                return self.node("expr_stmt", [self.leaf("operator_leaf", t), self.leaf("operator_leaf", semi)], t)
            if t.text == "return":
                self.take()
                kids = [self.leaf("operator_leaf", t)]
                if not self.at(";"):
                    kids.append(self.expression())
                kids.append(self.leaf("operator_leaf", self.expect(";")))
                return self.node("expr_stmt", kids, t)
            self.error("unexpected keyword")
        expr = self.expression()
        semi = self.expect(";")
        return self.node("expr_stmt", [expr, self.leaf("operator_leaf", semi)], t)

    def for_stmt(self) -> AstNode:
        t = self.expect("for")
        open_ = self.expect("(")
        if self.peek() is not None and self.peek().kind == "keyword" and self.peek().text in TYPE_KEYWORDS:
            init = self.node("init_clause", [self.declaration()], open_)
        else:
            kids = self.expr_list(";")
            kids.append(self.leaf("operator_leaf", self.expect(";")))
            init = self.node("init_clause", kids, open_)
        ct = self.peek() or open_
        kids = [] if self.at(";") else [self.expression()]
        kids.append(self.leaf("operator_leaf", self.expect(";")))
        cond = self.node("cond_clause", kids, ct)
        ut = self.peek() or open_
        update = self.node("update_clause", self.expr_list(")"), ut)
        self.expect(")")
        body = self.statement()
        return self.node("for_stmt", [init, cond, update, body], t)

    def expr_list(self, stop: str) -> list:
        out = []
        if self.at(stop):
            return out
        out.append(self.assignment())
        while self.at(","):
            self.take()
            out.append(self.assignment())
        return out

    def declaration(self) -> AstNode:
        first = self.peek()
        kids = []
        while self.peek() is not None and self.peek().kind == "keyword" and self.peek().text in TYPE_KEYWORDS:
            kids.append(self.leaf("operator_leaf", self.take()))
        while True:
            kids.append(self.declarator())
            if self.at(","):
                self.take()
                continue
            break
        kids.append(self.leaf("operator_leaf", self.expect(";")))
        return self.node("decl_stmt", kids, first)

    def declarator(self) -> AstNode:
        t = self.peek()
        if self.at("*"):
            star = self.take()
            target = self.node("unop", [self.leaf("operator_leaf", star), self.declarator()], star)
        else:
            if t is None or t.kind != "identifier":
                self.error("expected declarator name")
            target = self.leaf("identifier", self.take())
            while self.at("["):
                br = self.take()
                idx = self.expression() if not self.at("]") else None
                self.expect("]")
                kids = [target] if idx is None else [target, idx]
                target = self.node("subscript", kids, br)
        if self.at("="):
            eq = self.take()
            rhs = self.assignment()
            return self.node("assign", [target, self.leaf("operator_leaf", eq), rhs], t)
        return target

    # expressions

    def expression(self) -> AstNode:
        return self.assignment()

    def assignment(self) -> AstNode:
        start = self.peek()
        lhs = self.binary(0)
        t = self.peek()
        if t is not None and t.kind == "operator" and t.text in ASSIGN_OPS:
            self.take()
            rhs = self.assignment()
            return self.node("assign", [lhs, self.leaf("operator_leaf", t), rhs], start)
        if t is not None and t.kind == "operator" and t.text in ("?", ":"):
            self.error("conditional expressions are not supported")
        return lhs

    def binary(self, level: int) -> AstNode:
        if level == len(BINARY_LEVELS):
            return self.unary()
        start = self.peek()
        lhs = self.binary(level + 1)
        ops = BINARY_LEVELS[level]
        while True:
            t = self.peek()
            if t is None or t.kind != "operator" or t.text not in ops:
                return lhs
            self.take()
            rhs = self.binary(level + 1)
            lhs = self.node("binop", [lhs, self.leaf("operator_leaf", t), rhs], start)

    def unary(self) -> AstNode:
        t = self.peek()
        if t is None:
            self.error("expected expression")
        if t.kind == "operator" and t.text in PREFIX_OPS:
            self.take()
            return self.node("unop", [self.leaf("operator_leaf", t), self.unary()], t)
        if t.text == "(" and t.kind == "separator":
            nxt = self.peek(1)
            if nxt is not None and nxt.kind == "keyword" and nxt.text in TYPE_KEYWORDS:
                self.take()
                types = []
                while self.peek() is not None and self.peek().kind == "keyword" and self.peek().text in TYPE_KEYWORDS:
                    types.append(self.take())
                while self.at("*"):
                    types.append(self.take())
                self.expect(")")
                text = " ".join(x.text for x in types)
                return self.node("unop", [self.leaf("operator_leaf", types[0], text), self.unary()], t)
        return self.postfix()

    def postfix(self) -> AstNode:
        start = self.peek()
        expr = self.primary()
        while True:
            t = self.peek()
            if t is None:
                return expr
            if t.kind == "separator" and t.text == "[":
                self.take()
                idx = self.expression()
                self.expect("]")
                expr = self.node("subscript", [expr, idx], start)
            elif t.kind == "separator" and t.text == "(":
                self.take()
                args = self.expr_list(")")
                self.expect(")")
                expr = self.node("call", [expr] + args, start)
            elif t.kind == "operator" and t.text in (".", "->"):
                self.take()
                name = self.peek()
                if name is None or name.kind != "identifier":
                    self.error("expected member name")
                self.take()
                expr = self.node("binop", [expr, self.leaf("operator_leaf", t), self.leaf("identifier", name)], start)
            elif t.kind == "operator" and t.text in ("++", "--"):
                self.take()
                expr = self.node("unop", [expr, self.leaf("operator_leaf", t)], start)
            else:
                return expr

    def primary(self) -> AstNode:
        t = self.peek()
        if t is None:
            self.error("expected expression")
        if t.kind == "identifier":
            self.take()
            return self.leaf("identifier", t)
        if t.kind in ("int_constant", "float_constant", "string_literal"):
            self.take()
            return self.leaf("constant", t)
        if t.kind == "separator" and t.text == "(":
            self.take()
            inner = self.expression()
            self.expect(")")
            return inner
        self.error("expected expression")


def number_nodes(root: AstNode) -> list[AstNode]:
    """Assign dense pre-order ids and sibling positions; return the node list."""
    nodes = []
    root.child_index = 0
    for node in root.walk():
        node.id = len(nodes)
        nodes.append(node)
        for k, child in enumerate(node.children):
            child.child_index = k
    return nodes


def parse_loop(tokens: list[Token]) -> AstNode:
    """Parse the tokens of exactly one for-statement into a numbered AST."""
    if not tokens:
        raise CSyntaxError("empty token list")
    p = _Parser(tokens)
    if not p.at("for"):
        p.error("expected 'for'")
    root = p.for_stmt()
    if p.peek() is not None:
        p.error("trailing tokens after loop")
    number_nodes(root)
    return root


def parse_loop_text(text: str) -> AstNode:
    return parse_loop(loop_tokens(text))


# --------------------------------------------------------------------------
# edge builders

def _calls_in(expr_roots: Iterable[AstNode]) -> list[AstNode]:
    """Call nodes inside expressions, not descending into statements."""
    out = []
    stack = list(reversed(list(expr_roots)))
    while stack:
        n = stack.pop()
        if n.kind in STATEMENT_KINDS or n.kind == "compound_stmt":
            continue
        if n.kind == "call":
            out.append(n)
        stack.extend(reversed(n.children))
    return out


class _CfgBuilder:
    def __init__(self):
        self.pairs = []

    def link(self, preds, node):
        for p in preds:
            self.pairs.append((p.id, node.id))

    def calls(self, owner, exprs):
        for c in _calls_in(exprs):
            self.pairs.append((owner.id, c.id))

    def loop(self, init, cond, update, body):
        self.calls(init, init.children)
        self.link([init], cond)
        self.calls(cond, cond.children)
        ctx = {"continue": update, "breaks": []}
        exits = self.stmt(body, [cond], ctx)
        self.link(exits, update)
        self.calls(update, update.children)
        self.link([update], cond)
        return ctx["breaks"]

    def stmt(self, s, preds, ctx):
        k = s.kind
        if k == "compound_stmt":
            for child in s.children:
                preds = self.stmt(child, preds, ctx)
            return preds
        self.link(preds, s)
        if k in ("expr_stmt", "decl_stmt"):
            self.calls(s, s.children)
            head = s.children[0]
            if head.kind == "operator_leaf" and head.text in ("break", "continue", "return"):
                if head.text == "break" and ctx is not None:
                    ctx["breaks"].append(s)
                elif head.text == "continue" and ctx is not None:
                    self.link([s], ctx["continue"])
                return []
            return [s]
        if k == "if_stmt":
            self.calls(s, s.children[:1])
            exits = self.stmt(s.children[1], [s], ctx)
            if len(s.children) > 2:
                exits = exits + self.stmt(s.children[2], [s], ctx)
            else:
                exits = exits + [s]
            return exits
        if k == "while_stmt":
            self.calls(s, s.children[:1])
            inner = {"continue": s, "breaks": []}
            body_exits = self.stmt(s.children[1], [s], inner)
            self.link(body_exits, s)
            return [s] + inner["breaks"]
        if k == "for_stmt":
            init, cond, update, body = s.children
            self.link([s], init)
            breaks = self.loop(init, cond, update, body)
            return [cond] + breaks
        raise ValueError(f"not a statement: {k}")


def build_cfg(ast: AstNode) -> list[tuple[int, int]]:
    """Statement-level control-flow pairs over the loop's own AST node ids."""
    init, cond, update, body = ast.children
    b = _CfgBuilder()
    b.loop(init, cond, update, body)
    seen, out = set(), []
    for pair in b.pairs:
        if pair not in seen:
            seen.add(pair)
            out.append(pair)
    return out


def build_lex_edges(ast: AstNode) -> list[tuple[int, int]]:
    leaves = ast.leaves()
    return [(a.id, b.id) for a, b in zip(leaves, leaves[1:])]


def lexical_tokens(tokens: list[Token]) -> list[str]:
    """Token texts that become AST leaves, in source order.

    Keywords that only introduce statements and bracket/comma punctuation
    have no leaf; an empty ``{}`` block is a single leaf.
    """
    out = []
    i = 0
    while i < len(tokens):
        t = tokens[i]
        if t.kind == "separator" and t.text == "{" and i + 1 < len(tokens) and tokens[i + 1].text == "}":
            out.append("{}")
            i += 2
            continue
        if t.kind == "keyword" and t.text in ("for", "while", "if", "else"):
            pass
        elif t.kind == "separator" and t.text != ";":
            pass
        else:
            out.append(t.text)
        i += 1
    return out


# --------------------------------------------------------------------------
# graph

@dataclass
class HeteroGraph:
    nodes: list
    edges: list  # (src, kind, dst)
    root: int = 0

    @property
    def node_type_set(self) -> set:
        return {n.kind for n in self.nodes}

    @property
    def edge_type_set(self) -> set:
        return {k for _, k, _ in self.edges}

    def edges_of(self, kind: str) -> list[tuple[int, int]]:
        return [(s, t) for s, k, t in self.edges if k == kind]


def assemble_graph(ast: AstNode, cfg_pairs, lex_pairs) -> HeteroGraph:
    nodes = number_nodes(ast) if ast.id < 0 else list(ast.walk())
    raw = []
    for n in nodes:
        for c in n.children:
            raw.append((n.id, "ast_child", c.id))
            raw.append((c.id, "ast_parent", n.id))
    for s, t in cfg_pairs:
        raw.append((s, "cfg_next", t))
        raw.append((t, "cfg_prev", s))
    for s, t in lex_pairs:
        raw.append((s, "lex_next", t))
        raw.append((t, "lex_prev", s))
    for n in nodes:
        raw.append((n.id, "self_loop", n.id))
    seen, edges = set(), []
    for e in raw:
        if e not in seen:
            seen.add(e)
            edges.append(e)
    return HeteroGraph(nodes, edges, ast.id)


def build_graph(loop_text: str) -> HeteroGraph:
    ast = parse_loop_text(loop_text)
    return assemble_graph(ast, build_cfg(ast), build_lex_edges(ast))


# --------------------------------------------------------------------------
# features

def build_vocab(corpus: Iterable[SourceLoop], min_freq: int = 2) -> dict:
    """Token vocabulary; ids 0 and 1 are reserved for interior nodes and UNK."""
    if min_freq < 1:
        raise ValueError("min_freq must be >= 1")
    counts = Counter()
    for loop in corpus:
        try:
            counts.update(t.text for t in loop_tokens(loop.text))
        except CSyntaxError:
            continue
    vocab = {INTERIOR_TOKEN: INTERIOR_ID, UNK_TOKEN: UNK_ID}
    ranked = sorted((tok for tok, c in counts.items() if c >= min_freq), key=lambda t: (-counts[t], t))
    for tok in ranked:
        if tok not in vocab:
            vocab[tok] = len(vocab)
    return vocab


@dataclass
class FeaturizedGraph:
    """Model-ready arrays for one loop graph."""
    id: str
    labels: LabelSet
    root: int
    node_kinds: np.ndarray  # int, index into NODE_KINDS
    token_ids: np.ndarray
    order_ids: np.ndarray
    edges: np.ndarray  # (E, 3) rows of src, edge-kind index, dst
    graph: Optional[HeteroGraph] = None

    @property
    def n_nodes(self) -> int:
        return len(self.node_kinds)

    def label(self, task: str) -> int:
        return int(self.labels.get(task))

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "labels": self.labels.as_dict(),
            "root": int(self.root),
            "nodes": [
                {"id": i, "kind": NODE_KINDS[k], "token_id": int(t), "order_id": int(o)}
                for i, (k, t, o) in enumerate(zip(self.node_kinds, self.token_ids, self.order_ids))
            ],
            "edges": [[int(s), EDGE_KINDS[k], int(d)] for s, k, d in self.edges],
        }

    @classmethod
    def from_json(cls, d: dict) -> "FeaturizedGraph":
        nodes = sorted(d["nodes"], key=lambda n: n["id"])
        edges = np.array([[s, EDGE_KIND_ID[k], t] for s, k, t in d["edges"]], dtype=np.int64).reshape(-1, 3)
        return cls(
            id=d["id"],
            labels=LabelSet.from_dict(d["labels"]),
            root=int(d["root"]),
            node_kinds=np.array([NODE_KIND_ID[n["kind"]] for n in nodes], dtype=np.int64),
            token_ids=np.array([n["token_id"] for n in nodes], dtype=np.int64),
            order_ids=np.array([n["order_id"] for n in nodes], dtype=np.int64),
            edges=edges,
        )


def encode_features(graph: HeteroGraph, vocab: dict, loop_id: str = "",
                    labels: Optional[LabelSet] = None) -> FeaturizedGraph:
    token_ids, order_ids = [], []
    for n in graph.nodes:
        if n.kind in LEAF_KINDS:
            token_ids.append(vocab.get(n.text, UNK_ID))
        elif n.is_leaf and n.text:
            # empty block / empty statement
            token_ids.append(vocab.get(n.text, UNK_ID))
        else:
            token_ids.append(INTERIOR_ID)
        order_ids.append(min(n.child_index, N_ORDER_BUCKETS - 1))
    edges = np.array([[s, EDGE_KIND_ID[k], t] for s, k, t in graph.edges], dtype=np.int64).reshape(-1, 3)
    return FeaturizedGraph(
        id=loop_id,
        labels=labels if labels is not None else LabelSet(),
        root=graph.root,
        node_kinds=np.array([NODE_KIND_ID[n.kind] for n in graph.nodes], dtype=np.int64),
        token_ids=np.array(token_ids, dtype=np.int64),
        order_ids=np.array(order_ids, dtype=np.int64),
        edges=edges,
        graph=graph,
    )


def featurize_loop(loop: SourceLoop, vocab: dict) -> FeaturizedGraph:
    return encode_features(build_graph(loop.text), vocab, loop.id, loop.labels)


def graph_to_jsonl_line(g: FeaturizedGraph) -> str:
    return json.dumps(g.to_json(), separators=(",", ":"), sort_keys=False)


def read_graphs(path) -> list[FeaturizedGraph]:
    with open(path, encoding="utf-8") as fh:
        return [FeaturizedGraph.from_json(json.loads(line)) for line in fh if line.strip()]


def write_graphs(graphs: Iterable[FeaturizedGraph], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for g in graphs:
            fh.write(graph_to_jsonl_line(g) + "\n")
