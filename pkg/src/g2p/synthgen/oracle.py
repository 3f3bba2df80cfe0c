"""Brute-force dependence checking for small restricted loops.

Iterations of a loop are executed concretely over a lazily initialised
memory while every scalar and array-element access is recorded. Two
questions can then be answered:

* :func:`dependence_oracle` looks for conflicting accesses between distinct
  iterations and classifies the loop as do-all, reduction or non-parallel.
* :func:`interleaving_check` runs two iterations under every statement-level
  interleaving and compares the final shared state with serial execution.

Both share the interpreter but not the conflict analysis.
"""
from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field
from typing import Optional

from ..cfront import CSyntaxError
from ..graphrep import AstNode, parse_loop_text

DEFAULT_TRIP_BOUND = 16
REDUCTION_CLASS = {"+=": "+", "-=": "+", "*=": "*", "&=": "&", "|=": "|", "^=": "^"}


class OracleUnsupported(Exception):
    """The loop uses a construct the oracle cannot model."""


@dataclass
class OracleVerdict:
    parallel: bool
    pattern: str  # do_all, reduction, none
    witness: Optional[tuple] = None  # (iter_a, iter_b, variable)
    reductions: dict = field(default_factory=dict)  # variable -> operator class
    private: tuple = ()


def _initial(addr) -> float:
    h = zlib.crc32(repr(addr).encode())
    return 1.25 + (h % 999983) / 7.0


def _addr_name(addr) -> str:
    if addr[0] == "s":
        return addr[1]
    return addr[1] + "".join(f"[{i}]" for i in addr[2])


def _ident(node: AstNode) -> Optional[str]:
    return node.text if node.kind == "identifier" else None


def _array_parts(node: AstNode):
    """``a[i][j]`` -> ("a", [i-expr, j-expr]); None if not a plain array access."""
    idx = []
    while node.kind == "subscript":
        if len(node.children) != 2:
            return None
        idx.append(node.children[1])
        node = node.children[0]
    if node.kind != "identifier":
        return None
    return node.text, list(reversed(idx))


def _mentions(node: AstNode, name: str) -> bool:
    return any(n.kind == "identifier" and n.text == name for n in node.walk())


def _flatten(node: AstNode, ops: tuple, sign: int = 1, out=None):
    """Operands of a left-nested chain of ``ops`` with their signs."""
    if out is None:
        out = []
    if node.kind == "binop" and node.children[1].text in ops:
        lhs, op, rhs = node.children
        _flatten(lhs, ops, sign, out)
        if op.text == "-":
            out.append((rhs, -sign))
        else:
            _flatten(rhs, ops, sign, out)
    else:
        out.append((node, sign))
    return out


def reduction_form(stmt: AstNode) -> Optional[tuple]:
    """(variable, operator class) if ``stmt`` is a scalar reduction update."""
    if stmt.kind != "expr_stmt" or len(stmt.children) != 2:
        return None
    e = stmt.children[0]
    if e.kind == "unop":
        a, b = e.children
        var, op = (_ident(a), b.text) if b.kind == "operator_leaf" else (_ident(b), a.text)
        if var and op in ("++", "--"):
            return var, "+"
        return None
    if e.kind != "assign":
        return None
    lhs, op, rhs = e.children
    var = _ident(lhs)
    if var is None:
        return None
    if op.text in REDUCTION_CLASS:
        return None if _mentions(rhs, var) else (var, REDUCTION_CLASS[op.text])
    if op.text != "=":
        return None
    for cls, ops in (("+", ("+", "-")), ("*", ("*",)), ("&", ("&",)), ("|", ("|",)), ("^", ("^",))):
        if not (rhs.kind == "binop" and rhs.children[1].text in ops):
            continue
        operands = _flatten(rhs, ops)
        direct = [(n, s) for n, s in operands if _ident(n) == var]
        others = [n for n, s in operands if _ident(n) != var]
        if len(direct) == 1 and direct[0][1] == 1 and not any(_mentions(n, var) for n in others):
            return var, cls
        return None
    return None


# --------------------------------------------------------------------------
# interpreter

def _c_div(a, b):
    if isinstance(a, int) and isinstance(b, int):
        if b == 0:
            return 0
        q = abs(a) // abs(b)
        return q if (a >= 0) == (b >= 0) else -q
    if b == 0:
        return 0.0
    return a / b


def _c_mod(a, b):
    if isinstance(a, int) and isinstance(b, int):
        return 0 if b == 0 else a - b * _c_div(a, b)
    return 0.0 if b == 0 else math.fmod(a, b)


def _safe(f):
    def g(*args):
        try:
            return f(*args)
        except (OverflowError, ValueError):
            return math.inf
    return g


MATH_FUNCS = {
    "fabs": _safe(lambda x: abs(float(x))),
    "abs": _safe(lambda x: abs(x)),
    "sqrt": _safe(lambda x: math.sqrt(abs(x))),
    "sin": _safe(lambda x: math.sin(x) if math.isfinite(x) else 0.0),
    "cos": _safe(lambda x: math.cos(x) if math.isfinite(x) else 0.0),
    "tanh": _safe(lambda x: math.tanh(x)),
    "exp": _safe(lambda x: math.exp(min(x, 700.0))),
    "log": _safe(lambda x: math.log(abs(x)) if x else 0.0),
    "floor": _safe(lambda x: float(math.floor(x))),
    "ceil": _safe(lambda x: float(math.ceil(x))),
    "fmax": _safe(lambda x, y: max(x, y)),
    "fmin": _safe(lambda x, y: min(x, y)),
}

_ARITH = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "/": _c_div,
    "%": _c_mod,
    "<": lambda a, b: int(a < b),
    ">": lambda a, b: int(a > b),
    "<=": lambda a, b: int(a <= b),
    ">=": lambda a, b: int(a >= b),
    "==": lambda a, b: int(a == b),
    "!=": lambda a, b: int(a != b),
    "&": lambda a, b: int(a) & int(b),
    "|": lambda a, b: int(a) | int(b),
    "^": lambda a, b: int(a) ^ int(b),
    "<<": lambda a, b: int(a) << max(0, min(int(b), 64)),
    ">>": lambda a, b: int(a) >> max(0, min(int(b), 64)),
}


class _Break(Exception):
    pass


class _Continue(Exception):
    pass


class LoopModel:
    """Static facts about a parsed loop needed to execute its iterations."""

    def __init__(self, text: str):
        try:
            self.root = parse_loop_text(text)
        except CSyntaxError as exc:
            raise OracleUnsupported(f"unparseable loop: {exc}") from exc
        init, cond, update, body = self.root.children
        self.counter = self._counter_of(init)
        if self.counter is None:
            raise OracleUnsupported("loop counter is not initialised by a simple assignment")
        self.counters = {self.counter}
        self.locals = set()
        self.written = set()
        self.red_forms = {}
        self._scan(body)
        for n in update.walk():
            if n.kind == "call":
                raise OracleUnsupported("call in loop update")

    @staticmethod
    def _counter_of(init: AstNode) -> Optional[str]:
        kids = [c for c in init.children if not (c.kind == "operator_leaf" and c.text == ";")]
        if len(kids) != 1:
            return None
        k = kids[0]
        if k.kind == "decl_stmt":
            decls = [c for c in k.children if c.kind == "assign"]
            if len(decls) != 1:
                return None
            k = decls[0]
        if k.kind == "assign" and k.children[1].text == "=":
            return _ident(k.children[0])
        return None

    def _scan(self, node: AstNode):
        for n in node.walk():
            k = n.kind
            if k == "decl_stmt":
                for c in n.children:
                    target = c.children[0] if c.kind == "assign" else c
                    if target.kind == "identifier":
                        self.locals.add(target.text)
                    elif c.kind != "operator_leaf":
                        raise OracleUnsupported("array or pointer declaration in loop body")
            elif k == "for_stmt" and n is not self.root:
                name = self._counter_of(n.children[0])
                if name is None:
                    raise OracleUnsupported("inner loop without a simple counter")
                self.counters.add(name)
            elif k == "assign":
                name = _ident(n.children[0])
                if name:
                    self.written.add(name)
            elif k == "unop":
                a, b = n.children
                target, op = (a, b.text) if b.kind == "operator_leaf" else (b, a.text)
                if op in ("++", "--") and _ident(target):
                    self.written.add(target.text)
                if op in ("*", "&") and a.kind == "operator_leaf":
                    raise OracleUnsupported("pointer operations")
            elif k == "binop" and n.children[1].text in (".", "->"):
                raise OracleUnsupported("member access")
            elif k == "call":
                fname = _ident(n.children[0])
                if fname not in MATH_FUNCS:
                    raise OracleUnsupported(f"call to unknown function {fname!r}")
            elif k == "constant" and n.text.startswith('"'):
                raise OracleUnsupported("string literal")
            elif k == "expr_stmt":
                self.red_forms[id(n)] = reduction_form(n)
                head = n.children[0]
                if head.kind == "operator_leaf" and head.text in ("break", "return"):
                    if self._outer_level(n):
                        raise OracleUnsupported(f"{head.text} leaves the parallel loop")

    def _outer_level(self, stmt: AstNode) -> bool:
        # True if no inner loop encloses ``stmt``
        def search(node, inside):
            if node is stmt:
                return not inside
            for c in node.children:
                r = search(c, inside or (node is not self.root and node.kind in ("for_stmt", "while_stmt")))
                if r is not None:
                    return r
            return None
        return bool(search(self.root, False))

    def check_affine(self, expr: AstNode) -> None:
        if self._degree(expr) > 1:
            raise OracleUnsupported("non-affine subscript")

    def _degree(self, e: AstNode) -> int:
        k = e.kind
        if k == "constant":
            return 0
        if k == "identifier":
            if e.text in self.counters:
                return 1
            if e.text in self.written or e.text in self.locals:
                raise OracleUnsupported(f"subscript uses loop-variant scalar {e.text!r}")
            return 0
        if k == "unop" and e.children[0].kind == "operator_leaf" and e.children[0].text in ("-", "+"):
            return self._degree(e.children[1])
        if k == "binop":
            lhs, op, rhs = e.children
            a, b = self._degree(lhs), self._degree(rhs)
            if op.text in ("+", "-"):
                return max(a, b)
            if op.text == "*":
                return a + b
            if op.text in ("/", "%") and a == 0 and b == 0:
                return 0
        raise OracleUnsupported("non-affine subscript")


class Executor:
    """Runs loop iterations statement by statement.

    Shared state lives in ``memory`` keyed by address; names in ``env`` are
    private to the iteration. Every shared access is passed to ``record``.
    ``run_iteration`` is a generator that yields after each statement that
    touched shared memory.
    """

    def __init__(self, model: LoopModel, memory: dict, env: dict, inner_bound: int, record=None):
        self.m = model
        self.memory = memory
        self.env = env
        self.inner_bound = inner_bound
        self.record = record
        self.red = None
        self.touched = False

    # memory

    def _load(self, addr):
        self.touched = True
        if self.record:
            self.record("r", addr, self._tag(addr))
        if addr not in self.memory:
            self.memory[addr] = _initial(addr)
        return self.memory[addr]

    def _store(self, addr, value):
        self.touched = True
        if self.record:
            self.record("w", addr, self._tag(addr))
        self.memory[addr] = value

    def _tag(self, addr):
        if self.red is not None and addr[0] == "s" and addr[1] == self.red[0]:
            return self.red[1]
        return None

    def read_var(self, name):
        if name in self.env:
            return self.env[name]
        return self._load(("s", name))

    def write_var(self, name, value):
        if name in self.env:
            self.env[name] = value
        else:
            self._store(("s", name), value)

    def array_addr(self, node):
        parts = _array_parts(node)
        if parts is None:
            raise OracleUnsupported("unsupported subscript base")
        name, idx = parts
        if name in self.env or name in self.m.locals:
            raise OracleUnsupported("subscripted local")
        values = []
        for e in idx:
            self.m.check_affine(e)
            v = self.eval(e)
            if not isinstance(v, int):
                v = int(v)
            values.append(v)
        return ("a", name, tuple(values))

    # expressions

    def eval(self, e: AstNode):
        k = e.kind
        if k == "constant":
            t = e.text
            if t.startswith("'"):
                return ord(t[1]) if len(t) == 3 else 0
            t = t.rstrip("uUlLfF") if not t.lower().startswith("0x") else t.rstrip("uUlL")
            if t.lower().startswith("0x"):
                return int(t, 16)
            if any(c in t for c in ".eE"):
                return float(t)
            return int(t, 8) if len(t) > 1 and t.startswith("0") else int(t)
        if k == "identifier":
            return self.read_var(e.text)
        if k == "subscript":
            return self._load(self.array_addr(e))
        if k == "assign":
            return self.assign(e)
        if k == "binop":
            lhs, op, rhs = e.children
            o = op.text
            if o == "&&":
                return int(bool(self.eval(lhs)) and bool(self.eval(rhs)))
            if o == "||":
                return int(bool(self.eval(lhs)) or bool(self.eval(rhs)))
            if o not in _ARITH:
                raise OracleUnsupported(f"operator {o!r}")
            a, b = self.eval(lhs), self.eval(rhs)
            try:
                return _ARITH[o](a, b)
            except (OverflowError, ValueError):
                return math.inf
        if k == "unop":
            a, b = e.children
            if b.kind == "operator_leaf" and b.text in ("++", "--"):
                old = self.eval(a)
                self._put(a, old + (1 if b.text == "++" else -1))
                return old
            op = a.text
            if op in ("++", "--"):
                new = self.eval(b) + (1 if op == "++" else -1)
                self._put(b, new)
                return new
            v = self.eval(b)
            if op == "-":
                return -v
            if op == "+":
                return v
            if op == "!":
                return int(not v)
            if op == "~":
                return ~int(v)
            if op in ("int", "long", "char", "unsigned", "unsigned int", "long long"):
                return int(v) if math.isfinite(v) else 0
            if op in ("double", "float"):
                return float(v)
            raise OracleUnsupported(f"unary {op!r}")
        if k == "call":
            fname = e.children[0].text
            args = [self.eval(a) for a in e.children[1:]]
            try:
                return MATH_FUNCS[fname](*args)
            except TypeError as exc:
                raise OracleUnsupported(f"bad call to {fname}") from exc
        raise OracleUnsupported(f"expression {k}")

    def _put(self, target: AstNode, value):
        if target.kind == "identifier":
            self.write_var(target.text, value)
        elif target.kind == "subscript":
            self._store(self.array_addr(target), value)
        else:
            raise OracleUnsupported("unsupported assignment target")

    def assign(self, e: AstNode):
        lhs, op, rhs = e.children
        if op.text == "=":
            if lhs.kind == "subscript":
                addr = self.array_addr(lhs)
                value = self.eval(rhs)
                self._store(addr, value)
                return value
            value = self.eval(rhs)
            self._put(lhs, value)
            return value
        binop = op.text[:-1]
        if lhs.kind == "subscript":
            addr = self.array_addr(lhs)
            old = self._load(addr)
            value = _ARITH[binop](old, self.eval(rhs))
            self._store(addr, value)
            return value
        old = self.eval(lhs)
        try:
            value = _ARITH[binop](old, self.eval(rhs))
        except (OverflowError, ValueError):
            value = math.inf
        self._put(lhs, value)
        return value

    # statements

    def _step(self):
        hit = self.touched
        self.touched = False
        return hit

    def run_iteration(self, body: AstNode):
        try:
            yield from self.stmt(body)
        except _Continue:
            pass

    def stmt(self, s: AstNode):
        k = s.kind
        if k == "compound_stmt":
            for c in s.children:
                yield from self.stmt(c)
            return
        if k == "expr_stmt":
            head = s.children[0]
            if head.kind == "operator_leaf":
                if head.text == "continue":
                    raise _Continue()
                if head.text == "break":
                    raise _Break()
                raise OracleUnsupported(f"{head.text} statement")
            self.red = self.m.red_forms.get(id(s))
            try:
                self.eval(head)
            finally:
                self.red = None
            if self._step():
                yield
            return
        if k == "decl_stmt":
            for c in s.children:
                if c.kind == "assign":
                    self.env[c.children[0].text] = self.eval(c.children[2])
                elif c.kind == "identifier":
                    self.env[c.text] = 0
            if self._step():
                yield
            return
        if k == "if_stmt":
            taken = self.eval(s.children[0])
            if self._step():
                yield
            if taken:
                yield from self.stmt(s.children[1])
            elif len(s.children) > 2:
                yield from self.stmt(s.children[2])
            return
        if k == "while_stmt":
            for _ in range(self.inner_bound):
                go = self.eval(s.children[0])
                if self._step():
                    yield
                if not go:
                    return
                try:
                    yield from self.stmt(s.children[1])
                except _Continue:
                    continue
                except _Break:
                    return
            return
        if k == "for_stmt":
            init, cond, update, body = s.children
            self._clause(init)
            if self._step():
                yield
            for _ in range(self.inner_bound):
                go = self._cond(cond)
                if self._step():
                    yield
                if not go:
                    return
                try:
                    yield from self.stmt(body)
                except _Continue:
                    pass
                except _Break:
                    return
                self._clause(update)
                if self._step():
                    yield
            return
        raise OracleUnsupported(f"statement {k}")

    def _clause(self, clause: AstNode):
        for c in clause.children:
            if c.kind == "operator_leaf":
                continue
            if c.kind == "decl_stmt":
                for d in c.children:
                    if d.kind == "assign":
                        self.env[d.children[0].text] = self.eval(d.children[2])
                continue
            self.eval(c)

    def _cond(self, cond: AstNode):
        kids = [c for c in cond.children if c.kind != "operator_leaf"]
        return True if not kids else bool(self.eval(kids[0]))


def _outer_iterations(model: LoopModel, trip_bound: int) -> list:
    """Counter values of the first ``trip_bound`` iterations of the loop."""
    init, cond, update, _ = model.root.children
    env = {}
    ex = Executor(model, {}, env, 0)
    ex._clause(init)
    if model.counter not in env:
        env[model.counter] = ex.memory.pop(("s", model.counter))
    kids = [c for c in cond.children if c.kind != "operator_leaf"]
    evaluable = bool(kids) and all(
        n.kind != "identifier" or n.text == model.counter for n in kids[0].walk()
    ) and not any(n.kind in ("subscript", "call") for n in kids[0].walk())
    values = []
    seen = set()
    while len(values) < trip_bound:
        if evaluable and not ex.eval(kids[0]):
            break
        v = env[model.counter]
        if v in seen:
            raise OracleUnsupported("loop counter does not advance")
        seen.add(v)
        values.append(v)
        ex._clause(update)
    return values


def run_trace(model: LoopModel, trip_bound: int, inner_bound: Optional[int] = None):
    """Execute the first iterations serially; return per-iteration access lists."""
    inner_bound = trip_bound if inner_bound is None else inner_bound
    memory = {}
    traces = []
    for value in _outer_iterations(model, trip_bound):
        acc = []
        env = {model.counter: value}
        ex = Executor(model, memory, env, inner_bound,
                      record=lambda kind, addr, tag, acc=acc: acc.append((kind, addr, tag)))
        for _ in ex.run_iteration(model.root.children[3]):
            pass
        traces.append(acc)
    return traces, memory


def dependence_oracle(loop_text: str, trip_bound: int = DEFAULT_TRIP_BOUND) -> OracleVerdict:
    """Decide whether a loop's iterations can run in parallel.

    A scalar whose first access in every iteration is a write is treated
    as private. A cross-iteration conflict is tolerated only on scalars
    that are touched exclusively by reduction updates of one operator class.
    """
    if trip_bound < 2:
        raise ValueError("trip_bound must be >= 2")
    model = LoopModel(loop_text)
    traces, _ = run_trace(model, trip_bound)

    first_kind = {}
    for k, acc in enumerate(traces):
        seen = set()
        for kind, addr, _ in acc:
            if addr[0] == "s" and addr not in seen:
                seen.add(addr)
                first_kind.setdefault(addr, set()).add(kind)
    private = {a for a, kinds in first_kind.items() if kinds == {"w"}}

    by_addr = {}
    order = []
    for k, acc in enumerate(traces):
        for kind, addr, tag in acc:
            if addr in private:
                continue
            if addr not in by_addr:
                by_addr[addr] = []
                order.append(addr)
            by_addr[addr].append((k, kind, tag))

    fatal, reductions = [], {}
    for addr in order:
        events = by_addr[addr]
        iters = {k for k, _, _ in events}
        if len(iters) < 2 or not any(kind == "w" for _, kind, _ in events):
            continue
        tags = {tag for _, _, tag in events}
        if addr[0] == "s" and len(tags) == 1 and None not in tags:
            reductions[addr[1]] = tags.pop()
        else:
            fatal.append(addr)

    priv_names = tuple(sorted(a[1] for a in private))
    if fatal:
        best = None
        for rank, addr in enumerate(fatal):
            events = by_addr[addr]
            writers = {k for k, kind, _ in events if kind == "w"}
            touched = sorted({k for k, _, _ in events})
            for b in touched:
                for a in touched:
                    if a >= b:
                        break
                    if a in writers or b in writers:
                        cand = (b, a, rank)
                        if best is None or cand < best:
                            best = cand
                        break
        b, a, rank = best
        return OracleVerdict(False, "none", (a, b, _addr_name(fatal[rank])), {}, priv_names)
    if reductions:
        return OracleVerdict(True, "reduction", None, reductions, priv_names)
    return OracleVerdict(True, "do_all", None, {}, priv_names)


# --------------------------------------------------------------------------
# interleaving check

@dataclass
class InterleavingResult:
    equivalent: bool  # every interleaving reproduces the serial final state
    schedules: int
    private: tuple = ()


def _same(a, b) -> bool:
    if isinstance(a, float) or isinstance(b, float):
        a, b = float(a), float(b)
        if math.isnan(a) and math.isnan(b):
            return True
        return a == b or math.isclose(a, b, rel_tol=1e-9, abs_tol=1e-12)
    return a == b


def interleaving_check(loop_text: str, max_schedules: int = 20000) -> InterleavingResult:
    """Compare serial execution of two iterations with all their interleavings.

    Statements are atomic; only statements touching shared memory are
    interleaving points. Inner loops run at most two iterations. Scalars
    first written in both iterations get a private copy per iteration and
    are left out of the comparison, as is the loop counter.
    """
    model = LoopModel(loop_text)
    values = _outer_iterations(model, 2)
    if len(values) < 2:
        raise OracleUnsupported("loop runs fewer than two iterations")
    body = model.root.children[3]

    serial_mem = {}
    firsts = []
    for v in values:
        first = {}
        rec = lambda kind, addr, tag, first=first: first.setdefault(addr, kind) if addr[0] == "s" else None
        ex = Executor(model, serial_mem, {model.counter: v}, 2, record=rec)
        for _ in ex.run_iteration(body):
            pass
        firsts.append(first)
    private = sorted(
        {a[1] for f in firsts for a, kind in f.items()}
        - {a[1] for f in firsts for a, kind in f.items() if kind != "w"}
    )

    def fresh_env(v):
        env = {model.counter: v}
        for name in private:
            env[name] = _initial(("s", name))
        return env

    def run(choices):
        mem = {}
        gens = [Executor(model, mem, fresh_env(v), 2).run_iteration(body) for v in values]
        alive = [True, True]
        made, branch_points = [], []
        while any(alive):
            if all(alive):
                pos = len(made)
                pick = choices[pos] if pos < len(choices) else 0
                if pos >= len(choices):
                    branch_points.append(pos)
                made.append(pick)
            else:
                pick = 0 if alive[0] else 1
            try:
                next(gens[pick])
            except StopIteration:
                alive[pick] = False
        return mem, made, branch_points

    def state(mem):
        return {a: v for a, v in mem.items() if not (a[0] == "s" and a[1] in private)}

    reference = state(serial_mem)
    todo = [[]]
    count = 0
    equivalent = True
    while todo:
        choices = todo.pop()
        mem, made, points = run(choices)
        count += 1
        if count > max_schedules:
            raise OracleUnsupported("too many interleavings")
        got = state(mem)
        for addr in set(reference) | set(got):
            if not _same(reference.get(addr, _initial(addr)), got.get(addr, _initial(addr))):
                equivalent = False
                break
        for p in points:
            todo.append(made[:p] + [1])
    return InterleavingResult(equivalent, count, tuple(private))
