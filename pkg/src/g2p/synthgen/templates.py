"""Loop templates with ``{{slot}}`` markers and their rendering into C programs."""

from __future__ import annotations

import math
import random
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

from ..cfront import LabelSet
from .names import gen_identifier
from .oracle import OracleUnsupported, dependence_oracle

PATTERNS = ("do_all", "reduction", "non_parallel")
TEMPLATE_DIR = Path(__file__).with_name("templates")

PATTERN_OPERATORS = {
    "do_all": ("+", "-", "*", "/"),
    "reduction": ("+", "-", "*", "/"),  # inside terms; the reduction operator itself is separate
    "non_parallel": ("+", "-", "*", "/"),
}
REDUCTION_OPERATORS = ("+", "*")
MATH_FUNCS = ("fabs", "sqrt", "sin", "cos", "tanh", "exp", "log", "floor", "ceil")

TERM_RANGE = (1, 100_000)
LIMIT_RANGE = (16, 100_000)
NESTED_LIMIT_RANGE = (8, 64)
STEP_RANGE = (1, 8)

FIXED_SLOTS = (
    "counter", "counter2", "counter3", "array", "array2", "array3", "scalar", "scalar2",
    "red_var", "red_var2", "red_operator", "limit", "limit2", "limit3", "constant",
    "update", "unit_update",
)
FRESH_SLOTS = ("operand", "operator", "term", "func")
SLOTS = frozenset(FIXED_SLOTS + FRESH_SLOTS)

_SLOT_RE = re.compile(r"\{\{\s*([A-Za-z_][A-Za-z0-9_]*)\s*\}\}")
_FILE_RE = re.compile(r"^(do_all|reduction|non_parallel)_(\d+)\.tmpl$")

_LABELS = {
    # synthetic do-all loops carry the private category as well
    "do_all": LabelSet(parallel=True, private=True),
    "reduction": LabelSet(parallel=True, reduction=True),
    "non_parallel": LabelSet(),
}


class TemplateError(ValueError):
    """A template is malformed or renders a loop whose oracle verdict disagrees with its pattern."""


@dataclass(frozen=True)
class TemplateSpec:
    pattern: str
    body_form: str
    template_id: int
    name: str = ""

    def __post_init__(self):
        if self.pattern not in PATTERNS:
            raise TemplateError(f"unknown pattern {self.pattern!r}")
        used = self.slots()
        unknown = used - SLOTS
        if unknown:
            raise TemplateError(f"{self.name or self.template_id}: unknown slots {sorted(unknown)}")
        if "counter" not in used:
            raise TemplateError(f"{self.name or self.template_id}: template needs a {{{{counter}}}} slot")
        if self.pattern == "reduction" and not {"red_var", "red_operator"} <= used:
            raise TemplateError(f"{self.name}: reduction template needs red_var and red_operator")

    def slots(self) -> set:
        return set(_SLOT_RE.findall(self.body_form))

    @property
    def labels(self) -> LabelSet:
        return _LABELS[self.pattern]


@dataclass
class GeneratedProgram:
    source: str
    loop_text: str
    label: LabelSet
    seed: Optional[int]
    template_id: int
    pattern: str


def load_templates(directory: Union[str, Path, None] = None) -> list:
    """Read ``<pattern>_<n>.tmpl`` files; ids follow pattern order, then file order."""
    directory = Path(directory) if directory is not None else TEMPLATE_DIR
    if not directory.is_dir():
        raise FileNotFoundError(f"template directory not found: {directory}")
    found = []
    for path in directory.iterdir():
        m = _FILE_RE.match(path.name)
        if m:
            found.append((PATTERNS.index(m.group(1)), int(m.group(2)), m.group(1), path))
    if not found:
        raise TemplateError(f"no *.tmpl templates in {directory}")
    found.sort()
    return [
        TemplateSpec(pattern, path.read_text().rstrip() + "\n", tid, path.stem)
        for tid, (_, _, pattern, path) in enumerate(found)
    ]


def _log_uniform(rng: random.Random, lo: int, hi: int) -> int:
    return min(hi, max(lo, int(round(math.exp(rng.uniform(math.log(lo), math.log(hi)))))))


def _update(counter: str, step: int, rng: random.Random) -> str:
    if step == 1:
        forms = (f"{counter}++", f"++{counter}", f"{counter} = {counter} + 1", f"{counter} += 1")
    else:
        forms = (f"{counter} = {counter} + {step}", f"{counter} += {step}")
    return rng.choice(forms)


class _Filler:
    def __init__(self, spec: TemplateSpec, rng: random.Random):
        self.rng = rng
        self.spec = spec
        self.taken: set = set()
        self.readonly: list = []
        used = spec.slots()
        r = rng
        fixed = {}
        for slot in ("counter", "counter2", "counter3", "array", "array2", "array3",
                     "scalar", "scalar2", "red_var", "red_var2"):
            fixed[slot] = gen_identifier(r, self.taken)
        fixed["red_operator"] = r.choice(REDUCTION_OPERATORS)
        fixed["limit"] = str(_log_uniform(r, *LIMIT_RANGE))
        fixed["limit2"] = str(r.randint(*NESTED_LIMIT_RANGE))
        fixed["limit3"] = str(r.randint(*NESTED_LIMIT_RANGE))
        # keep at least two trips: a single-trip loop has no cross-iteration behaviour to label
        shortest = min(int(fixed[s]) for s in ("limit", "limit2", "limit3") if s in used or s == "limit")
        step = r.randint(STEP_RANGE[0], min(STEP_RANGE[1], shortest // 2))
        fixed["constant"] = str(step)
        fixed["update"] = _update(fixed["counter"], step, r)
        fixed["unit_update"] = _update(fixed["counter"], 1, r)
        self.fixed = fixed
        self.used = used

    def fresh(self, slot: str) -> str:
        r = self.rng
        if slot == "operator":
            return r.choice(PATTERN_OPERATORS[self.spec.pattern])
        if slot == "term":
            return str(_log_uniform(r, *TERM_RANGE))
        if slot == "func":
            return r.choice(MATH_FUNCS)
        # operand: a read-only scalar or an integer literal
        if r.random() < 0.5:
            name = gen_identifier(r, self.taken)
            self.readonly.append(name)
            return name
        return str(r.randint(1, 99))

    def render(self) -> str:
        def sub(m):
            slot = m.group(1)
            return self.fixed[slot] if slot in self.fixed else self.fresh(slot)
        return _SLOT_RE.sub(sub, self.spec.body_form)


def _array_dims(loop_text: str, name: str) -> int:
    m = re.search(rf"(?<![A-Za-z0-9_]){re.escape(name)}((?:\s*\[[^\[\]]*\])+)", loop_text)
    return m.group(1).count("[") if m else 0


def _wrap(filler: _Filler, loop_text: str) -> str:
    f, used, rng = filler.fixed, filler.used, filler.rng
    limits = [int(f[s]) for s in ("limit", "limit2", "limit3") if s in used]
    nested = [int(f[s]) for s in ("limit2", "limit3") if s in used] or limits
    lines = ["#include <stdio.h>", "#include <math.h>", ""]
    arrays = [f[s] for s in ("array", "array2", "array3") if s in used]
    for name in arrays:
        dims = _array_dims(loop_text, name)
        size = (max(limits) if dims == 1 else max(nested)) + 8
        lines.append(f"double {name}{f'[{size}]' * max(dims, 1)};")
    reds = [f[s] for s in ("red_var", "red_var2") if s in used]
    scalars = [f[s] for s in ("scalar", "scalar2") if s in used] + filler.readonly
    for name in reds:
        lines.append(f"double {name} = {'1.0' if f['red_operator'] == '*' else '0.0'};")
    for name in scalars:
        lines.append(f"double {name} = {rng.randint(1, 9)}.0;")
    counters = [f[s] for s in ("counter", "counter2", "counter3") if s in used]
    lines += ["", "int main(void)", "{", f"    int {', '.join(counters)};", ""]
    lines += [loop_text.rstrip("\n"), ""]
    shown = reds + [n + "[0]" * max(_array_dims(loop_text, n), 1) for n in arrays]
    if shown:
        fmt = " ".join(["%f"] * len(shown))
        lines.append(f'    printf("{fmt}\\n", {", ".join(shown)});')
    lines += ["    return 0;", "}", ""]
    return "\n".join(lines)


def confirm_label(spec: TemplateSpec, loop_text: str, red_vars=(), red_operator: str = "+") -> None:
    """Raise TemplateError unless the oracle verdict matches the template's pattern."""
    try:
        verdict = dependence_oracle(loop_text)
    except OracleUnsupported as exc:
        raise TemplateError(f"template {spec.name or spec.template_id}: oracle cannot model loop: {exc}") from exc
    want = spec.pattern
    ok = {
        "do_all": verdict.parallel and verdict.pattern == "do_all",
        "reduction": verdict.parallel and verdict.pattern == "reduction"
        and set(verdict.reductions) <= set(red_vars)
        and all(op == red_operator for op in verdict.reductions.values()),
        "non_parallel": not verdict.parallel,
    }[want]
    if not ok:
        raise TemplateError(
            f"template {spec.name or spec.template_id} ({want}) rendered a loop the oracle judged "
            f"{verdict.pattern}: {loop_text!r}"
        )


def render_template(spec: TemplateSpec, rng: Union[random.Random, int]) -> GeneratedProgram:
    """Fill the template's slots, wrap the loop into a program and check its label.

    ``rng`` is a ``random.Random`` or an integer seed (recorded in the result).
    """
    seed = rng if isinstance(rng, int) else None
    if seed is not None:
        rng = random.Random(seed)
    filler = _Filler(spec, rng)
    loop_text = filler.render()
    used = filler.used
    reds = [filler.fixed[s] for s in ("red_var", "red_var2") if s in used]
    confirm_label(spec, loop_text, reds, filler.fixed["red_operator"])
    source = _wrap(filler, loop_text)
    return GeneratedProgram(source, loop_text, spec.labels, seed, spec.template_id, spec.pattern)
