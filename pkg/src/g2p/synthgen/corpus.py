"""Generate a labeled synthetic corpus from the shipped templates."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .templates import TemplateSpec, load_templates, render_template


@dataclass
class CorpusConfig:
    out_dir: str
    n_variants_per_template: int = 20
    n_nonparallel: int = 700
    seed: int = 42
    templates_dir: Optional[str] = None


def sub_seed(seed: int, template_id: int, variant: int) -> int:
    digest = hashlib.sha256(f"{seed}:{template_id}:{variant}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def _plan(templates: list, cfg: CorpusConfig) -> list:
    plan = []
    for pattern in ("do_all", "reduction"):
        for spec in (t for t in templates if t.pattern == pattern):
            plan += [(spec, v) for v in range(cfg.n_variants_per_template)]
    nonpar = [t for t in templates if t.pattern == "non_parallel"]
    if cfg.n_nonparallel and not nonpar:
        raise ValueError("no non_parallel templates available")
    for j, spec in enumerate(nonpar):
        count = cfg.n_nonparallel // len(nonpar) + (j < cfg.n_nonparallel % len(nonpar))
        plan += [(spec, v) for v in range(count)]
    return plan


def generate_corpus(config: CorpusConfig) -> dict:
    """Write one C file per variant plus ``manifest.json``; return the manifest."""
    if config.n_variants_per_template < 0 or config.n_nonparallel < 0:
        raise ValueError("variant counts must be non-negative")
    templates = load_templates(config.templates_dir)
    out = Path(config.out_dir)
    entries = []
    for spec, v in _plan(templates, config):
        seed = sub_seed(config.seed, spec.template_id, v)
        prog = render_template(spec, seed)
        rel = f"{spec.pattern}/t{spec.template_id:02d}_v{v:03d}.c"
        path = out / rel
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(prog.source)
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc}") from exc
        entries.append({
            "file": rel,
            "template_id": spec.template_id,
            "pattern": spec.pattern,
            "seed": seed,
            "labels": prog.label.as_dict(),
        })
    manifest = {
        "seed": config.seed,
        "n_variants_per_template": config.n_variants_per_template,
        "n_nonparallel": config.n_nonparallel,
        "entries": entries,
    }
    try:
        (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {out / 'manifest.json'}: {exc}") from exc
    return manifest


def pattern_counts(manifest: dict) -> dict:
    counts = {"do_all": 0, "reduction": 0, "non_parallel": 0}
    for e in manifest["entries"]:
        counts[e["pattern"]] += 1
    return counts
