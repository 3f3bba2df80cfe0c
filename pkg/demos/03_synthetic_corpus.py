"""Generate labeled loops from templates and check every label two ways.

The dependence oracle reasons about subscripts over a bounded iteration
space. The interleaving checker runs two iterations in every order and
compares final states. The two are independent, so agreement between them is
evidence that a label is right.

Run: python demos/03_synthetic_corpus.py
"""

import tempfile

from g2p.synthgen import (
    CorpusConfig,
    dependence_oracle,
    generate_corpus,
    interleaving_check,
    load_templates,
    pattern_counts,
    render_template,
)

templates = load_templates()
print(f"{len(templates)} templates shipped\n")

# One rendering per pattern.
for pattern in ("do_all", "reduction", "non_parallel"):
    spec = next(t for t in templates if t.pattern == pattern)
    prog = render_template(spec, 2024)
    verdict = dependence_oracle(prog.loop_text)
    run = interleaving_check(prog.loop_text)
    print(f"--- {pattern} (template {spec.template_id})")
    print(prog.loop_text.rstrip())
    print(f"oracle: parallel={verdict.parallel} pattern={verdict.pattern} reductions={verdict.reductions}")
    if verdict.witness:
        print(f"        conflicting iterations/access: {verdict.witness}")
    print(f"interleaving: equivalent={run.equivalent} over {run.schedules} schedules\n")

# A scaled-down corpus. The full default is 20 variants per parallel template and 700 non-parallel loops.
with tempfile.TemporaryDirectory() as out:
    manifest = generate_corpus(CorpusConfig(out, n_variants_per_template=4, n_nonparallel=56, seed=1))
    print("corpus:", pattern_counts(manifest))
    print("first manifest entry:", manifest["entries"][0])
