from .corpus import CorpusConfig, generate_corpus, pattern_counts, sub_seed
from .names import gen_identifier
from .oracle import (
    InterleavingResult,
    OracleUnsupported,
    OracleVerdict,
    dependence_oracle,
    interleaving_check,
)
from .templates import (
    GeneratedProgram,
    TemplateError,
    TemplateSpec,
    load_templates,
    render_template,
)
