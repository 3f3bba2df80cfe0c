import json
from pathlib import Path

import pytest

from g2p.evalcli.pipeline import extract_files, loops_to_graphs
from g2p.synthgen import CorpusConfig, generate_corpus

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def golden_graph():
    return json.loads((FIXTURES / "fabs_loop_graph.json").read_text())


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """A reduced synthetic corpus: 3 variants per parallel template, 42 non-parallel."""
    out = tmp_path_factory.mktemp("corpus")
    manifest = generate_corpus(CorpusConfig(str(out), 3, 42, seed=7))
    return out, manifest


@pytest.fixture(scope="session")
def small_graphs(small_corpus):
    out, _ = small_corpus
    loops, _ = extract_files([out], out / "manifest.json")
    graphs, vocab, diags = loops_to_graphs(loops)
    assert not diags
    return loops, graphs, vocab


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
