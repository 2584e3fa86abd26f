import pytest

from citerec.corpus import Corpus, PaperRecord, build_queries
from citerec.encoder import EncoderConfig, init_weights, train_encoder
from citerec.graph import build_graph
from citerec.retrieval import build_index
from citerec.synth import SynthSpec, generate


def make_paper(pid, refs=(), title=None, abstract=""):
    return PaperRecord(id=pid, title=title if title is not None else pid,
                       abstract=abstract, references=frozenset(refs))


@pytest.fixture(scope="session")
def small_synth():
    """A compact benchmark shared across tests: 60 papers, 2 clusters."""
    data = generate(SynthSpec(n_papers=60, n_clusters=2, seed=7))
    papers = {p.id: p for p in data.papers}
    queries, _ = build_queries(papers, data.contexts)
    return Corpus(papers=papers, queries=queries), data


@pytest.fixture(scope="session")
def tiny_config():
    return EncoderConfig(d_model=16, n_heads=2, vocab_buckets=64,
                         max_tokens=32, seed=5)


@pytest.fixture(scope="session")
def small_index(small_synth, tiny_config):
    """Index over the small benchmark with briefly trained weights."""
    corpus, _ = small_synth
    graph = build_graph(corpus)
    result = train_encoder(corpus, graph, tiny_config, epochs=2)
    return build_index(corpus, result.weights, tiny_config)


@pytest.fixture(scope="session")
def seeded_weights(tiny_config):
    return init_weights(tiny_config)
