import numpy as np
import pytest

from ldseq.corpus import Vocabs, encode
from ldseq.nets import Sizes
from ldseq.synth import SynthSpec, gen_synth


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def synth_corpus(n_train, n_dev=0, n_test=0, **spec_kw):
    """Encoded synthetic splits plus their vocabularies and sizes."""
    spec = SynthSpec(**spec_kw)
    tr, dv, te = gen_synth(spec, n_train, n_dev, n_test)
    vocabs = Vocabs.from_examples(tr)
    enc = lambda xs, training: [encode(x, vocabs, training=training) for x in xs]
    sizes = Sizes(len(vocabs.words), len(vocabs.labels),
                  len(vocabs.classes) if vocabs.classes else 0, len(vocabs.chars))
    return spec, vocabs, sizes, enc(tr, True), enc(dv, False), enc(te, False)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
