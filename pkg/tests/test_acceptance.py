"""Acceptance criteria, one test per criterion.

Each test records a ``PASS``/``FAIL`` line that is printed in the pytest
terminal summary (and directly when this file is run as a script).
"""

import functools
import io
import itertools
import sys
import time
from collections import deque

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from ldseq.cli import main as cli_main
from ldseq.corpus import Encoded
from ldseq.decode import combine_bidirectional, predict
from ldseq.gradcheck import check_gradients, toy_instance
from ldseq.metrics import cer, chunk_f1, edit_counts
from ldseq.nets import ARCHS, NetConfig, Sizes, StepState, count_params, init_params, step
from ldseq.serialize import ModelFile
from ldseq.synth import SynthSpec
from ldseq.train import TrainConfig, dev_accuracy, train_model

from conftest import ACCEPTANCE_LINES, synth_corpus


def criterion(number, title):
    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            start = time.perf_counter()
            try:
                detail = fn(*args, **kwargs)
            except BaseException as exc:
                line = f"FAIL criterion {number} ({title}): {type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}"
                ACCEPTANCE_LINES.append(line)
                print(line)
                raise
            line = f"PASS criterion {number} ({title}) [{time.perf_counter() - start:.1f}s] {detail or ''}".rstrip()
            ACCEPTANCE_LINES.append(line)
            print(line)
        return run
    return wrap


# 1 -------------------------------------------------------------------------------

@criterion(1, "gradient correctness")
def test_c1_gradient_check():
    start = time.perf_counter()
    worst = {}
    for arch in ARCHS:
        params, sent = toy_instance(arch, np.random.default_rng(2024), hidden=8, embed=8, n_tokens=6, n_labels=4)
        if arch == "ldrnn":
            assert params.config.use_classes and params.config.use_charconv
        assert len(sent) == 6 and params.sizes.labels == 4
        errors = check_gradients(params, sent, lam=0.01, eps=1e-5)
        worst[arch] = max(errors.values())
        assert worst[arch] <= 1e-4, f"{arch}: {errors}"
    elapsed = time.perf_counter() - start
    assert elapsed < 60, f"took {elapsed:.1f}s"
    return " ".join(f"{a}={e:.1e}" for a, e in worst.items())


# 2 -------------------------------------------------------------------------------

GRID = [  # (|H|, N, d_w, d_l, |O|)
    (200, 200, 1, 5, 127), (200, 200, 5, 5, 127), (100, 50, 0, 1, 10), (64, 64, 2, 3, 30), (8, 8, 1, 2, 4),
    (1, 1, 0, 1, 5), (300, 100, 3, 4, 80), (17, 23, 4, 7, 11), (50, 200, 1, 1, 40), (256, 128, 2, 6, 9),
]


def closed_form_counts(H, N, dw, dl, O):
    """Hidden-layer parameter counts written out from the complexity formulas."""
    win = (2 * dw + 1) * N
    return {
        "elman": H * H + H * win,
        "jordan": O * H + H * win,                # one previous label vector
        "ldrnn": O * N + (2 * dw + 1 + dl) * N * H,
        "lstm": 4 * (H * H + H * win),
        "gru": 3 * (H * H + H * win),
    }


IN_SCOPE = ("R", "H", "E_l", "W", "U", "W_f", "U_f", "W_i", "U_i", "W_c", "U_c", "W_o", "U_o",
            "W_z", "U_z", "W_r", "U_r")


@criterion(2, "parameter-count exactness")
def test_c2_parameter_counts():
    for H, N, dw, dl, O in GRID:
        want = closed_form_counts(H, N, dw, dl, O)
        for arch in ARCHS:
            cfg = NetConfig(arch=arch, hidden=H, embed=N, d_w=dw, d_l=1 if arch == "jordan" else dl)
            got = count_params(cfg, O, n_words=7)
            assert got["hidden_layer"] == want[arch], (arch, H, N, dw, dl, O)
            params = init_params(cfg, Sizes(7, O), np.random.default_rng(0))
            allocated = sum(v.size for k, v in params.tensors.items() if k in IN_SCOPE)
            assert allocated == want[arch], (arch, "allocated")
            assert got["total"] == params.n_entries()
        # label context of several previous labels scales the Jordan recurrent term
        jcfg = NetConfig(arch="jordan", hidden=H, embed=N, d_w=dw, d_l=dl)
        assert count_params(jcfg, O)["hidden_layer"] == dl * O * H + H * (2 * dw + 1) * N
        assert 4 * want["gru"] == 3 * want["lstm"]
        lstm = count_params(NetConfig(arch="lstm", hidden=H, embed=N, d_w=dw), O)["hidden_layer"]
        gru = count_params(NetConfig(arch="gru", hidden=H, embed=N, d_w=dw), O)["hidden_layer"]
        assert 4 * gru == 3 * lstm
    return f"{len(GRID)} grid points x {len(ARCHS)} architectures"


# 3 -------------------------------------------------------------------------------

@criterion(3, "overfit oracle")
def test_c3_overfit():
    start = time.perf_counter()
    _, _, sizes, train, _, _ = synth_corpus(20, rho=0.0, seed=3)
    cfg = NetConfig(arch="ldrnn", hidden=32, embed=32)
    first = []

    def train_acc(params, epoch):
        acc = dev_accuracy(params, train)
        if acc >= 0.99 and not first:
            first.append(epoch)
        return acc

    best, hist = train_model(train, [], cfg, TrainConfig(epochs=200, patience=200), sizes, dev_scorer=train_acc)
    elapsed = time.perf_counter() - start
    final = dev_accuracy(best, train)
    assert first, f"best training accuracy {max(hist.dev_scores):.3f}"
    assert final >= 0.99
    assert elapsed < 30, f"took {elapsed:.1f}s"
    return f"train_acc={final:.3f} first_epoch>=0.99={first[0]}"


# 4 -------------------------------------------------------------------------------

@criterion(4, "label-dependency separation")
def test_c4_label_dependency():
    start = time.perf_counter()
    spec, _, sizes, train, dev, test = synth_corpus(2000, 200, 500, rho=1.0, n_labels=5, seed=1)
    ceiling = spec.label_blind_ceiling()
    tc = TrainConfig(seed=1)
    scores = {}
    for arch in ("ldrnn", "elman"):
        cfg = NetConfig(arch=arch, hidden=32, embed=32, d_w=1, d_l=3)
        params, _ = train_model(train, dev, cfg, tc, sizes)
        scores[arch] = dev_accuracy(params, test)
    elapsed = time.perf_counter() - start
    detail = f"ldrnn={scores['ldrnn']:.3f} elman={scores['elman']:.3f} ceiling={ceiling:.3f}"
    assert scores["ldrnn"] - ceiling >= 0.15, detail
    assert scores["ldrnn"] - scores["elman"] >= 0.10, detail
    assert elapsed < 600, f"took {elapsed:.1f}s"
    return detail


# 5 -------------------------------------------------------------------------------

def _matchings(n, m):
    """Indicator rows over the n*m position pairs for every monotone matching, and k."""
    rows, ks = [], []
    for k in range(min(n, m) + 1):
        for rs in itertools.combinations(range(n), k):
            for hs in itertools.combinations(range(m), k):
                row = np.zeros(n * m)
                for i, j in zip(rs, hs):
                    row[i * m + j] = 1
                rows.append(row)
                ks.append(k)
    return np.array(rows).reshape(len(rows), n * m), np.array(ks)


def _brute_force_table(n, m, alphabet=3):
    """Minimum edit cost for every (ref, hyp) pair of lengths n and m, by exhaustion."""
    refs = np.array(list(itertools.product(range(alphabet), repeat=n)), dtype=np.int64).reshape(alphabet ** n, n)
    hyps = np.array(list(itertools.product(range(alphabet), repeat=m)), dtype=np.int64).reshape(alphabet ** m, m)
    K, ks = _matchings(n, m)
    base = n + m - 2 * ks
    table = np.empty((len(refs), len(hyps)), dtype=np.int64)
    for a, ref in enumerate(refs):
        mismatch = (ref[None, :, None] != hyps[:, None, :]).reshape(len(hyps), n * m)
        table[a] = (base[None, :] + mismatch @ K.T).min(axis=1)
    return refs, hyps, table


@criterion(5, "metric oracles")
def test_c5_metric_oracles():
    checked = 0
    for n in range(7):
        for m in range(7):
            refs, hyps, table = _brute_force_table(n, m)
            for a, ref in enumerate(refs):
                ref = list(ref)
                for b, hyp in enumerate(hyps):
                    hyp = list(hyp)
                    if n:
                        rate, I, D, S, R = cer([ref], [hyp])
                        assert R == n and rate == (I + D + S) / n
                    else:
                        I, D, S = edit_counts(ref, hyp)
                    assert I + D + S == table[a, b], (ref, hyp)
                    checked += 1
    p, r, f = chunk_f1([["B-X", "I-X", "O", "B-Y"]], [["B-X", "I-X", "O", "O"]])
    assert (p, r, f) == (1.0, 0.5, 2 / 3)
    return f"{checked} sequence pairs"


# 6 -------------------------------------------------------------------------------

@criterion(6, "decoding invariants")
def test_c6_decoding_invariants():
    rng = np.random.default_rng(6)
    for _ in range(1000):
        k = int(rng.integers(2, 12))
        yf, yb = rng.dirichlet(np.ones(k)), rng.dirichlet(np.ones(k))
        a, b, z = np.exp(rng.uniform(-20, 20, size=3))
        ref = np.argmax(combine_bidirectional(yf, yb))
        assert np.argmax(combine_bidirectional(a * yf, b * yb)) == ref
        assert np.argmax(combine_bidirectional(yf, yb) / z) == ref
    n_sent = 0
    for i in range(100):
        arch = ARCHS[i % len(ARCHS)]
        cfg = NetConfig(arch=arch, embed=6, hidden=7, d_w=1, d_l=3)
        params = init_params(cfg, Sizes(15, 9), np.random.default_rng(i))
        T = int(rng.integers(1, 15))
        sent = Encoded(rng.integers(0, 15, size=T), np.zeros(T, dtype=np.int64), ["O"] * T)
        lb, db = predict(sent, params, "backward")
        lf, df = predict(sent.reversed(), params, "forward")
        assert_array_equal(lb, lf[::-1])
        assert_array_equal(db, df[::-1])
        n_sent += 1
    for arch in ARCHS:
        params = init_params(NetConfig(arch=arch, embed=4, hidden=5), Sizes(10, 6), np.random.default_rng(0))
        params.tensors["O"][:] = 0
        params.tensors["b_O"][:] = 0
        sent = Encoded(np.arange(4, 9), np.zeros(5, dtype=np.int64), ["O"] * 5)
        assert_array_equal(predict(sent, params)[0], 0)
    assert np.argmax(combine_bidirectional(np.full(5, 0.2), np.full(5, 0.2))) == 0
    return f"1000 rescaling trials, {n_sent} reversed sentences"


# 7 -------------------------------------------------------------------------------

def _train_run(data_dir, out_dir):
    out, err = io.StringIO(), io.StringIO()
    code = cli_main(["train", "--train", str(data_dir / "train.txt"), "--dev", str(data_dir / "dev.txt"),
                     "--out", str(out_dir), "--bidir", "--embed", "16", "--hidden", "16", "--d-l", "3",
                     "--epochs", "3", "--bidir-epochs", "2", "--word-epochs", "2", "--label-epochs", "2",
                     "--nnlm-hidden", "16", "--seed", "7"], out=out, err=err, environ={})
    assert code == 0, err.getvalue()


@criterion(7, "determinism and serialization")
def test_c7_determinism(tmp_path):
    data = tmp_path / "data"
    assert cli_main(["gen-synth", "--out", str(data), "--n-train", "60", "--n-dev", "15", "--n-test", "0",
                     "--rho", "0.5", "--seed", "7"], out=io.StringIO(), err=io.StringIO(), environ={}) == 0
    _train_run(data, tmp_path / "run1")
    _train_run(data, tmp_path / "run2")
    files = ("forward.model", "backward.model", "bidir_forward.model", "bidir_backward.model",
             "words.emb", "labels.emb")
    for name in files:
        assert (tmp_path / "run1" / name).read_bytes() == (tmp_path / "run2" / name).read_bytes(), name
    from test_serialize import random_model
    for seed in range(100):
        mf = random_model(seed)
        path = tmp_path / f"m{seed}.model"
        mf.save(path)
        back = ModelFile.load(path)
        assert back.params.names() == mf.params.names()
        for name in mf.params.names():
            assert back.params[name].tobytes() == mf.params[name].tobytes()
        assert back.vocabs == mf.vocabs and back.params.config == mf.params.config
    return f"{len(files)} files identical across runs, 100 round-trips"


# 8 -------------------------------------------------------------------------------

@criterion(8, "early stopping contract")
def test_c8_early_stopping():
    _, _, sizes, train, _, _ = synth_corpus(5, rho=0.0, min_len=3, max_len=5)
    scripted = [0.5, 0.6, 0.6, 0.6, 0.6, 0.6, 0.6]
    snapshots = {}

    def scorer(params, epoch):
        snapshots[epoch] = params.copy()
        return scripted[epoch - 1] if epoch <= len(scripted) else 1.0

    cfg = NetConfig(arch="ldrnn", embed=4, hidden=4, d_l=2)
    best, hist = train_model(train, [], cfg, TrainConfig(epochs=30, patience=5), sizes, dev_scorer=scorer)
    assert [r.epoch for r in hist.records] == list(range(1, 8))
    assert hist.stopped_early and hist.best_epoch == 2
    assert best.allclose(snapshots[2])
    assert not best.allclose(snapshots[7])
    return "stopped after epoch 7, returned epoch 2"


# 9 -------------------------------------------------------------------------------

@criterion(9, "closed-form layer checks")
def test_c9_closed_forms():
    rng = np.random.default_rng(9)
    for arch in ("lstm", "gru"):
        cfg = NetConfig(arch=arch, embed=3, hidden=6, d_w=1)
        params = init_params(cfg, Sizes(8, 5), rng)
        for v in params.tensors.values():
            v[:] = 0.0
        h = rng.normal(size=6) * 3
        c = rng.normal(size=6) * 3 if arch == "lstm" else None
        state = StepState(h=h, c=c, labels=deque(maxlen=0), dists=deque(maxlen=0))
        for _ in range(5):
            x = rng.normal(size=9) * 5
            h_new, state = step(x, state, params)
            if arch == "lstm":
                c_expected = 0.5 * c
                assert np.max(np.abs(state.c - c_expected)) <= 1e-12
                assert np.max(np.abs(h_new - 0.5 * np.tanh(c_expected))) <= 1e-12
                c = c_expected
            else:
                assert np.max(np.abs(h_new - 0.5 * h)) <= 1e-12
            h = h_new
    return "lstm c_t=0.5c_{t-1}, h_t=0.5tanh(c_t); gru h_t=0.5h_{t-1}"


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
