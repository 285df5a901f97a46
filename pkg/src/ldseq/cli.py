"""Command-line entry point: ``ldseq <command> [options]``.

Every option can also come from a flat ``key = value`` file given with
``--config``. Precedence is command-line flag, then the ``LDSEQ_SEED``
environment variable (seed only), then the config file, then built-in defaults.

Exit status: 0 on success, 1 on runtime errors, 2 on usage or configuration
errors (including missing or unparsable input files).
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import numkit
from .corpus import (BOL_ID, Vocabs, decode_labels, encode, format_conll, read_conll,
                     read_label_column)
from .decode import BidirModel, predict, predict_bidirectional
from .embed import EmbeddingTable, NNLMConfig, nnlm_pretrain
from .errors import ArgumentError, ConfigError, LdseqError, ParseError
from .gradcheck import check_gradients, toy_instance
from .metrics import evaluate
from .nets import ARCHS, NetConfig, Sizes, count_params
from .serialize import ModelFile, atomic_write, load_embeddings, save_embeddings
from .synth import SynthSpec, gen_synth
from .train import BIDIR_DEFAULTS, TrainConfig, train_bidirectional, train_model

log = logging.getLogger("ldseq")

SEED_ENV = "LDSEQ_SEED"
USAGE_ERRORS = (ConfigError, ArgumentError, ParseError, FileNotFoundError)


# --- config files -------------------------------------------------------------

def parse_bool(text: str) -> bool:
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def read_config(path) -> dict[str, str]:
    """Parse a flat ``key = value`` file; ``#`` starts a comment line."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    out = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _convert(action: argparse.Action, key: str, raw: str):
    if isinstance(action, argparse.BooleanOptionalAction):
        return parse_bool(raw)
    try:
        value = action.type(raw) if action.type else raw
    except (TypeError, ValueError):
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    if action.choices is not None and value not in action.choices:
        raise ConfigError(f"bad value for {key}: {raw!r} (choose from {', '.join(map(str, action.choices))})")
    return value


def config_defaults(parser: argparse.ArgumentParser, values: dict[str, str]) -> dict:
    actions = {a.dest: a for a in parser._actions if a.dest not in ("help", "config")}
    unknown = sorted(set(values) - set(actions))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    return {k: _convert(actions[k], k, v) for k, v in values.items()}


# --- argument parser ----------------------------------------------------------

def _common(p: argparse.ArgumentParser, seed=True):
    p.add_argument("--config", help="flat key = value file with option defaults")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    if seed:
        p.add_argument("--seed", type=int, default=1)


def _net_args(p):
    g = p.add_argument_group("network")
    g.add_argument("--arch", choices=ARCHS, default="ldrnn")
    g.add_argument("--embed", type=int, default=200, help="embedding size N")
    g.add_argument("--hidden", type=int, default=200, help="hidden layer size |H|")
    g.add_argument("--d-w", type=int, default=1, help="word half-window")
    g.add_argument("--d-l", type=int, default=5, help="number of previous labels fed back")
    g.add_argument("--d-c", type=int, default=0, help="character half-window")
    g.add_argument("--conv-size", type=int, default=50)
    g.add_argument("--char-dim", type=int, default=30)
    g.add_argument("--use-classes", action=argparse.BooleanOptionalAction, default=False)
    g.add_argument("--use-charconv", action=argparse.BooleanOptionalAction, default=False)
    g.add_argument("--activation", choices=tuple(numkit.ACTIVATIONS), default="relu")
    g.add_argument("--jordan-context", choices=("onehot", "prob"), default="onehot")


def _train_args(p):
    d = TrainConfig()
    g = p.add_argument_group("training")
    g.add_argument("--lr0", type=float, default=d.lr0)
    g.add_argument("--epochs", type=int, default=d.epochs)
    g.add_argument("--momentum", type=float, default=d.momentum)
    g.add_argument("--l2", type=float, default=d.l2)
    g.add_argument("--p-drop-hidden", type=float, default=d.p_drop_hidden)
    g.add_argument("--p-drop-embed", type=float, default=d.p_drop_embed)
    g.add_argument("--patience", type=int, default=d.patience)
    g.add_argument("--teacher-forcing", action=argparse.BooleanOptionalAction, default=True)


def _nnlm_args(p):
    d = NNLMConfig()
    g = p.add_argument_group("embedding pretraining")
    g.add_argument("--word-epochs", type=int, default=30, help="0 disables word pretraining")
    g.add_argument("--label-epochs", type=int, default=20, help="0 disables label pretraining")
    g.add_argument("--nnlm-context", type=int, default=d.context)
    g.add_argument("--nnlm-hidden", type=int, default=d.hidden)
    g.add_argument("--nnlm-lr", type=float, default=d.lr)
    g.add_argument("--min-count", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ldseq", description="Recurrent sequence taggers with label feedback.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synth", help="write a synthetic tagging corpus")
    _common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--n-train", type=int, default=2000)
    p.add_argument("--n-dev", type=int, default=200)
    p.add_argument("--n-test", type=int, default=500)
    s = SynthSpec()
    p.add_argument("--labels", type=int, default=s.n_labels)
    p.add_argument("--vocab-size", type=int, default=s.vocab_size)
    p.add_argument("--min-len", type=int, default=s.min_len)
    p.add_argument("--max-len", type=int, default=s.max_len)
    p.add_argument("--rho", type=float, default=s.rho, help="probability a label follows the label chain")
    p.add_argument("--p-major", type=float, default=s.p_major)
    p.add_argument("--classes", type=int, default=0, help="add a word-class column with this many classes")

    p = sub.add_parser("pretrain-embeddings", help="train word and label embeddings with a language model")
    _common(p)
    p.add_argument("--train", required=True)
    p.add_argument("--out", required=True, help="output directory for words.emb and labels.emb")
    p.add_argument("--dim", type=int, default=200)
    _nnlm_args(p)

    p = sub.add_parser("train", help="train forward, backward and bidirectional taggers")
    _common(p)
    p.add_argument("--train", required=True)
    p.add_argument("--dev")
    p.add_argument("--out", required=True, help="output directory for model files")
    p.add_argument("--word-embeddings", help="embedding file to initialise E_w")
    p.add_argument("--label-embeddings", help="embedding file to initialise E_l")
    p.add_argument("--backward", action=argparse.BooleanOptionalAction, default=False,
                   help="also train a right-to-left model")
    p.add_argument("--bidir", action=argparse.BooleanOptionalAction, default=False,
                   help="train both directions, then fine-tune them jointly")
    p.add_argument("--bidir-epochs", type=int, default=BIDIR_DEFAULTS["epochs"])
    p.add_argument("--bidir-l2", type=float, default=BIDIR_DEFAULTS["l2"])
    p.add_argument("--bidir-freeze", action=argparse.BooleanOptionalAction, default=False,
                   help="combine the directional models without fine-tuning")
    _net_args(p)
    _train_args(p)
    _nnlm_args(p)

    p = sub.add_parser("predict", help="tag a corpus file")
    _common(p, seed=False)
    p.add_argument("--model", required=True)
    p.add_argument("--model-bwd", help="backward model for --bidir")
    p.add_argument("--bidir", action=argparse.BooleanOptionalAction, default=False)
    p.add_argument("--input", required=True)
    p.add_argument("--output", help="output file (default: stdout)")

    p = sub.add_parser("evaluate", help="score predictions against gold labels")
    _common(p, seed=False)
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True, help="file whose last column holds predicted labels")
    p.add_argument("--metric", choices=("acc", "f1", "cer", "all"), default="all")
    p.add_argument("--include-void", action=argparse.BooleanOptionalAction, default=False,
                   help="count O as a concept in CER")
    p.add_argument("--record", action=argparse.BooleanOptionalAction, default=False,
                   help="print one key=value line instead of the report")

    p = sub.add_parser("gradcheck", help="compare backprop with finite differences")
    _common(p)
    p.add_argument("--arch", choices=ARCHS + ("all",), default="all")
    p.add_argument("--hidden", type=int, default=8)
    p.add_argument("--embed", type=int, default=8)
    p.add_argument("--lam", type=float, default=0.01)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-4)

    p = sub.add_parser("count-params", help="print parameter counts for a configuration")
    _common(p, seed=False)
    _net_args(p)
    p.add_argument("--labels", type=int, required=True, help="output size |O|")
    p.add_argument("--words", type=int, default=0)
    p.add_argument("--classes", type=int, default=0)
    p.add_argument("--chars", type=int, default=0)
    return parser


def parse_args(argv=None, environ=None) -> argparse.Namespace:
    environ = os.environ if environ is None else environ
    parser = build_parser()
    args = parser.parse_args(argv)
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    defaults = {}
    if args.config:
        defaults.update(config_defaults(subparser, read_config(args.config)))
    if environ.get(SEED_ENV) and hasattr(args, "seed"):
        try:
            defaults["seed"] = int(environ[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {environ[SEED_ENV]!r}") from None
    if defaults:
        subparser.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


def net_config(args) -> NetConfig:
    return NetConfig(arch=args.arch, embed=args.embed, hidden=args.hidden, d_w=args.d_w, d_l=args.d_l,
                     d_c=args.d_c, conv_size=args.conv_size, char_dim=args.char_dim,
                     use_classes=args.use_classes, use_charconv=args.use_charconv,
                     activation=args.activation, jordan_context=args.jordan_context)


def train_config(args, **override) -> TrainConfig:
    kw = dict(lr0=args.lr0, epochs=args.epochs, momentum=args.momentum, l2=args.l2,
              p_drop_hidden=args.p_drop_hidden, p_drop_embed=args.p_drop_embed,
              patience=args.patience, seed=args.seed, teacher_forcing=args.teacher_forcing)
    kw.update(override)
    return TrainConfig(**kw)


def require_file(path, what: str) -> Path:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"{what} not found: {path}")
    return path


def load_corpus(path, what: str):
    corpus = read_conll(require_file(path, what))
    if not corpus:
        raise ConfigError(f"{what} {path} contains no sentences")
    return corpus


# --- commands -----------------------------------------------------------------

def cmd_gen_synth(args, out) -> int:
    spec = SynthSpec(n_labels=args.labels, vocab_size=args.vocab_size, min_len=args.min_len,
                     max_len=args.max_len, rho=args.rho, p_major=args.p_major,
                     n_classes=args.classes, seed=args.seed)
    splits = gen_synth(spec, args.n_train, args.n_dev, args.n_test)
    outdir = Path(args.out)
    for name, corpus in zip(("train", "dev", "test"), splits):
        atomic_write(outdir / f"{name}.txt", format_conll(corpus).encode("utf-8"))
    print(f"label_blind_ceiling={spec.label_blind_ceiling():.6f}", file=out)
    return 0


def _nnlm(args, dim: int, epochs: int) -> NNLMConfig:
    return NNLMConfig(dim=dim, context=args.nnlm_context, hidden=args.nnlm_hidden,
                      epochs=epochs, lr=args.nnlm_lr)


def _pretrain(args, vocabs: Vocabs, encoded, dim: int, words: bool, labels: bool):
    tables = {}
    if words and args.word_epochs > 0:
        log.info("pretraining word embeddings")
        tables["words"] = nnlm_pretrain([s.words for s in encoded], vocabs.words,
                                        _nnlm(args, dim, args.word_epochs), np.random.default_rng([args.seed, 5]))
    if labels and args.label_epochs > 0:
        log.info("pretraining label embeddings")
        tables["labels"] = nnlm_pretrain([s.labels for s in encoded], vocabs.labels,
                                         _nnlm(args, dim, args.label_epochs), np.random.default_rng([args.seed, 6]),
                                         pad=BOL_ID)
    return tables


def cmd_pretrain(args, out) -> int:
    corpus = load_corpus(args.train, "training file")
    vocabs = Vocabs.from_examples(corpus, args.min_count)
    encoded = [encode(x, vocabs) for x in corpus]
    tables = _pretrain(args, vocabs, encoded, args.dim, True, True)
    for column, table in tables.items():
        path = Path(args.out) / f"{column}.emb"
        save_embeddings(table, path, column)
        print(f"wrote {path}", file=out)
    return 0


def align_table(table: EmbeddingTable, vocab, dim: int, rng) -> np.ndarray:
    """Rows of ``table`` re-indexed to ``vocab``; items it lacks get fresh Xavier rows."""
    if table.dim != dim:
        raise ConfigError(f"embedding dimension {table.dim} does not match --embed {dim}")
    matrix = numkit.xavier_init(len(vocab), dim, rng)
    for i, item in enumerate(vocab.itos):
        j = table.vocab.stoi.get(item)
        if j is not None:
            matrix[i] = table.matrix[j]
    return matrix


def cmd_train(args, out) -> int:
    train_corpus = load_corpus(args.train, "training file")
    dev_corpus = load_corpus(args.dev, "dev file") if args.dev else []
    nc = net_config(args)
    tc = train_config(args)
    vocabs = Vocabs.from_examples(train_corpus, args.min_count)
    if nc.use_classes and vocabs.classes is None:
        raise ConfigError("--use-classes needs a class column in the training file")
    train = [encode(x, vocabs) for x in train_corpus]
    dev = [encode(x, vocabs, training=False) for x in dev_corpus]
    sizes = Sizes(len(vocabs.words), len(vocabs.labels),
                  len(vocabs.classes) if vocabs.classes else 0, len(vocabs.chars) if vocabs.chars else 0)

    # stage 1: embeddings
    wants_labels = nc.arch == "ldrnn"
    tables = _pretrain(args, vocabs, train, nc.embed,
                       words=args.word_embeddings is None,
                       labels=wants_labels and args.label_embeddings is None)
    outdir = Path(args.out)
    for column, table in tables.items():
        save_embeddings(table, outdir / f"{column}.emb", column)
    if args.word_embeddings:
        tables["words"] = load_embeddings(require_file(args.word_embeddings, "word embedding file"))
    if wants_labels and args.label_embeddings:
        tables["labels"] = load_embeddings(require_file(args.label_embeddings, "label embedding file"))
    pretrained = {}
    if "words" in tables:
        pretrained["E_w"] = align_table(tables["words"], vocabs.words, nc.embed, np.random.default_rng([args.seed, 8]))
    if "labels" in tables:
        pretrained["E_l"] = align_table(tables["labels"], vocabs.labels, nc.embed, np.random.default_rng([args.seed, 9]))

    def report(rec):
        print(rec.line(), file=out, flush=True)

    # stage 2: directional models
    directions = ["forward"] + (["backward"] if args.backward or args.bidir else [])
    models = {}
    for direction in directions:
        print(f"# stage={direction}", file=out)
        params, hist = train_model(train, dev, nc, tc, sizes, direction=direction,
                                   pretrained=pretrained, on_epoch=report)
        print(f"# best_epoch={hist.best_epoch}", file=out)
        models[direction] = params
        ModelFile(params, vocabs, direction).save(outdir / f"{direction}.model")

    # stage 3: joint fine-tuning
    if args.bidir:
        print("# stage=bidirectional", file=out)
        btc = train_config(args, epochs=args.bidir_epochs, l2=args.bidir_l2)
        model, hist = train_bidirectional(models["forward"], models["backward"], train, dev, btc,
                                          freeze=args.bidir_freeze, on_epoch=report)
        print(f"# best_epoch={hist.best_epoch}", file=out)
        ModelFile(model.fwd, vocabs, "forward", {"bidir": True}).save(outdir / "bidir_forward.model")
        ModelFile(model.bwd, vocabs, "backward", {"bidir": True}).save(outdir / "bidir_backward.model")
    return 0


def _check_compatible(mf: ModelFile, corpus):
    if mf.params.config.use_classes and corpus and not corpus[0].has_classes:
        raise ConfigError("model uses word classes but the input has no class column")


def cmd_predict(args, out) -> int:
    fwd = ModelFile.load(require_file(args.model, "model file"))
    corpus = read_conll(require_file(args.input, "input file"))
    _check_compatible(fwd, corpus)
    vocabs = fwd.vocabs
    if args.bidir:
        if not args.model_bwd:
            raise ConfigError("--bidir needs --model-bwd")
        bwd = ModelFile.load(require_file(args.model_bwd, "backward model file"))
        if (bwd.vocabs.words != vocabs.words or bwd.vocabs.labels != vocabs.labels
                or bwd.vocabs.classes != vocabs.classes or bwd.vocabs.chars != vocabs.chars):
            raise ConfigError("forward and backward models were trained with different vocabularies")
        if fwd.direction != "forward" or bwd.direction != "backward":
            raise ConfigError("--model must be a forward model and --model-bwd a backward model")
        model = BidirModel(fwd.params, bwd.params)
        run = lambda s: predict_bidirectional(s, model)
    else:
        run = lambda s: predict(s, fwd.params, fwd.direction)[0]
    preds = []
    for ex in corpus:
        labels = run(encode(ex, vocabs, training=False))
        preds.append(decode_labels(labels, vocabs.labels))
    text = format_conll(corpus, preds)
    if args.output:
        atomic_write(args.output, text.encode("utf-8"))
    else:
        out.write(text)
    return 0


def cmd_evaluate(args, out) -> int:
    gold = [ex.labels for ex in read_conll(require_file(args.gold, "gold file"))]
    pred = read_label_column(require_file(args.pred, "prediction file"))
    report = evaluate(gold, pred, include_void=args.include_void)
    print(report.to_record() if args.record else report.to_text(args.metric), file=out)
    return 0


def cmd_gradcheck(args, out) -> int:
    archs = ARCHS if args.arch == "all" else (args.arch,)
    worst = 0.0
    for arch in archs:
        params, sent = toy_instance(arch, np.random.default_rng(args.seed), args.hidden, args.embed)
        errors = check_gradients(params, sent, args.lam, args.eps)
        for name, err in errors.items():
            print(f"arch={arch} tensor={name} rel_err={err:.3e}", file=out)
            worst = max(worst, err)
    ok = math.isfinite(worst) and worst <= args.tol
    print(f"max_rel_err={worst:.3e} tol={args.tol:g} {'PASS' if ok else 'FAIL'}", file=out)
    return 0 if ok else 1


def cmd_count_params(args, out) -> int:
    counts = count_params(net_config(args), args.labels, args.words, args.classes, args.chars)
    for name, n in counts["per_tensor"].items():
        print(f"{name}={n}", file=out)
    for key in ("hidden_layer", "biases", "total_weights", "total"):
        print(f"{key}={counts[key]}", file=out)
    return 0


COMMANDS = {
    "gen-synth": cmd_gen_synth,
    "pretrain-embeddings": cmd_pretrain,
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "gradcheck": cmd_gradcheck,
    "count-params": cmd_count_params,
}


def main(argv=None, out=None, err=None, environ=None) -> int:
    out = sys.stdout if out is None else out
    err = sys.stderr if err is None else err
    try:
        args = parse_args(argv, environ)
    except SystemExit as exc:          # argparse usage errors
        return int(exc.code or 0)
    except USAGE_ERRORS as exc:
        print(f"ldseq: error: {exc}", file=err)
        return 2
    if args.verbose:
        logging.basicConfig(level=logging.INFO, stream=err, format="%(message)s")
    try:
        return COMMANDS[args.command](args, out)
    except USAGE_ERRORS as exc:
        print(f"ldseq: error: {exc}", file=err)
        return 2
    except (LdseqError, OSError, ValueError) as exc:
        print(f"ldseq: error: {exc}", file=err)
        return 1


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
