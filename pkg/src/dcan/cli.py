"""Command-line entry points: synth, preprocess, train, evaluate, predict.

Every command takes ``--config FILE``, repeatable ``--set section.key=value``,
``--seed N`` and ``--out DIR``, writes the effective configuration to
``DIR/config.json`` and exits 0 on success or 1 with a one-line diagnostic.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from .config import load_config, model_config, synth_spec, train_config, write_config
from .data import (
    Document,
    LabeledExample,
    encode_documents,
    generate_synthetic,
    label_space,
    load_dataset,
    write_corpus,
)
from .errors import CheckpointError
from .metrics import evaluate
from .model import init_params, parameter_counts
from .numcore import RngStream
from .textpipe import Vocabulary, build_vocab, preprocess
from .training import predict_scores, train

SPLITS = ("train", "dev", "test")


class CommandError(Exception):
    """An operator-facing failure; the message is printed as is."""


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _say(*parts) -> None:
    print(" ".join(str(p) for p in parts), flush=True)


# ----------------------------------------------------------------------------
# synth


def cmd_synth(cfg: dict, out: Path) -> None:
    corpus = generate_synthetic(synth_spec(cfg))
    write_corpus(corpus, out)
    for split, docs in corpus.splits().items():
        _say(f"split={split} docs={len(docs)}")
    _say(f"labels={len(corpus.manifest['labels'])} manifest={out / 'manifest.json'}")


# ----------------------------------------------------------------------------
# preprocess


def _split_path(data_dir, split) -> Path:
    path = Path(data_dir) / f"{split}.jsonl"
    if not path.exists():
        raise CommandError(f"missing dataset file {path}")
    return path


def _write_encoded(path: Path, examples: list[LabeledExample]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ex in examples:
            rec = {"id": ex.doc_id, "ids": ex.token_ids.tolist(),
                   "labels": np.flatnonzero(ex.labels).tolist()}
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def _read_encoded(path: Path, num_labels: int) -> list[LabeledExample]:
    if not path.exists():
        raise CommandError(f"missing encoded split {path}; run `preprocess` first")
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            rec = json.loads(line)
            y = np.zeros(num_labels)
            y[rec["labels"]] = 1.0
            out.append(LabeledExample(np.asarray(rec["ids"], dtype=np.int64), y, rec["id"]))
    return out


def cmd_preprocess(cfg: dict, out: Path) -> None:
    data_dir = cfg["paths"]["data_dir"]
    pp = cfg["preprocess"]
    docs = {split: load_dataset(_split_path(data_dir, split)) for split in SPLITS}
    vocab = build_vocab((preprocess(d.text, pp["max_len"]) for d in docs["train"]), pp["min_frequency"])
    labels = label_space(d for split in SPLITS for d in docs[split])
    vocab.save(out / "vocab.txt")
    (out / "labels.json").write_text(json.dumps(labels) + "\n", encoding="utf-8")
    _say(f"vocab_size={len(vocab)} labels={len(labels)}")
    stats = {"vocab_size": len(vocab), "labels": len(labels)}
    for split in SPLITS:
        examples, truncated = encode_documents(docs[split], vocab, labels, pp["max_len"])
        _write_encoded(out / f"{split}.encoded.jsonl", examples)
        stats[split] = {"docs": len(examples), "truncated": truncated}
        _say(f"split={split} docs={len(examples)} truncated={truncated}")
    (out / "stats.json").write_text(json.dumps(stats, sort_keys=True) + "\n", encoding="utf-8")


# ----------------------------------------------------------------------------
# train


def _fmt(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def cmd_train(cfg: dict, out: Path) -> None:
    prep = Path(cfg["paths"]["prep_dir"])
    vocab_path = prep / "vocab.txt"
    if not vocab_path.exists():
        raise CommandError(f"missing vocabulary {vocab_path}; run `preprocess` first")
    vocab = Vocabulary.load(vocab_path)
    labels = json.loads((prep / "labels.json").read_text(encoding="utf-8"))
    train_ex = _read_encoded(prep / "train.encoded.jsonl", len(labels))
    dev_ex = _read_encoded(prep / "dev.encoded.jsonl", len(labels))
    mc = model_config(cfg, len(vocab), len(labels))
    tc = train_config(cfg)

    resume = cfg["paths"]["resume"]
    kwargs = {}
    if resume:
        last = ckpt.load(Path(resume) / "last.bin")
        ckpt.check_resume(last, mc)
        if last.meta.get("labels") != labels:
            raise CheckpointError("label space of the resumed run differs from the current data")
        best = ckpt.load(Path(resume) / "checkpoint.bin")
        params = last.params
        kwargs = dict(state=last.state, start_epoch=last.meta["epoch"], history=last.meta["history"],
                      rng_states=last.meta["rng"], best_params=best.params)
        _say(f"resume epoch={last.meta['epoch']} step={last.state.t}")
    else:
        params = init_params(mc, RngStream(tc.seed, 0))

    counts = parameter_counts(params)
    (out / "param_counts.json").write_text(json.dumps(counts, indent=2) + "\n", encoding="utf-8")
    for name, n in counts.items():
        _say(f"params.{name}={n}")

    hist_path = out / "history.jsonl"
    hist_fh = open(hist_path, "w", encoding="utf-8", newline="\n")

    def on_epoch(entry):
        hist_fh.write(json.dumps(entry, sort_keys=True) + "\n")
        hist_fh.flush()
        fields = ["epoch", "step", "train_loss", "micro_f1", "macro_f1", "micro_auc", "macro_auc",
                  "precision_at_k"]
        _say(" ".join(f"{key}={_fmt(entry[key])}" for key in fields))

    try:
        for entry in kwargs.get("history", []):
            hist_fh.write(json.dumps(entry, sort_keys=True) + "\n")
        result = train(params, mc, train_ex, dev_ex, tc, labels, on_epoch=on_epoch, **kwargs)
    finally:
        hist_fh.close()

    meta = {"labels": labels, "vocab": vocab.tokens[2:], "train": tc.to_dict()}
    best_meta = dict(meta, epoch=result.best_epoch)
    ckpt.save(out / "checkpoint.bin", result.best_params, mc, None, best_meta)
    last_meta = dict(meta, epoch=result.epoch, history=result.history, rng=result.rng_states)
    ckpt.save(out / "last.bin", result.params, mc, result.state, last_meta)
    _say(f"best_epoch={result.best_epoch} checkpoint={out / 'checkpoint.bin'}")


# ----------------------------------------------------------------------------
# evaluate / predict


def _load_model(cfg):
    path = cfg["paths"]["checkpoint"]
    if not path or not Path(path).exists():
        raise CommandError(f"missing checkpoint {path}")
    model = ckpt.load(path)
    if "labels" not in model.meta or "vocab" not in model.meta:
        raise CheckpointError("checkpoint lacks label/vocabulary metadata")
    vocab = Vocabulary(["<pad>", "<unk>"] + model.meta["vocab"])
    return model, vocab, model.meta["labels"]


def cmd_evaluate(cfg: dict, out: Path) -> None:
    ev = cfg["eval"]
    docs = load_dataset(_split_path(cfg["paths"]["data_dir"], ev["split"]))
    if not docs:
        raise CommandError("nothing to evaluate: empty dataset")
    baseline = ev["baseline"]
    if baseline is None:
        model, vocab, labels = _load_model(cfg)
        extra = sorted({c for d in docs for c in d.codes} - set(labels))
        if extra:
            raise CommandError(f"label-space mismatch: dataset codes {extra[:5]} are not in the checkpoint")
        examples, _ = encode_documents(docs, vocab, labels, model.config.max_len)
        y_true = np.stack([e.labels for e in examples])
        scores = predict_scores(model.params, model.config, examples, ev["batch_size"])
    else:
        labels = label_space(docs)
        y_true = np.array([[1.0 if lab in d.codes else 0.0 for lab in labels] for d in docs])
        if baseline == "oracle":
            scores = y_true.copy()
        elif baseline == "constant":
            scores = np.full_like(y_true, 0.5)
        else:
            raise CommandError(f"unknown baseline {baseline!r}; use 'oracle' or 'constant'")
    report = evaluate(y_true, scores, labels, ev["threshold"], ev["k"])
    (out / "report.txt").write_text(report.to_text(), encoding="utf-8")
    (out / "report.json").write_text(report.to_json(), encoding="utf-8")
    np.save(out / "scores.npy", scores)
    for key, value in report.summary().items():
        _say(f"{key}={_fmt(value)}")


def _read_predict_input(path) -> list[Document]:
    docs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                docs.append(Document(str(rec["id"]), str(rec["text"])))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise CommandError(f"{path}: line {lineno}: bad record ({exc})") from None
    return docs


def _rank(scores: np.ndarray, top_k: int) -> list[int]:
    """Label indices by descending score; equal scores keep label-index order."""
    return [int(j) for j in np.argsort(-scores, kind="stable")[:top_k]]


def cmd_predict(cfg: dict, out: Path) -> None:
    model, vocab, labels = _load_model(cfg)
    path = cfg["paths"]["input"] or str(Path(cfg["paths"]["data_dir"]) / "test.jsonl")
    if not Path(path).exists():
        raise CommandError(f"missing input file {path}")
    docs = _read_predict_input(path)
    if not docs:
        raise CommandError(f"no documents in {path}")
    top_k = int(cfg["eval"]["top_k"])
    if not 1 <= top_k <= len(labels):
        raise CommandError(f"top_k must be between 1 and {len(labels)}")
    examples, _ = encode_documents(docs, vocab, labels, model.config.max_len)
    scores = predict_scores(model.params, model.config, examples, cfg["eval"]["batch_size"])
    with open(out / "predictions.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        for doc, row in zip(docs, scores):
            ranked = [{"code": labels[j], "prob": float(row[j])} for j in _rank(row, top_k)]
            fh.write(json.dumps({"id": doc.id, "codes": ranked}) + "\n")
    _say(f"documents={len(docs)} top_k={top_k} predictions={out / 'predictions.jsonl'}")


COMMANDS = {
    "synth": cmd_synth,
    "preprocess": cmd_preprocess,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "predict": cmd_predict,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dcan", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override one setting, e.g. --set train.lr=0.001 (repeatable)")
        p.add_argument("--seed", type=int, help="seed for both training and corpus generation")
        p.add_argument("--out", default=".", help="output directory (default: current directory)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.overrides, args.seed)
        out = _out_dir(args)
        write_config(cfg, out)
        COMMANDS[args.command](cfg, out)
    except (CommandError, OSError, ValueError, KeyError, TypeError) as exc:
        text = exc.args[0] if isinstance(exc, KeyError) and exc.args else str(exc)
        msg = str(text).splitlines()[0] if str(text) else type(exc).__name__
        print(f"dcan {args.command}: error: {msg}", file=sys.stderr)
        return 1
    return 0


def main_exit() -> None:
    sys.exit(main())
