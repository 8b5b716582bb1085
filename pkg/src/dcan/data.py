"""Dataset records, file I/O, batching and the planted-rule synthetic corpus."""

from __future__ import annotations

import json
import string
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DatasetError, GenerationError
from .model import PAD_ID, UNK_ID
from .numcore import RngStream
from .textpipe import MAX_LEN, Vocabulary, count_tokens, encode, preprocess


@dataclass(frozen=True)
class Document:
    id: str
    text: str
    codes: frozenset[str] = frozenset()

    def to_record(self) -> dict:
        return {"id": self.id, "text": self.text, "codes": sorted(self.codes)}


@dataclass
class LabeledExample:
    token_ids: np.ndarray
    labels: np.ndarray
    doc_id: str = ""


@dataclass
class Batch:
    ids: np.ndarray
    mask: np.ndarray
    labels: np.ndarray
    indices: np.ndarray


# ----------------------------------------------------------------------------
# dataset files (one JSON object per line)


def write_dataset(path, docs: Iterable[Document]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for doc in docs:
            fh.write(json.dumps(doc.to_record(), ensure_ascii=False, sort_keys=True) + "\n")


def load_dataset(path) -> list[Document]:
    docs: list[Document] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"invalid JSON: {exc.msg}", lineno) from None
            if not isinstance(rec, dict):
                raise DatasetError("record is not an object", lineno)
            missing = {"id", "text", "codes"} - rec.keys()
            if missing:
                raise DatasetError(f"missing field(s) {sorted(missing)}", lineno)
            doc_id, text, codes = rec["id"], rec["text"], rec["codes"]
            if not isinstance(doc_id, str) or not isinstance(text, str):
                raise DatasetError("id and text must be strings", lineno)
            if not isinstance(codes, list) or not all(isinstance(c, str) for c in codes):
                raise DatasetError("codes must be a list of strings", lineno)
            if doc_id in seen:
                raise DatasetError(f"duplicate document id {doc_id!r}", lineno)
            seen.add(doc_id)
            docs.append(Document(doc_id, text, frozenset(codes)))
    return docs


def label_space(docs: Iterable[Document]) -> list[str]:
    return sorted({c for d in docs for c in d.codes})


def encode_documents(
    docs: Sequence[Document], vocab: Vocabulary, labels: Sequence[str], max_len: int = MAX_LEN
) -> tuple[list[LabeledExample], int]:
    """Examples for ``docs`` plus the number of documents that were truncated.

    Documents with no surviving tokens become a single UNK token.
    """
    index = {lab: j for j, lab in enumerate(labels)}
    examples = []
    truncated = 0
    for doc in docs:
        unknown = doc.codes - index.keys()
        if unknown:
            raise ValueError(f"document {doc.id!r} has codes outside the label space: {sorted(unknown)}")
        toks = preprocess(doc.text, max_len)
        if len(toks) == max_len and count_tokens(doc.text) > max_len:
            truncated += 1
        ids = encode(toks, vocab) or [UNK_ID]
        y = np.zeros(len(labels), dtype=np.float64)
        for c in doc.codes:
            y[index[c]] = 1.0
        examples.append(LabeledExample(np.asarray(ids, dtype=np.int64), y, doc.id))
    return examples, truncated


def make_batches(
    examples: Sequence[LabeledExample],
    batch_size: int,
    rng: RngStream | None = None,
    shuffle: bool = False,
    bucket: int = 0,
) -> list[Batch]:
    """Right-padded batches with a mask of real tokens.

    With ``shuffle`` the order is a permutation drawn from ``rng``. A
    ``bucket`` factor > 1 additionally sorts each run of ``bucket * batch_size``
    shuffled examples by length before slicing, then shuffles the batch order;
    this cuts padding without making the order seed-independent.
    """
    if not examples:
        raise ValueError("cannot batch an empty example list")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    n = len(examples)
    order = np.arange(n)
    if shuffle:
        if rng is None:
            raise ValueError("shuffle needs an RngStream")
        order = rng.permutation(n)
    groups = []
    if shuffle and bucket > 1:
        chunk = batch_size * bucket
        for start in range(0, n, chunk):
            part = order[start:start + chunk]
            lengths = np.array([len(examples[i].token_ids) for i in part])
            part = part[np.argsort(lengths, kind="stable")]
            groups.extend(part[i:i + batch_size] for i in range(0, len(part), batch_size))
        groups = [groups[i] for i in rng.permutation(len(groups))]
    else:
        groups = [order[i:i + batch_size] for i in range(0, n, batch_size)]
    return [_collate(examples, idx) for idx in groups]


def _collate(examples, idx) -> Batch:
    width = max(len(examples[i].token_ids) for i in idx)
    ids = np.full((len(idx), width), PAD_ID, dtype=np.int64)
    for row, i in enumerate(idx):
        seq = examples[i].token_ids
        ids[row, : len(seq)] = seq
    mask = np.zeros_like(ids, dtype=bool)
    for row, i in enumerate(idx):
        mask[row, : len(examples[i].token_ids)] = True
    labels = np.stack([examples[i].labels for i in idx])
    return Batch(ids, mask, labels, np.asarray(idx))


# ----------------------------------------------------------------------------
# synthetic planted-rule corpus


@dataclass
class SynthSpec:
    num_labels: int = 20
    train_docs: int = 2000
    dev_docs: int = 400
    test_docs: int = 400
    filler_vocab: int = 500
    triggers_per_label: int = 1
    long_range_fraction: float = 0.25
    gap: int = 300
    # Pair placements: far pairs sit in [gap, max_pair_distance]. Near pairs
    # (both members within near_pair_distance, so the label stays off) are
    # off by default: they make the corpus unsolvable by a bag-of-words
    # detector and the model then memorises the pair labels.
    max_pair_distance: int = 480
    near_pair_distance: int = 150
    near_pair_rate: float = 0.0
    min_doc_len: int = 200
    max_doc_len: int = 1000
    label_rate: float = 0.15
    max_len: int = MAX_LEN
    seed: int = 1234
    filler_words: tuple[str, ...] | None = None
    trigger_words: tuple[str, ...] | None = None

    def validate(self) -> None:
        if self.num_labels < 1:
            raise GenerationError("num_labels must be positive")
        if min(self.train_docs, self.dev_docs, self.test_docs) < 0:
            raise GenerationError("document counts must be non-negative")
        if self.gap < 1:
            raise GenerationError("gap must be a positive integer")
        if self.gap >= self.max_len:
            raise GenerationError(f"gap ({self.gap}) must be smaller than max_len ({self.max_len})")
        if not 0.0 <= self.long_range_fraction <= 1.0:
            raise GenerationError("long_range_fraction must be in [0, 1]")
        if not 1 <= self.min_doc_len <= self.max_doc_len <= self.max_len:
            raise GenerationError("need 1 <= min_doc_len <= max_doc_len <= max_len")
        if self.max_pair_distance < self.gap:
            raise GenerationError("max_pair_distance must be >= gap")
        if self.near_pair_rate > 0 and not 1 <= self.near_pair_distance < self.gap:
            raise GenerationError("near_pair_distance must be in [1, gap)")
        if self.triggers_per_label < 1:
            raise GenerationError("triggers_per_label must be positive")
        if not 0.0 <= self.label_rate <= 0.5:
            raise GenerationError("label_rate must be in [0, 0.5]")
        if not 0.0 <= self.near_pair_rate <= 1.0 - 2 * self.label_rate:
            raise GenerationError("near_pair_rate must be in [0, 1 - 2*label_rate]")

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("filler_words", "trigger_words"):
            if d[key] is not None:
                d[key] = list(d[key])
        return d


@dataclass
class SynthCorpus:
    train: list[Document]
    dev: list[Document]
    test: list[Document]
    manifest: dict = field(default_factory=dict)

    def splits(self) -> dict[str, list[Document]]:
        return {"train": self.train, "dev": self.dev, "test": self.test}


def _random_words(rng: RngStream, count: int, lo: int, hi: int, exclude=frozenset()) -> list[str]:
    letters = np.array(list(string.ascii_lowercase))
    words: list[str] = []
    seen = set(exclude)
    while len(words) < count:
        size = int(rng.integers(lo, hi + 1))
        w = "".join(letters[rng.integers(0, 26, size=size)])
        if w not in seen:
            seen.add(w)
            words.append(w)
    return words


def _label_names(m: int) -> list[str]:
    width = max(2, len(str(m - 1)))
    return [f"C{j:0{width}d}" for j in range(m)]


def apply_rules(tokens: Sequence[str], manifest: dict) -> set[str]:
    """Codes whose planted rule fires on the preprocessed token sequence."""
    first_pos: dict[str, int] = {}
    last_pos: dict[str, int] = {}
    for i, tok in enumerate(tokens):
        first_pos.setdefault(tok, i)
        last_pos[tok] = i
    codes = set()
    for rule in manifest["rules"]:
        if rule["kind"] == "single":
            if any(t in first_pos for t in rule["triggers"]):
                codes.add(rule["label"])
        elif rule["kind"] == "pair":
            a, b = rule["first"], rule["second"]
            if a in first_pos and b in last_pos and last_pos[b] - first_pos[a] >= rule["gap"]:
                codes.add(rule["label"])
        else:
            raise ValueError(f"unknown rule kind {rule['kind']!r}")
    return codes


def generate_synthetic(spec: SynthSpec) -> SynthCorpus:
    """Planted-rule corpus whose labels are an exact function of the text.

    Single-trigger labels fire when any of their trigger words occurs.
    Long-range labels own an ordered word pair and fire only when the first
    word precedes the second by at least ``gap`` tokens. Besides far pairs the
    generator plants near pairs and lone pair members as hard negatives.
    """
    spec.validate()
    rng = RngStream(spec.seed, 0)
    m = spec.num_labels
    labels = _label_names(m)
    n_long = int(round(spec.long_range_fraction * m))
    long_idx = set(int(j) for j in rng.permutation(m)[:n_long])
    words_needed = sum(2 if j in long_idx else spec.triggers_per_label for j in range(m))

    if spec.filler_words is not None:
        fillers = list(spec.filler_words)
    else:
        fillers = _random_words(rng, spec.filler_vocab, 3, 8)
    if spec.trigger_words is not None:
        triggers = list(spec.trigger_words)
        if len(triggers) < words_needed:
            raise GenerationError(f"need {words_needed} trigger words, got {len(triggers)}")
    else:
        triggers = _random_words(rng, words_needed, 5, 9, exclude=set(fillers))
    clash = set(fillers) & set(triggers)
    if clash:
        raise GenerationError(f"trigger words collide with filler vocabulary: {sorted(clash)[:5]}")
    if len(set(triggers)) != len(triggers):
        raise GenerationError("trigger words must be distinct")
    for w in fillers + triggers:
        if preprocess(w) != [w]:
            raise GenerationError(f"word {w!r} does not survive preprocessing unchanged")

    rules = []
    pos = 0
    for j, lab in enumerate(labels):
        if j in long_idx:
            rules.append({"label": lab, "kind": "pair", "first": triggers[pos],
                          "second": triggers[pos + 1], "gap": spec.gap})
            pos += 2
        else:
            rules.append({"label": lab, "kind": "single",
                          "triggers": triggers[pos:pos + spec.triggers_per_label]})
            pos += spec.triggers_per_label
    manifest = {"labels": labels, "rules": rules, "spec": spec.to_dict()}

    splits = {}
    for split, count in (("train", spec.train_docs), ("dev", spec.dev_docs), ("test", spec.test_docs)):
        docs = []
        for i in range(count):
            tokens = _sample_tokens(rng, spec, rules, fillers)
            codes = frozenset(apply_rules(tokens, manifest))
            docs.append(Document(f"{split}-{i:05d}", _render(rng, tokens), codes))
        splits[split] = docs
    return SynthCorpus(splits["train"], splits["dev"], splits["test"], manifest)


def _sample_tokens(rng: RngStream, spec: SynthSpec, rules: list[dict], fillers: list[str]) -> list[str]:
    n = int(rng.integers(spec.min_doc_len, spec.max_doc_len + 1))
    tokens = [fillers[i] for i in rng.integers(0, len(fillers), size=n)]
    free = np.ones(n, dtype=bool)

    def place(word, lo, hi):
        for _ in range(200):
            p = int(rng.integers(lo, hi + 1))
            if free[p]:
                break
        else:
            # crowded short document: pick among the free slots, or plant nothing
            slots = np.flatnonzero(free[lo:hi + 1])
            if slots.size == 0:
                return
            p = lo + int(slots[rng.integers(0, slots.size)])
        free[p] = False
        tokens[p] = word

    def place_pair(a, b, dmin, dmax):
        dmax = min(dmax, n - 1)
        if dmax < dmin:
            return
        for _ in range(200):
            d = int(rng.integers(dmin, dmax + 1))
            p = int(rng.integers(0, n - d))
            if free[p] and free[p + d]:
                break
        else:
            options = [(p, d) for d in range(dmin, dmax + 1) for p in range(n - d) if free[p] and free[p + d]]
            if not options:
                return
            p, d = options[int(rng.integers(0, len(options)))]
        free[p] = free[p + d] = False
        tokens[p], tokens[p + d] = a, b

    rate = spec.label_rate
    for rule in rules:
        u = rng.random(())
        if rule["kind"] == "single":
            if u < rate:
                for _ in range(int(rng.integers(1, 3))):
                    place(rule["triggers"][int(rng.integers(0, len(rule["triggers"])))], 0, n - 1)
            continue
        a, b = rule["first"], rule["second"]
        far_possible = n - 1 >= spec.gap
        near = spec.near_pair_rate
        if u < rate:
            if far_possible:
                place_pair(a, b, spec.gap, spec.max_pair_distance)
        elif u < rate + near:
            place_pair(a, b, 1, spec.near_pair_distance)
        elif u < 1.5 * rate + near:
            place(a, 0, n - 1)
        elif u < 2 * rate + near:
            place(b, 0, n - 1)
    return tokens


def _render(rng: RngStream, tokens: list[str]) -> str:
    """Join tokens into sentence-like text; punctuation and case are removed again by preprocess."""
    r = rng.random(len(tokens))
    out = []
    capital = True
    for tok, u in zip(tokens, r):
        word = tok.capitalize() if capital else tok
        capital = u < 0.06
        if capital:
            word += "."
        elif u < 0.09:
            word += ","
        out.append(word)
    return " ".join(out)


def write_corpus(corpus: SynthCorpus, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    for split, docs in corpus.splits().items():
        paths[split] = out / f"{split}.jsonl"
        write_dataset(paths[split], docs)
    paths["manifest"] = out / "manifest.json"
    paths["manifest"].write_text(json.dumps(corpus.manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return paths
