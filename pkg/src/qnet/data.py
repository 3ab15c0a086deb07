"""Text normalization, vocabularies, dataset loaders, and synthetic corpora.

Normalization lowercases, deletes ASCII punctuation, and splits on
whitespace runs.  Non-ASCII text passes through untouched (pre-tokenized
CoNLL input bypasses normalization entirely).

Vocabulary ids are contiguous with id 0 = PAD and id 1 = UNK; vocabularies
are built from the training split only, so test-only tokens map to UNK.
"""

from __future__ import annotations

import csv
import json
import string
from dataclasses import dataclass, field

import numpy as np

PAD_ID = 0
UNK_ID = 1

_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


class DataError(ValueError):
    """Malformed dataset content (bad row, bad label, empty selection)."""


@dataclass
class Example:
    """One model-ready example: fixed-length token ids plus a target.

    ``target`` is an int class id (sentence tasks), a float (regression), or
    an int tag array aligned with ``token_ids`` (token tasks).  ``pad_mask``
    is True at real-token positions and is present for token tasks.
    """

    token_ids: np.ndarray
    target: object
    pad_mask: np.ndarray | None = None


@dataclass
class Vocab:
    """Token-to-id map with PAD=0 and UNK=1 reserved."""

    token_to_id: dict[str, int] = field(default_factory=dict)

    @classmethod
    def build(cls, token_lists) -> "Vocab":
        """Assign contiguous ids in first-seen order, starting at 2."""
        mapping: dict[str, int] = {}
        for tokens in token_lists:
            for tok in tokens:
                if tok not in mapping:
                    mapping[tok] = 2 + len(mapping)
        return cls(mapping)

    def __len__(self) -> int:
        return 2 + len(self.token_to_id)

    def id_of(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)


def normalize_and_tokenize(text: str) -> list[str]:
    """Lowercase, strip ASCII punctuation, split on whitespace runs."""
    return text.lower().translate(_PUNCT_TABLE).split()


def encode(tokens, vocab: Vocab, n: int) -> np.ndarray:
    """Truncate to ``n`` ids, right-padded with PAD; unknown tokens map to UNK."""
    ids = [vocab.id_of(t) for t in tokens[:n]]
    ids += [PAD_ID] * (n - len(ids))
    return np.array(ids, dtype=np.int64)


def split(dataset, test_fraction: float = 0.27, seed: int = 0):
    """Deterministic shuffled split with |test| = round(test_fraction * N)."""
    n = len(dataset)
    if n < 2:
        raise DataError(f"need at least 2 examples to split, got {n}")
    order = np.random.default_rng(seed).permutation(n)
    n_test = int(round(test_fraction * n))
    test_idx = set(order[:n_test].tolist())
    train = [dataset[i] for i in range(n) if i not in test_idx]
    test = [dataset[i] for i in sorted(test_idx)]
    return train, test


# --- file loaders ---------------------------------------------------------------

def _load_csv(path: str):
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "text" not in reader.fieldnames \
                or "label" not in reader.fieldnames:
            raise DataError(f"{path}: expected a header with 'text,label' columns")
        for lineno, row in enumerate(reader, start=2):
            if row.get("text") is None or row.get("label") in (None, ""):
                raise DataError(f"{path}:{lineno}: missing text or label")
            records.append((row["text"], row["label"]))
    return records


def _load_jsonl(path: str):
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(obj, dict) or "text" not in obj or "label" not in obj:
                raise DataError(f"{path}:{lineno}: expected keys 'text' and 'label'")
            records.append((obj["text"], obj["label"]))
    return records


def repair_bio(tags: list[str]) -> tuple[list[str], int]:
    """Enforce BIO validity: I-X must follow B-X or I-X, else becomes B-X.

    Returns the repaired sequence and the number of repairs made.
    """
    repaired = []
    fixes = 0
    prev = "O"
    for tag in tags:
        if tag.startswith("I-") and prev != tag and prev != "B-" + tag[2:]:
            tag = "B-" + tag[2:]
            fixes += 1
        repaired.append(tag)
        prev = tag
    return repaired, fixes


def _load_conll(path: str):
    sentences = []
    tokens: list[str] = []
    tags: list[str] = []
    repairs = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                if tokens:
                    fixed, n_fixed = repair_bio(tags)
                    repairs += n_fixed
                    sentences.append((tokens, fixed))
                    tokens, tags = [], []
                continue
            parts = line.split("\t") if "\t" in line else line.split()
            if len(parts) != 2:
                raise DataError(f"{path}:{lineno}: expected 'token<TAB>tag', "
                                f"got {line!r}")
            tokens.append(parts[0])
            tags.append(parts[1])
    if tokens:
        fixed, n_fixed = repair_bio(tags)
        repairs += n_fixed
        sentences.append((tokens, fixed))
    return sentences, repairs


def load_dataset(path: str, format: str):
    """Load raw records from disk.

    ``csv_text_label`` / ``jsonl_text_label`` yield (text, label) pairs;
    ``conll_bio`` yields (tokens, tags) pairs after BIO repair and is
    returned together with the repair count.
    """
    if format == "csv_text_label":
        return _load_csv(path)
    if format == "jsonl_text_label":
        return _load_jsonl(path)
    if format == "conll_bio":
        sentences, _repairs = _load_conll(path)
        return sentences
    raise DataError(f"unknown dataset format {format!r}")


def load_conll_with_repair_count(path: str):
    """conll_bio loader variant that also reports how many tags were repaired."""
    return _load_conll(path)


# --- synthetic corpora -----------------------------------------------------------

KEYWORD_TOKEN = "w0"
KEYWORD_VOCAB = tuple(f"w{i}" for i in range(16))
TAGCOPY_VOCAB = tuple(f"t{i}" for i in range(16))
TAGCOPY_NUM_TAGS = 4  # tag of token t_k is k mod 4; tag 0 plays the O role


def synthetic_corpora(kind: str, size: int, seed: int, length: int = 4):
    """Bundled desk-scale corpora.

    ``keyword_presence``: (text, label) records over a 16-symbol vocabulary,
    label 1 iff ``w0`` appears; exactly half the examples are positive.

    ``tag_copy``: (tokens, tags) records where token ``t<k>`` always carries
    tag ``k mod 4`` (tag name ``O`` for 0, else ``T<m>``); a deterministic
    per-token rule for exercising token classification.
    """
    if size < 10:
        raise ValueError(f"synthetic corpus size must be >= 10, got {size}")
    rng = np.random.default_rng(seed)
    if kind == "keyword_presence":
        non_keyword = [t for t in KEYWORD_VOCAB if t != KEYWORD_TOKEN]
        records = []
        n_pos = size // 2
        for i in range(size):
            if i < n_pos:
                tokens = list(rng.choice(KEYWORD_VOCAB, size=length))
                tokens[rng.integers(length)] = KEYWORD_TOKEN
                label = 1
            else:
                tokens = list(rng.choice(non_keyword, size=length))
                label = 0
            records.append((" ".join(tokens), label))
        order = rng.permutation(size)
        return [records[i] for i in order]
    if kind == "tag_copy":
        records = []
        for _ in range(size):
            tokens = list(rng.choice(TAGCOPY_VOCAB, size=length))
            tags = [tag_copy_tag_name(t) for t in tokens]
            records.append((tokens, tags))
        return records
    raise ValueError(f"unknown synthetic corpus kind {kind!r}")


def tag_copy_tag_name(token: str) -> str:
    k = int(token[1:]) % TAGCOPY_NUM_TAGS
    return "O" if k == 0 else f"T{k}"


# --- model-ready pipelines --------------------------------------------------------

@dataclass
class TagVocab:
    """Tag-name-to-id map; the O tag always gets id 0."""

    tag_to_id: dict[str, int]

    @classmethod
    def build(cls, tag_lists) -> "TagVocab":
        mapping = {"O": 0}
        for tags in tag_lists:
            for tag in tags:
                if tag not in mapping:
                    mapping[tag] = len(mapping)
        return cls(mapping)

    def __len__(self) -> int:
        return len(self.tag_to_id)

    @property
    def o_id(self) -> int:
        return 0

    def id_of(self, tag: str) -> int:
        if tag not in self.tag_to_id:
            raise DataError(f"unknown tag {tag!r}")
        return self.tag_to_id[tag]


def prepare_sentence_dataset(records, n: int, test_fraction: float = 0.27,
                             seed: int = 0, regression: bool = False,
                             pretokenized: bool = False):
    """(text, label) records -> (train Examples, test Examples, vocab, classes).

    Texts are normalized and tokenized unless ``pretokenized``; the vocabulary
    comes from the training split only.  Classification labels are mapped to
    contiguous ids in first-seen training order; ``classes`` lists them
    (None for regression).
    """
    tokenized = []
    for text, label in records:
        tokens = list(text) if pretokenized else normalize_and_tokenize(text)
        tokenized.append((tokens, label))
    train_raw, test_raw = split(tokenized, test_fraction, seed)
    vocab = Vocab.build(tokens for tokens, _ in train_raw)

    classes: list | None = None
    if regression:
        def target_of(label):
            return float(label)
    else:
        classes = []
        seen = {}
        for _, label in train_raw:
            if label not in seen:
                seen[label] = len(seen)
                classes.append(label)

        def target_of(label):
            if label not in seen:
                raise DataError(f"label {label!r} absent from the training split")
            return seen[label]

    def to_examples(raw):
        return [Example(encode(tokens, vocab, n), target_of(label))
                for tokens, label in raw]

    return to_examples(train_raw), to_examples(test_raw), vocab, classes


def prepare_token_dataset(records, n: int, test_fraction: float = 0.27,
                          seed: int = 0):
    """(tokens, tags) records -> (train, test, vocab, tag_vocab) for NER-style
    token classification; targets are padded tag-id arrays with pad masks."""
    train_raw, test_raw = split(list(records), test_fraction, seed)
    vocab = Vocab.build(tokens for tokens, _ in train_raw)
    tag_vocab = TagVocab.build(tags for _, tags in train_raw)

    def to_examples(raw):
        out = []
        for tokens, tags in raw:
            if len(tokens) != len(tags):
                raise DataError("token/tag length mismatch")
            ids = encode(tokens, vocab, n)
            keep = min(len(tokens), n)
            tag_ids = np.zeros(n, dtype=np.int64)
            tag_ids[:keep] = [tag_vocab.id_of(t) for t in tags[:keep]]
            mask = np.zeros(n, dtype=bool)
            mask[:keep] = True
            out.append(Example(ids, tag_ids, mask))
        return out

    return to_examples(train_raw), to_examples(test_raw), vocab, tag_vocab
