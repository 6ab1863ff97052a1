"""Dataset ingestion, normalization, tokenization, vocabulary, and lexicons."""

from __future__ import annotations

import csv
import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import DatasetError, LexiconError

logger = logging.getLogger(__name__)

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
MASK_TOKEN = "<mask>"
RESERVED_TOKENS = (PAD_TOKEN, UNK_TOKEN, MASK_TOKEN)
PAD_ID, UNK_ID, MASK_ID = 0, 1, 2

_URL_RE = re.compile(r"(?:https?://|www\.)\S+")
# Numeric dates only: three components joined by / - or . (e.g. 12/25/2023, 2023-01-02).
_DATE_RE = re.compile(r"\b\d{1,4}[/\-.]\d{1,2}[/\-.]\d{1,4}\b")
_NON_ASCII_RE = re.compile(r"[^\x00-\x7f]")
_WORD_RE = re.compile(r"[a-z0-9']+")


@dataclass(frozen=True)
class Sample:
    """One labeled text. `id` is stable across reruns of the same file."""

    id: str
    text: str
    label: int


@dataclass(frozen=True)
class TokenizedSample:
    sample_id: str
    tokens: tuple[str, ...]
    token_ids: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.tokens) != len(self.token_ids):
            raise DatasetError(
                f"sample {self.sample_id}: {len(self.tokens)} tokens but "
                f"{len(self.token_ids)} token ids"
            )


def normalize_text(raw: str) -> str:
    """Lowercase, strip URLs / numeric dates / non-ASCII, collapse whitespace.

    Idempotent; may return an empty string (callers drop such samples).
    """
    text = raw.lower()
    text = _URL_RE.sub(" ", text)
    text = _DATE_RE.sub(" ", text)
    text = _NON_ASCII_RE.sub("", text)
    return " ".join(text.split())


def tokenize(text: str, pattern: re.Pattern[str] = _WORD_RE) -> list[str]:
    """Split normalized text into words, dropping punctuation."""
    return pattern.findall(text.lower())


def _parse_label(value: object, where: str) -> int:
    if isinstance(value, bool):
        raise DatasetError(f"{where}: label must be 0 or 1, got {value!r}")
    if isinstance(value, int):
        label = value
    elif isinstance(value, str) and value.strip() in ("0", "1"):
        label = int(value.strip())
    else:
        raise DatasetError(f"{where}: label must be 0 or 1, got {value!r}")
    if label not in (0, 1):
        raise DatasetError(f"{where}: label must be 0 or 1, got {label}")
    return label


def _read_jsonl(path: Path) -> list[tuple[str, str, int]]:
    records = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{where}: invalid json ({exc.msg})") from exc
            if not isinstance(obj, dict) or "text" not in obj or "label" not in obj:
                raise DatasetError(f"{where}: expected object with 'text' and 'label'")
            if not isinstance(obj["text"], str):
                raise DatasetError(f"{where}: 'text' must be a string")
            sample_id = str(obj.get("id", f"{lineno:06d}"))
            records.append((sample_id, obj["text"], _parse_label(obj["label"], where)))
    return records


def _read_csv(path: Path) -> list[tuple[str, str, int]]:
    records = []
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"text", "label"} <= set(reader.fieldnames):
            raise DatasetError(f"{path}: csv header must contain 'text' and 'label'")
        for lineno, row in enumerate(reader, start=2):
            where = f"{path}:{lineno}"
            text, label = row.get("text"), row.get("label")
            if text is None or label is None:
                raise DatasetError(f"{where}: missing text or label field")
            sample_id = str(row.get("id") or f"{lineno - 1:06d}")
            records.append((sample_id, text, _parse_label(label, where)))
    return records


def load_dataset(path: str | Path, format: str | None = None) -> list[Sample]:
    """Load jsonl or csv records into normalized Samples, in file order.

    Samples that normalize to an empty string are dropped (and counted in the
    log). Malformed records raise DatasetError naming the offending line.
    """
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"dataset file not found: {path}")
    fmt = format or path.suffix.lstrip(".").lower()
    if fmt == "jsonl":
        records = _read_jsonl(path)
    elif fmt == "csv":
        records = _read_csv(path)
    else:
        raise DatasetError(f"{path}: unknown format {fmt!r} (expected jsonl or csv)")

    samples: list[Sample] = []
    seen: set[str] = set()
    dropped = 0
    for sample_id, text, label in records:
        if sample_id in seen:
            raise DatasetError(f"{path}: duplicate sample id {sample_id!r}")
        seen.add(sample_id)
        cleaned = normalize_text(text)
        if not cleaned:
            dropped += 1
            continue
        samples.append(Sample(id=sample_id, text=cleaned, label=label))
    if dropped:
        logger.info("%s: dropped %d empty-after-normalization record(s)", path, dropped)
    return samples


@dataclass
class Vocabulary:
    """Word/index bijection with reserved pad/unk/mask slots and a frequency table."""

    itos: list[str] = field(default_factory=lambda: list(RESERVED_TOKENS))
    stoi: dict[str, int] = field(default_factory=dict)
    freqs: dict[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.stoi:
            self.stoi = {w: i for i, w in enumerate(self.itos)}

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, word: str) -> bool:
        return word in self.stoi

    @property
    def words(self) -> list[str]:
        """Non-reserved vocabulary entries, in index order."""
        return self.itos[len(RESERVED_TOKENS):]

    def word_to_id(self, word: str) -> int:
        return self.stoi.get(word, UNK_ID)

    def id_to_word(self, index: int) -> str:
        return self.itos[index]

    def freq(self, word: str) -> int:
        return self.freqs.get(word, 0)

    def encode(self, tokens: Sequence[str]) -> tuple[int, ...]:
        return tuple(self.stoi.get(t, UNK_ID) for t in tokens)

    def to_dict(self) -> dict:
        return {"itos": list(self.itos), "freqs": dict(self.freqs)}

    @classmethod
    def from_dict(cls, data: dict) -> "Vocabulary":
        return cls(itos=list(data["itos"]), freqs={w: int(c) for w, c in data["freqs"].items()})


def build_vocab(samples: Iterable[Sample], min_count: int = 1) -> Vocabulary:
    """Count words over the training corpus and keep those with freq >= min_count."""
    counts: Counter[str] = Counter()
    n = 0
    for sample in samples:
        counts.update(tokenize(sample.text))
        n += 1
    if n == 0:
        raise DatasetError("cannot build a vocabulary from an empty corpus")
    kept = sorted(
        (w for w, c in counts.items() if c >= min_count),
        key=lambda w: (-counts[w], w),
    )
    itos = list(RESERVED_TOKENS) + kept
    return Vocabulary(itos=itos, freqs={w: counts[w] for w in kept})


def tokenize_sample(sample: Sample, vocab: Vocabulary) -> TokenizedSample:
    tokens = tuple(tokenize(sample.text))
    return TokenizedSample(sample_id=sample.id, tokens=tokens, token_ids=vocab.encode(tokens))


def tokenize_corpus(samples: Sequence[Sample], vocab: Vocabulary) -> list[TokenizedSample]:
    return [tokenize_sample(s, vocab) for s in samples]


class AntonymLexicon:
    """word -> ordered antonyms; lookups are case-insensitive, first antonym wins."""

    def __init__(self, entries: dict[str, Sequence[str]] | None = None):
        self._entries: dict[str, tuple[str, ...]] = {}
        for word, antonyms in (entries or {}).items():
            self.add(word, antonyms)

    def add(self, word: str, antonyms: Sequence[str]) -> None:
        word = word.strip().lower()
        cleaned = tuple(a.strip().lower() for a in antonyms if a.strip())
        if not word or not cleaned:
            raise LexiconError(f"empty antonym entry for {word!r}")
        if word in cleaned:
            raise LexiconError(f"word {word!r} listed as its own antonym")
        self._entries[word] = cleaned

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, word: str) -> bool:
        return word.lower() in self._entries

    def first(self, word: str) -> str | None:
        """First listed antonym for `word`, or None."""
        antonyms = self._entries.get(word.lower())
        return antonyms[0] if antonyms else None

    @classmethod
    def load(cls, path: str | Path) -> "AntonymLexicon":
        """Read a tsv of `word<TAB>antonym1,antonym2,...` lines."""
        lexicon = cls()
        with Path(path).open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line.strip() or line.startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise LexiconError(f"{path}:{lineno}: expected word<TAB>antonyms")
                try:
                    lexicon.add(parts[0], parts[1].split(","))
                except LexiconError as exc:
                    raise LexiconError(f"{path}:{lineno}: {exc}") from exc
        return lexicon

    def save(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            for word in sorted(self._entries):
                fh.write(f"{word}\t{','.join(self._entries[word])}\n")


class AttributePairLexicon:
    """Paired attribute terms (e.g. gendered words); swaps are direction-closed."""

    def __init__(self, pairs: Sequence[tuple[str, str]] = ()):
        self.pairs: list[tuple[str, str]] = []
        self._swap: dict[str, str] = {}
        self._side: dict[str, str] = {}
        for term, opposite in pairs:
            self.add(term, opposite)

    def add(self, term: str, opposite: str) -> None:
        term, opposite = term.strip().lower(), opposite.strip().lower()
        if not term or not opposite:
            raise LexiconError("empty attribute term")
        if term == opposite:
            raise LexiconError(f"attribute term {term!r} paired with itself")
        if term in RESERVED_TOKENS or opposite in RESERVED_TOKENS:
            raise LexiconError("attribute terms must not collide with reserved tokens")
        for t in (term, opposite):
            if t in self._swap:
                raise LexiconError(f"attribute term {t!r} appears in more than one pair")
        self.pairs.append((term, opposite))
        self._swap[term] = opposite
        self._swap[opposite] = term
        self._side[term] = "a"
        self._side[opposite] = "b"

    def __len__(self) -> int:
        return len(self.pairs)

    def __contains__(self, word: str) -> bool:
        return word.lower() in self._swap

    def swap(self, word: str) -> str | None:
        return self._swap.get(word.lower())

    def side(self, word: str) -> str | None:
        """'a' for first-column terms, 'b' for second-column, None otherwise."""
        return self._side.get(word.lower())

    @classmethod
    def load(cls, path: str | Path) -> "AttributePairLexicon":
        """Read a tsv of `term<TAB>opposite` lines."""
        lexicon = cls()
        with Path(path).open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line.strip() or line.startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise LexiconError(f"{path}:{lineno}: expected term<TAB>opposite")
                try:
                    lexicon.add(parts[0], parts[1])
                except LexiconError as exc:
                    raise LexiconError(f"{path}:{lineno}: {exc}") from exc
        return lexicon

    def save(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            for term, opposite in self.pairs:
                fh.write(f"{term}\t{opposite}\n")
