"""Corpus handling: record files, fine-tuning pairs, test sets, data regimes.

Record files are line-delimited JSON objects with fields
{id, docstring, code, pl, nl, url, partition}.  Lines starting with '#' are
header comments and are skipped on load.
"""

from __future__ import annotations

import json
import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .rng import SplitMix64

NATURAL_LANGUAGES = ("en", "fr", "ja", "zh")
PROGRAMMING_LANGUAGES = ("go", "python", "java", "php")
PARTITIONS = ("train", "valid", "test")

RECORD_FIELDS = ("id", "docstring", "code", "pl", "nl", "url", "partition")

DEFAULT_TEST_SETS = 3
DEFAULT_TEST_SET_SIZE = 1000

# resample attempts before giving up on a distinct negative / distinct code
_MAX_RESAMPLE_FACTOR = 100


@dataclass(frozen=True)
class CorpusRecord:
    """One docstring/code pair with language tags and provenance."""

    id: str
    docstring: str
    code: str
    pl: str
    nl: str
    url: str = ""
    partition: str = "train"

    def invariant_violation(self) -> str | None:
        """Name of the first violated invariant, or None if valid."""
        if not self.docstring.strip():
            return "empty-docstring"
        if not self.code.strip():
            return "empty-code"
        if self.pl not in PROGRAMMING_LANGUAGES:
            return "bad-pl"
        if self.nl not in NATURAL_LANGUAGES:
            return "bad-nl"
        if self.partition not in PARTITIONS:
            return "bad-partition"
        return None

    def to_json(self) -> str:
        obj = {name: getattr(self, name) for name in RECORD_FIELDS}
        return json.dumps(obj, ensure_ascii=False)


@dataclass(frozen=True)
class PairExample:
    """Labeled (query, code) fine-tuning instance; label 1 iff originally paired."""

    query: str
    code: str
    label: int
    nl: str
    pl: str


@dataclass(frozen=True)
class TestEntry:
    id: str
    query: str
    code: str


@dataclass(frozen=True)
class TestSet:
    """Ordered positive pairs that act as each other's distractor pool."""

    entries: tuple[TestEntry, ...]
    size: int
    seed: int

    def __post_init__(self):
        if len(self.entries) != self.size:
            raise ValueError(f"size {self.size} != {len(self.entries)} entries")
        codes = [e.code for e in self.entries]
        if len(set(codes)) != len(codes):
            raise ValueError("duplicate codes in test set make rank ill-defined")


@dataclass(frozen=True)
class DataRegime:
    """Which (nl, pl) groups feed pre-training."""

    name: str
    nls: tuple[str, ...]
    pls: tuple[str, ...]

    def __post_init__(self):
        if self.name not in ("no-pretraining", "all-to-one", "all-to-all"):
            raise ValueError(f"unknown regime {self.name!r}")
        if self.name == "all-to-one" and len(self.pls) != 1:
            raise ValueError("all-to-one requires exactly one programming language")
        if self.name == "all-to-all" and set(self.pls) != set(PROGRAMMING_LANGUAGES):
            raise ValueError("all-to-all requires all four programming languages")
        if self.name == "no-pretraining" and self.pls:
            raise ValueError("no-pretraining takes no language groups")

    @classmethod
    def no_pretraining(cls) -> "DataRegime":
        return cls("no-pretraining", (), ())

    @classmethod
    def all_to_one(cls, pl: str, nls: Sequence[str] = NATURAL_LANGUAGES) -> "DataRegime":
        if pl not in PROGRAMMING_LANGUAGES:
            raise ValueError(f"unknown programming language {pl!r}")
        return cls("all-to-one", tuple(nls), (pl,))

    @classmethod
    def all_to_all(cls, nls: Sequence[str] = NATURAL_LANGUAGES) -> "DataRegime":
        return cls("all-to-all", tuple(nls), PROGRAMMING_LANGUAGES)

    @classmethod
    def parse(cls, spec: str) -> "DataRegime":
        """Parse CLI syntax: no-pretraining | all-to-all | all-to-one:<pl>."""
        if spec == "no-pretraining":
            return cls.no_pretraining()
        if spec == "all-to-all":
            return cls.all_to_all()
        if spec.startswith("all-to-one:"):
            return cls.all_to_one(spec.split(":", 1)[1])
        raise ValueError(f"unknown regime spec {spec!r}")


@dataclass
class LoadResult:
    """Valid records plus per-reason counts of skipped lines."""

    records: list[CorpusRecord]
    skipped: Counter = field(default_factory=Counter)

    @property
    def total_skipped(self) -> int:
        return sum(self.skipped.values())


def load_corpus(path: str | os.PathLike, expected_pl: str | None = None) -> LoadResult:
    """Read a record file, keeping only records that satisfy the invariants.

    Invalid lines are skipped and counted by reason; an unreadable file is
    fatal.  If expected_pl is given, records with a different tag are skipped.
    """
    result = LoadResult(records=[])
    seen_ids: set[str] = set()
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError:
                result.skipped["malformed-json"] += 1
                continue
            if not isinstance(obj, dict) or any(k not in obj for k in RECORD_FIELDS):
                result.skipped["missing-field"] += 1
                continue
            try:
                record = CorpusRecord(**{k: obj[k] for k in RECORD_FIELDS})
            except TypeError:
                result.skipped["bad-field-type"] += 1
                continue
            reason = record.invariant_violation()
            if reason is not None:
                result.skipped[reason] += 1
                continue
            if expected_pl is not None and record.pl != expected_pl:
                result.skipped["pl-mismatch"] += 1
                continue
            if record.id in seen_ids:
                result.skipped["duplicate-id"] += 1
                continue
            seen_ids.add(record.id)
            result.records.append(record)
    return result


def write_corpus(path: str | os.PathLike, records: Iterable[CorpusRecord],
                 header_lines: Sequence[str] = ()) -> int:
    """Write records as line-delimited JSON; returns the number written."""
    n = 0
    with open(path, "w", encoding="utf-8") as f:
        for line in header_lines:
            f.write(f"# {line}\n")
        for record in records:
            f.write(record.to_json() + "\n")
            n += 1
    return n


def make_finetune_pairs(records: Sequence[CorpusRecord], seed: int) -> list[PairExample]:
    """Balanced fine-tuning pairs: one positive and one negative per record.

    The negative pairs each query with a uniformly resampled code from the
    same record set, redrawn until the source docstrings differ so no
    negative is secretly a positive.
    """
    if len(records) < 2:
        raise ValueError("need at least 2 records to draw a negative")
    langs = {(r.nl, r.pl) for r in records}
    if len(langs) != 1:
        raise ValueError(f"records span multiple language groups: {sorted(langs)}")
    nl, pl = langs.pop()
    rng = SplitMix64(seed)
    n = len(records)
    pairs: list[PairExample] = []
    max_attempts = _MAX_RESAMPLE_FACTOR * n
    for i, record in enumerate(records):
        pairs.append(PairExample(query=record.docstring, code=record.code,
                                 label=1, nl=nl, pl=pl))
        for attempt in range(max_attempts):
            j = rng.randbelow(n)
            if j != i and records[j].docstring != records[i].docstring:
                break
        else:
            raise ValueError(
                f"could not draw a negative for record {record.id!r}: "
                "all other docstrings are identical to its own")
        pairs.append(PairExample(query=record.docstring, code=records[j].code,
                                 label=0, nl=nl, pl=pl))
    return pairs


def sample_test_sets(records: Sequence[CorpusRecord], k: int = DEFAULT_TEST_SETS,
                     n: int = DEFAULT_TEST_SET_SIZE, seed: int = 0) -> list[TestSet]:
    """k test sets of n entries each, sampled without replacement per set.

    Sets are drawn independently (they may overlap).  Entries whose code text
    duplicates an already chosen code are resampled so ranks stay well
    defined.  Records must come from the test partition.
    """
    bad = [r.partition for r in records if r.partition != "test"]
    if bad:
        raise ValueError(f"{len(bad)} records are not from the test partition")
    if len(records) < n:
        raise ValueError(f"pool of {len(records)} records cannot fill a set of {n}")
    if k < 1:
        raise ValueError("k must be >= 1")
    base = SplitMix64(seed)
    sets: list[TestSet] = []
    for _ in range(k):
        set_seed = base.next_u64()
        rng = SplitMix64(set_seed)
        pool = list(range(len(records)))
        top = len(pool)
        chosen: list[int] = []
        seen_codes: set[str] = set()
        while len(chosen) < n:
            if top == 0:
                raise ValueError(
                    f"pool has fewer than {n} records with distinct code texts")
            j = rng.randbelow(top)
            pool[j], pool[top - 1] = pool[top - 1], pool[j]
            top -= 1
            idx = pool[top]
            code = records[idx].code
            if code in seen_codes:
                continue
            seen_codes.add(code)
            chosen.append(idx)
        entries = tuple(TestEntry(id=records[i].id, query=records[i].docstring,
                                  code=records[i].code) for i in chosen)
        sets.append(TestSet(entries=entries, size=n, seed=set_seed))
    return sets


def group_by_language(records: Iterable[CorpusRecord]) -> dict[tuple[str, str], list[CorpusRecord]]:
    """Bucket records by (nl, pl)."""
    groups: dict[tuple[str, str], list[CorpusRecord]] = {}
    for r in records:
        groups.setdefault((r.nl, r.pl), []).append(r)
    return groups


def assemble_pretraining(groups: Mapping[tuple[str, str], Sequence[CorpusRecord]],
                         regime: DataRegime) -> list[CorpusRecord]:
    """Concatenate the language groups selected by the regime.

    Group order is canonical (nl-major, pl-minor in tag-list order) so the
    assembled corpus is identical across runs.
    """
    if regime.name == "no-pretraining":
        return []
    out: list[CorpusRecord] = []
    nls = [nl for nl in NATURAL_LANGUAGES if nl in regime.nls]
    pls = [pl for pl in PROGRAMMING_LANGUAGES if pl in regime.pls]
    for nl in nls:
        for pl in pls:
            if (nl, pl) not in groups:
                raise ValueError(f"missing language group ({nl}, {pl})")
            out.extend(groups[(nl, pl)])
    return out


_TSV_ESCAPES = {"\\": "\\\\", "\t": "\\t", "\n": "\\n", "\r": "\\r"}


def _tsv_escape(text: str) -> str:
    for raw, escaped in _TSV_ESCAPES.items():
        text = text.replace(raw, escaped)
    return text


@dataclass(frozen=True)
class AuditSheet:
    """Annotation sheet with labels withheld, plus the separate answer key."""

    sheet_tsv: str
    answers_tsv: str
    n_rows: int


def audit_sample(pairs: Sequence[PairExample], n: int, seed: int) -> AuditSheet:
    """Draw n pairs for manual label auditing.

    The sheet carries a blank human_label column; original labels go to the
    answer file only, keyed by row number.
    """
    if n > len(pairs):
        raise ValueError(f"cannot audit {n} of {len(pairs)} pairs")
    if n < 0:
        raise ValueError("n must be >= 0")
    rng = SplitMix64(seed)
    indices = rng.sample_indices(len(pairs), n)
    sheet_lines = ["row\tnl\tpl\tquery\tcode\thuman_label"]
    answer_lines = ["row\tlabel"]
    for row, idx in enumerate(indices):
        p = pairs[idx]
        sheet_lines.append(
            f"{row}\t{p.nl}\t{p.pl}\t{_tsv_escape(p.query)}\t{_tsv_escape(p.code)}\t")
        answer_lines.append(f"{row}\t{p.label}")
    return AuditSheet(sheet_tsv="\n".join(sheet_lines) + "\n",
                      answers_tsv="\n".join(answer_lines) + "\n",
                      n_rows=n)
