"""Back-translation quality scoring with uni-gram BLEU and threshold filtering.

The score follows the Papineni BLEU definition restricted to n=1: clipped
unigram precision times the brevity penalty min(1, exp(1 - r/c)).  No
smoothing is applied; with unigrams a zero score means genuinely disjoint
token sets.  Filtering keeps records whose score is strictly greater than
the threshold.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

from .corpus import CorpusRecord
from .translation import RoundTrip


def tokenize(text: str, lowercase: bool = True) -> list[str]:
    """BLEU tokenization: optional lowercasing, split on Unicode whitespace."""
    if lowercase:
        text = text.lower()
    return text.split()


def unigram_bleu(candidate: Sequence[str], reference: Sequence[str]) -> float:
    """Clipped unigram precision times brevity penalty, in [0, 1].

    candidate/reference are token sequences.  An empty candidate scores 0;
    an empty reference is an error.
    """
    r = len(reference)
    if r == 0:
        raise ValueError("reference must be non-empty")
    c = len(candidate)
    if c == 0:
        return 0.0
    cand_counts = Counter(candidate)
    ref_counts = Counter(reference)
    clipped = sum(min(count, ref_counts[tok]) for tok, count in cand_counts.items())
    precision = clipped / c
    brevity = min(1.0, math.exp(1.0 - r / c))
    return brevity * precision


@dataclass(frozen=True)
class ScoredRecord:
    """A corpus record with the uni-gram BLEU of its round-trip docstring."""

    record: CorpusRecord
    bleu1: float

    def __post_init__(self):
        if not 0.0 <= self.bleu1 <= 1.0:
            raise ValueError(f"bleu1 must be in [0, 1], got {self.bleu1}")


def score_round_trips(records: Sequence[CorpusRecord],
                      round_trips: Sequence[RoundTrip],
                      tokenizer: Callable[[str], list[str]] = tokenize) -> list[ScoredRecord]:
    """Score each record's round trip against its original docstring.

    Round trips that failed translation (None) score 0.
    """
    if len(records) != len(round_trips):
        raise ValueError(f"{len(records)} records vs {len(round_trips)} round trips")
    scored = []
    for record, trip in zip(records, round_trips):
        if trip.round_trip is None:
            bleu1 = 0.0
        else:
            bleu1 = unigram_bleu(tokenizer(trip.round_trip), tokenizer(trip.original))
        scored.append(ScoredRecord(record=record, bleu1=bleu1))
    return scored


def filter_by_threshold(scored: Sequence[ScoredRecord], threshold: float) -> list[CorpusRecord]:
    """Keep records scoring strictly higher than the threshold, order preserved."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {threshold}")
    return [s.record for s in scored if s.bleu1 > threshold]


@dataclass
class FilterReport:
    """Retained-size table over a threshold sweep, one row per (nl, split)."""

    thresholds: tuple[float, ...]
    counts: dict[tuple[str, str], list[int]]

    def count(self, nl: str, split: str, threshold: float) -> int:
        row = self.counts[(nl, split)]
        return row[self.thresholds.index(threshold)]

    def check_monotone(self) -> None:
        for key, row in self.counts.items():
            for a, b in zip(row, row[1:]):
                if b > a:
                    raise AssertionError(f"retained counts increase for {key}: {row}")

    def to_tsv(self) -> str:
        """Rows grouped by split, one line per natural language."""
        header = "split\tnl\t" + "\t".join(f"{t:g}" for t in self.thresholds)
        lines = [header]
        splits = sorted({split for _, split in self.counts})
        for split in splits:
            for (nl, s), row in sorted(self.counts.items()):
                if s != split:
                    continue
                lines.append(f"{split}\t{nl}\t" + "\t".join(str(c) for c in row))
        return "\n".join(lines) + "\n"


def threshold_sweep(scored_by_group: Mapping[tuple[str, str], Sequence[ScoredRecord]],
                    thresholds: Sequence[float]) -> FilterReport:
    """Retained counts per (nl, split) across an ascending threshold list."""
    thresholds = tuple(thresholds)
    if list(thresholds) != sorted(thresholds):
        raise ValueError(f"thresholds must be sorted ascending, got {list(thresholds)}")
    for t in thresholds:
        if not 0.0 <= t <= 1.0:
            raise ValueError(f"threshold must be in [0, 1], got {t}")
    counts = {
        key: [sum(1 for s in group if s.bleu1 > t) for t in thresholds]
        for key, group in scored_by_group.items()
    }
    report = FilterReport(thresholds=thresholds, counts=counts)
    report.check_monotone()
    return report
