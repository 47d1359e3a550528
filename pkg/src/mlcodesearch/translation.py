"""Translation orchestration: pluggable backends, write-through cache, batching.

The neural MT system itself is an external service reached over JSON/HTTP;
for tests and offline runs there are deterministic mock backends.  Docstrings
are passed to the backend verbatim (no markup stripping or truncation), and
strings the backend leaves untranslated pass through unchanged.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import requests

from .corpus import CorpusRecord

DEFAULT_BEAM_SIZE = 3
DEFAULT_BATCH_SIZE = 32
DEFAULT_MAX_RETRIES = 3
BACKTRANSLATION_PIVOTS = ("fr", "ja", "zh")


class TranslationBackendError(RuntimeError):
    """Backend kept failing after the configured retries."""


@dataclass(frozen=True)
class TranslationRequest:
    """An ordered batch of texts to translate between two language tags."""

    texts: tuple[str, ...]
    source_lang: str
    target_lang: str
    beam_size: int = DEFAULT_BEAM_SIZE

    def __post_init__(self):
        if not self.texts:
            raise ValueError("request must contain at least one text")
        if self.source_lang == self.target_lang:
            raise ValueError(f"source and target are both {self.source_lang!r}")
        if self.beam_size < 1:
            raise ValueError(f"beam_size must be >= 1, got {self.beam_size}")


def cache_key(text: str, source_lang: str, target_lang: str, beam_size: int) -> str:
    """Content hash identifying one translation; stable across processes."""
    payload = json.dumps([text, source_lang, target_lang, beam_size],
                         ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class TranslationCache:
    """Append-only key/value store, one JSON object per line.

    Reads are lock-free on an in-memory dict; writes are serialized and
    flushed so interrupted runs lose at most the line being written.
    """

    def __init__(self, path: str | os.PathLike | None = None,
                 header_lines: Sequence[str] = ()):
        self._store: dict[str, str] = {}
        self._lock = threading.Lock()
        self._path = os.fspath(path) if path is not None else None
        self._fh = None
        if self._path is not None:
            exists = os.path.exists(self._path)
            if exists:
                with open(self._path, "r", encoding="utf-8") as f:
                    for line in f:
                        line = line.strip()
                        if not line or line.startswith("#"):
                            continue
                        obj = json.loads(line)
                        self._store[obj["key"]] = obj["translation"]
            self._fh = open(self._path, "a", encoding="utf-8")
            if not exists:
                for line in header_lines:
                    self._fh.write(f"# {line}\n")
                self._fh.flush()

    def get(self, key: str) -> str | None:
        return self._store.get(key)

    def put(self, key: str, translation: str) -> None:
        with self._lock:
            if self._store.get(key) == translation:
                return
            self._store[key] = translation
            if self._fh is not None:
                self._fh.write(json.dumps({"key": key, "translation": translation},
                                          ensure_ascii=False) + "\n")
                self._fh.flush()

    def __contains__(self, key: str) -> bool:
        return key in self._store

    def __len__(self) -> int:
        return len(self._store)

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None


class ReversibleMockTranslator:
    """Reverses the word order; translating twice restores the input exactly."""

    def __init__(self):
        self.calls = 0

    def translate(self, texts, source_lang, target_lang, beam_size):
        self.calls += 1
        return [" ".join(reversed(t.split(" "))) for t in texts]


class LossyMockTranslator:
    """Drops every 5th whitespace token, simulating translation loss."""

    def __init__(self, drop_every: int = 5):
        self.drop_every = drop_every
        self.calls = 0

    def translate(self, texts, source_lang, target_lang, beam_size):
        self.calls += 1
        out = []
        for t in texts:
            tokens = t.split()
            kept = [tok for i, tok in enumerate(tokens)
                    if (i + 1) % self.drop_every != 0]
            out.append(" ".join(kept))
        return out


class MappingTranslator:
    """Fixed lookup table keyed by (text, source, target); unknown texts pass through."""

    def __init__(self, table: dict[tuple[str, str, str], str]):
        self.table = dict(table)
        self.calls = 0

    def translate(self, texts, source_lang, target_lang, beam_size):
        self.calls += 1
        return [self.table.get((t, source_lang, target_lang), t) for t in texts]


class HttpTranslator:
    """JSON-over-HTTP client for an external MT service.

    Wire protocol: POST {texts, source_lang, target_lang, beam_size} to the
    endpoint; the response body is {"translations": [...]} aligned with the
    request order.
    """

    def __init__(self, endpoint: str, timeout: float = 60.0,
                 session: requests.Session | None = None):
        self.endpoint = endpoint
        self.timeout = timeout
        self.session = session or requests.Session()

    def translate(self, texts, source_lang, target_lang, beam_size):
        body = {"texts": list(texts), "source_lang": source_lang,
                "target_lang": target_lang, "beam_size": beam_size}
        resp = self.session.post(self.endpoint, json=body, timeout=self.timeout)
        resp.raise_for_status()
        translations = resp.json()["translations"]
        if len(translations) != len(texts):
            raise TranslationBackendError(
                f"backend returned {len(translations)} translations for {len(texts)} texts")
        return translations


def _chunk_ranges(n: int, size: int) -> list[tuple[int, int]]:
    return [(i, min(i + size, n)) for i in range(0, n, size)]


def translate_batch(req: TranslationRequest, backend,
                    cache: TranslationCache | None = None, *,
                    batch_size: int = DEFAULT_BATCH_SIZE,
                    max_retries: int = DEFAULT_MAX_RETRIES,
                    retry_wait: float = 0.0,
                    max_concurrency: int = 1,
                    on_error: str = "raise") -> list[str | None]:
    """Translate req.texts, preserving order; cached texts skip the backend.

    Backend failures are retried up to max_retries times per chunk.  After
    that, on_error="raise" aborts with TranslationBackendError while
    on_error="mark" leaves None for each affected text so the caller can
    skip or abort.
    """
    if on_error not in ("raise", "mark"):
        raise ValueError(f"on_error must be 'raise' or 'mark', got {on_error!r}")
    results: list[str | None] = [None] * len(req.texts)
    keys = [cache_key(t, req.source_lang, req.target_lang, req.beam_size)
            for t in req.texts]
    missing: list[int] = []
    for i, key in enumerate(keys):
        hit = cache.get(key) if cache is not None else None
        if hit is not None:
            results[i] = hit
        else:
            missing.append(i)

    def run_chunk(span: tuple[int, int]) -> None:
        lo, hi = span
        idxs = missing[lo:hi]
        texts = [req.texts[i] for i in idxs]
        last_exc: Exception | None = None
        for attempt in range(max_retries):
            try:
                out = backend.translate(texts, req.source_lang,
                                        req.target_lang, req.beam_size)
                if len(out) != len(texts):
                    raise TranslationBackendError(
                        f"backend returned {len(out)} translations for {len(texts)} texts")
            except Exception as exc:  # noqa: BLE001 - any backend fault is retryable
                last_exc = exc
                if retry_wait:
                    time.sleep(retry_wait)
                continue
            for i, translated in zip(idxs, out):
                results[i] = translated
                if cache is not None:
                    cache.put(keys[i], translated)
            return
        if on_error == "raise":
            raise TranslationBackendError(
                f"backend failed {max_retries} times for "
                f"{req.source_lang}->{req.target_lang} chunk of {len(texts)}"
            ) from last_exc
        # on_error == "mark": leave None markers in place

    spans = _chunk_ranges(len(missing), batch_size)
    if max_concurrency > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=max_concurrency) as pool:
            futures = [pool.submit(run_chunk, span) for span in spans]
            for fut in futures:
                fut.result()
    else:
        for span in spans:
            run_chunk(span)
    return results


@dataclass(frozen=True)
class RoundTrip:
    """Original English text, its pivot translation, and the round trip back."""

    original: str
    pivot: str | None
    round_trip: str | None


def backtranslate_corpus(records: Sequence[CorpusRecord], pivot_lang: str,
                         backend, cache: TranslationCache | None = None,
                         *, beam_size: int = DEFAULT_BEAM_SIZE,
                         **batch_kwargs) -> list[RoundTrip]:
    """Translate English docstrings to pivot_lang and back for BLEU scoring.

    Pivot and round-trip texts are cached under independent keys.  With
    on_error="mark", a failed forward translation yields a RoundTrip with
    None fields instead of aborting.
    """
    if not records:
        return []
    bad_nl = {r.nl for r in records if r.nl != "en"}
    if bad_nl:
        raise ValueError(f"back-translation starts from English records, got nl={sorted(bad_nl)}")
    if pivot_lang == "en":
        raise ValueError("pivot language must differ from English")
    originals = [r.docstring for r in records]
    pivots = translate_batch(
        TranslationRequest(tuple(originals), "en", pivot_lang, beam_size),
        backend, cache, **batch_kwargs)
    ok = [i for i, p in enumerate(pivots) if p is not None]
    round_trips: list[str | None] = [None] * len(records)
    if ok:
        back = translate_batch(
            TranslationRequest(tuple(pivots[i] for i in ok), pivot_lang, "en", beam_size),
            backend, cache, **batch_kwargs)
        for i, text in zip(ok, back):
            round_trips[i] = text
    return [RoundTrip(original=o, pivot=p, round_trip=b)
            for o, p, b in zip(originals, pivots, round_trips)]


@dataclass(frozen=True)
class CoveragePair:
    source_lang: str
    target_lang: str
    cached: int
    missing: int


@dataclass
class CoverageReport:
    """How much of a corpus the cache already covers, per language pair."""

    pairs: list[CoveragePair] = field(default_factory=list)

    def to_tsv(self) -> str:
        lines = ["source\ttarget\tcached\tmissing\ttotal"]
        for p in self.pairs:
            lines.append(f"{p.source_lang}\t{p.target_lang}\t{p.cached}"
                         f"\t{p.missing}\t{p.cached + p.missing}")
        return "\n".join(lines) + "\n"


def translation_coverage_report(records: Sequence[CorpusRecord],
                                cache: TranslationCache,
                                target_langs: Sequence[str] = BACKTRANSLATION_PIVOTS,
                                source_lang: str = "en",
                                beam_size: int = DEFAULT_BEAM_SIZE) -> CoverageReport:
    """Count cached vs missing docstring translations per language pair."""
    report = CoverageReport()
    for target in target_langs:
        cached = sum(
            1 for r in records
            if cache_key(r.docstring, source_lang, target, beam_size) in cache)
        report.pairs.append(CoveragePair(source_lang=source_lang, target_lang=target,
                                         cached=cached, missing=len(records) - cached))
    return report
