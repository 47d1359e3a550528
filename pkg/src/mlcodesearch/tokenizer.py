"""Byte-level BPE vocabulary shared by pre-training, fine-tuning and scoring.

Training is fully deterministic: the most frequent adjacent pair is merged
first and frequency ties are broken by the lexicographically smallest
(left, right) byte pair.  The base alphabet is all 256 bytes, so any UTF-8
text is encodable and the UNK token exists only for id-space compatibility.

Pre-tokenization normalizes whitespace runs to a single space and keeps that
space as a leading byte of the following word ("ab cd" -> ["ab", " cd"]), so
decoding is the exact inverse of encoding for single-spaced text.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from collections import Counter

PAD, UNK, CLS, SEP, MASK = 0, 1, 2, 3, 4
SPECIAL_TOKENS = ("[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]")
NUM_SPECIALS = len(SPECIAL_TOKENS)
BYTE_ALPHABET_SIZE = 256
MIN_VOCAB_SIZE = NUM_SPECIALS + BYTE_ALPHABET_SIZE

DEFAULT_VOCAB_SIZE = 8192
DEFAULT_MAX_LEN = 256

VOCAB_MAGIC = "mlcodesearch-vocab"
VOCAB_FORMAT_VERSION = 1


def _pretokenize(text: str) -> list[bytes]:
    """Split into word pieces; words after the first carry a leading space."""
    words = text.split()
    out = []
    for i, w in enumerate(words):
        piece = w if i == 0 else " " + w
        out.append(piece.encode("utf-8"))
    return out


@dataclass
class Vocabulary:
    """Subword vocabulary: 5 specials, 256 byte tokens, then learned merges."""

    merges: list[tuple[bytes, bytes]]
    token_to_id: dict[bytes, int] = field(repr=False)
    id_to_token: list[bytes | None] = field(repr=False)
    _merge_ranks: dict[tuple[bytes, bytes], int] = field(repr=False)
    _word_cache: dict[bytes, tuple[int, ...]] = field(default_factory=dict, repr=False)

    @property
    def size(self) -> int:
        return len(self.id_to_token)

    @property
    def special_ids(self) -> frozenset[int]:
        return frozenset(range(NUM_SPECIALS))

    @classmethod
    def from_merges(cls, merges: list[tuple[bytes, bytes]]) -> "Vocabulary":
        """Rebuild the dense id table from the ordered merge list."""
        id_to_token: list[bytes | None] = [None] * NUM_SPECIALS
        token_to_id: dict[bytes, int] = {}
        for b in range(BYTE_ALPHABET_SIZE):
            tok = bytes([b])
            token_to_id[tok] = len(id_to_token)
            id_to_token.append(tok)
        ranks = {}
        for rank, (left, right) in enumerate(merges):
            if left not in token_to_id or right not in token_to_id:
                raise ValueError(f"merge {rank} references unknown token")
            merged = left + right
            ranks[(left, right)] = rank
            token_to_id[merged] = len(id_to_token)
            id_to_token.append(merged)
        return cls(merges=list(merges), token_to_id=token_to_id,
                   id_to_token=id_to_token, _merge_ranks=ranks)

    def _encode_word(self, word: bytes) -> tuple[int, ...]:
        cached = self._word_cache.get(word)
        if cached is not None:
            return cached
        parts = [bytes([b]) for b in word]
        while len(parts) > 1:
            best_rank = None
            best_pair = None
            for i in range(len(parts) - 1):
                rank = self._merge_ranks.get((parts[i], parts[i + 1]))
                if rank is not None and (best_rank is None or rank < best_rank):
                    best_rank = rank
                    best_pair = (parts[i], parts[i + 1])
            if best_pair is None:
                break
            left, right = best_pair
            merged = left + right
            # collapse every occurrence of this pair left to right
            out = []
            i = 0
            while i < len(parts):
                if i < len(parts) - 1 and parts[i] == left and parts[i + 1] == right:
                    out.append(merged)
                    i += 2
                else:
                    out.append(parts[i])
                    i += 1
            parts = out
        ids = tuple(self.token_to_id[p] for p in parts)
        self._word_cache[word] = ids
        return ids

    def encode_text(self, text: str) -> list[int]:
        """Token ids for raw text, no special tokens added."""
        ids: list[int] = []
        for word in _pretokenize(text):
            ids.extend(self._encode_word(word))
        return ids

    def decode_ids(self, ids) -> str:
        """Inverse of encode_text: drops specials, joins byte tokens.

        Raises on ids outside the vocabulary.  Byte sequences cut mid
        character by truncation decode with U+FFFD replacement.
        """
        chunks = []
        for i in ids:
            i = int(i)
            if not 0 <= i < self.size:
                raise ValueError(f"token id {i} out of range for vocab of {self.size}")
            if i < NUM_SPECIALS:
                continue
            chunks.append(self.id_to_token[i])
        return b"".join(chunks).decode("utf-8", errors="replace").strip(" ")

    def save(self, path: str | os.PathLike, header_lines: tuple[str, ...] = ()) -> None:
        """Plain-text format: ordered merge list, then the full token table."""
        with open(path, "w", encoding="utf-8") as f:
            for line in header_lines:
                f.write(f"# {line}\n")
            f.write(f"{VOCAB_MAGIC} {VOCAB_FORMAT_VERSION}\n")
            f.write(f"merges {len(self.merges)}\n")
            for left, right in self.merges:
                f.write(f"{left.hex()}\t{right.hex()}\n")
            f.write(f"tokens {self.size}\n")
            for i, tok in enumerate(self.id_to_token):
                if i < NUM_SPECIALS:
                    f.write(f"{i}\t{SPECIAL_TOKENS[i]}\n")
                else:
                    f.write(f"{i}\t{tok.hex()}\n")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "Vocabulary":
        with open(path, "r", encoding="utf-8") as f:
            lines = [ln.rstrip("\n") for ln in f if not ln.startswith("#")]
        if not lines or not lines[0].startswith(VOCAB_MAGIC):
            raise ValueError(f"{path}: not a vocabulary file")
        version = int(lines[0].split()[1])
        if version != VOCAB_FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported vocabulary version {version}")
        n_merges = int(lines[1].split()[1])
        merges = []
        for ln in lines[2:2 + n_merges]:
            left_hex, right_hex = ln.split("\t")
            merges.append((bytes.fromhex(left_hex), bytes.fromhex(right_hex)))
        vocab = cls.from_merges(merges)
        # verify the stored token table agrees with the reconstruction
        table_start = 2 + n_merges
        n_tokens = int(lines[table_start].split()[1])
        if n_tokens != vocab.size:
            raise ValueError(f"{path}: token table size {n_tokens} != {vocab.size}")
        return vocab


def train_bpe(texts, vocab_size: int = DEFAULT_VOCAB_SIZE, seed: int = 0) -> Vocabulary:
    """Learn a byte-level BPE vocabulary from an iterable of texts.

    Deterministic regardless of seed (the argument is kept for interface
    symmetry with the other corpus operations).  Merges stop when the
    vocabulary is full or no adjacent pair occurs at least twice.
    """
    if vocab_size < MIN_VOCAB_SIZE:
        raise ValueError(
            f"vocab_size must be >= {MIN_VOCAB_SIZE} "
            f"({NUM_SPECIALS} specials + {BYTE_ALPHABET_SIZE} bytes), got {vocab_size}")
    word_freq: Counter[bytes] = Counter()
    for text in texts:
        for piece in _pretokenize(text):
            word_freq[piece] += 1
    if not word_freq:
        raise ValueError("cannot train BPE on an empty corpus")

    # each word is a mutable list of current tokens
    words = [([bytes([b]) for b in w], count) for w, count in sorted(word_freq.items())]
    merges: list[tuple[bytes, bytes]] = []
    n_merges_allowed = vocab_size - MIN_VOCAB_SIZE

    while len(merges) < n_merges_allowed:
        pair_freq: Counter[tuple[bytes, bytes]] = Counter()
        for parts, count in words:
            for i in range(len(parts) - 1):
                pair_freq[(parts[i], parts[i + 1])] += count
        if not pair_freq:
            break
        best = min(pair_freq.items(), key=lambda kv: (-kv[1], kv[0]))
        (left, right), freq = best
        if freq < 2:
            break
        merges.append((left, right))
        merged = left + right
        for parts, _ in words:
            i = 0
            while i < len(parts) - 1:
                if parts[i] == left and parts[i + 1] == right:
                    parts[i:i + 2] = [merged]
                else:
                    i += 1
    return Vocabulary.from_merges(merges)


@dataclass(frozen=True)
class EncodedSequence:
    """Fixed-length model input: [CLS] query [SEP] code [SEP] plus padding."""

    ids: tuple[int, ...]
    attention_mask: tuple[int, ...]

    def __post_init__(self):
        if len(self.ids) != len(self.attention_mask):
            raise ValueError("ids and attention_mask lengths differ")

    @property
    def length(self) -> int:
        return len(self.ids)

    @property
    def content_length(self) -> int:
        return sum(self.attention_mask)


def decode_pair(seq: EncodedSequence, vocab: Vocabulary) -> tuple[str, str]:
    """Recover (query, code) from an encoded pair by splitting at [SEP]."""
    segments: list[list[int]] = [[]]
    for i in seq.ids:
        if i == SEP:
            segments.append([])
        elif i not in (CLS, PAD, MASK):
            segments[-1].append(i)
    query = vocab.decode_ids(segments[0]) if segments else ""
    code = vocab.decode_ids(segments[1]) if len(segments) > 1 else ""
    return query, code


def encode_pair(query: str, code: str, vocab: Vocabulary,
                max_len: int = DEFAULT_MAX_LEN) -> EncodedSequence:
    """Concatenate query and code into one model input.

    When the pair is too long the code tail is trimmed first, then the query
    tail; queries are short and carry most of the ranking signal.
    """
    if max_len < 3:
        raise ValueError(f"max_len must fit [CLS] [SEP] [SEP], got {max_len}")
    q_ids = vocab.encode_text(query)
    c_ids = vocab.encode_text(code)
    budget = max_len - 3
    overflow = len(q_ids) + len(c_ids) - budget
    if overflow > 0:
        cut = min(overflow, len(c_ids))
        c_ids = c_ids[:len(c_ids) - cut]
        overflow -= cut
    if overflow > 0:
        q_ids = q_ids[:len(q_ids) - overflow]
    ids = [CLS] + q_ids + [SEP] + c_ids + [SEP]
    n_content = len(ids)
    ids.extend([PAD] * (max_len - n_content))
    mask = [1] * n_content + [0] * (max_len - n_content)
    return EncodedSequence(ids=tuple(ids), attention_mask=tuple(mask))
