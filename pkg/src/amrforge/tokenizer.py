"""Trainable subword tokenizer with exact round trips on its corpus.

Text is split into words and whitespace runs; whitespace runs are vocabulary
entries of their own, so decoding is plain concatenation and reproduces the
original string exactly as long as every character was seen in training.
Words are encoded by byte-pair merges learned over the corpus. Tokens that
must stay atomic for the graph serialization alphabet (the parentheses and
any role token such as ":ARG0") are injected as whole-word vocabulary
entries and never split.

Ids 0, 1, 2 are pad, end-of-sequence, and unknown.
"""

from __future__ import annotations

import re

PAD, EOS, UNK = "<pad>", "<eos>", "<unk>"

_SPLIT_RE = re.compile(r"\S+|\s+")
_ROLE_RE = re.compile(r"^:[^\s()]+$")


class Tokenizer:
    def __init__(self, vocab, merges, atomic):
        self.vocab = list(vocab)
        self.merges = [tuple(m) for m in merges]
        self.atomic = set(atomic)
        self.token_to_id = {tok: i for i, tok in enumerate(self.vocab)}
        self.merge_rank = {m: i for i, m in enumerate(self.merges)}
        self.pad_id = self.token_to_id[PAD]
        self.eos_id = self.token_to_id[EOS]
        self.unk_id = self.token_to_id[UNK]
        self._word_cache = {}

    def __len__(self):
        return len(self.vocab)

    def _bpe(self, word):
        if word in self._word_cache:
            return self._word_cache[word]
        pieces = list(word)
        while len(pieces) > 1:
            best_rank, best_at = None, None
            for i in range(len(pieces) - 1):
                rank = self.merge_rank.get((pieces[i], pieces[i + 1]))
                if rank is not None and (best_rank is None or rank < best_rank):
                    best_rank, best_at = rank, i
            if best_at is None:
                break
            pieces[best_at : best_at + 2] = [pieces[best_at] + pieces[best_at + 1]]
        self._word_cache[word] = pieces
        return pieces

    def encode(self, text: str, add_eos: bool = False):
        ids = []
        for chunk in _SPLIT_RE.findall(text):
            if chunk.strip() == "" or chunk in self.token_to_id:
                ids.append(self.token_to_id.get(chunk, self.unk_id))
                continue
            for piece in self._bpe(chunk):
                ids.append(self.token_to_id.get(piece, self.unk_id))
        if add_eos:
            ids.append(self.eos_id)
        return ids

    def decode(self, ids) -> str:
        parts = []
        for i in ids:
            token = self.vocab[i]
            if token in (PAD, EOS, UNK):
                continue
            parts.append(token)
        return "".join(parts)

    def to_dict(self):
        return {
            "vocab": self.vocab,
            "merges": [list(m) for m in self.merges],
            "atomic": sorted(self.atomic),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["vocab"], d["merges"], d["atomic"])


def detect_atomic(corpus):
    """Serialization alphabet tokens that must encode to single ids."""
    atomic = set()
    for text in corpus:
        for word in text.split():
            if word in ("(", ")") or _ROLE_RE.match(word):
                atomic.add(word)
    return atomic


def train_tokenizer(corpus, vocab_size, atomic=None) -> Tokenizer:
    """Learn byte-pair merges over the corpus until the vocabulary reaches
    vocab_size (or saturates at whole words).

    Raises ValueError when vocab_size cannot even hold the special tokens,
    the atomic tokens, and the corpus alphabet.
    """
    if not corpus:
        raise ValueError("empty corpus")
    if atomic is None:
        atomic = detect_atomic(corpus)
    atomic = set(atomic)

    word_freq = {}
    whitespace = set()
    chars = set()
    for text in corpus:
        for chunk in _SPLIT_RE.findall(text):
            if chunk.strip() == "":
                whitespace.add(chunk)
            elif chunk not in atomic:
                word_freq[chunk] = word_freq.get(chunk, 0) + 1
                chars.update(chunk)

    base = [PAD, EOS, UNK]
    base += sorted(atomic)
    base += sorted(whitespace)
    base += sorted(chars)
    if vocab_size < len(base):
        raise ValueError(
            f"vocab_size {vocab_size} below required base of {len(base)} "
            "(specials + atomic tokens + corpus alphabet)"
        )

    words = {word: list(word) for word in word_freq}
    vocab = list(base)
    in_vocab = set(vocab)
    merges = []
    while len(vocab) < vocab_size:
        pair_freq = {}
        for word, pieces in words.items():
            freq = word_freq[word]
            for i in range(len(pieces) - 1):
                pair = (pieces[i], pieces[i + 1])
                pair_freq[pair] = pair_freq.get(pair, 0) + freq
        if not pair_freq:
            break
        best = min(pair_freq, key=lambda p: (-pair_freq[p], p))
        merges.append(best)
        merged = best[0] + best[1]
        if merged not in in_vocab:
            vocab.append(merged)
            in_vocab.add(merged)
        for word, pieces in words.items():
            i = 0
            while i < len(pieces) - 1:
                if (pieces[i], pieces[i + 1]) == best:
                    pieces[i : i + 2] = [merged]
                else:
                    i += 1
    return Tokenizer(vocab, merges, atomic)
