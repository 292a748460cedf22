"""Bag-of-words corpora: UCI-style file format, round-tripping, synthetic data.

File format: three header lines (D, V, NNZ), then one ``docID wordID count``
triple per line with 1-based ids.  Duplicate (doc, word) rows have their
counts summed; documents without rows are valid empty documents.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .exceptions import CorpusFormatError

__all__ = ["Document", "Corpus", "load_corpus", "save_corpus", "load_vocab",
           "make_synthetic_corpus"]


class Document(NamedTuple):
    """Sparse word-type counts of one document (0-based word ids)."""

    ids: np.ndarray
    counts: np.ndarray

    @property
    def n_words(self) -> float:
        return float(self.counts.sum())


def _make_document(ids, counts) -> Document:
    ids = np.asarray(ids, dtype=np.int64)
    counts = np.asarray(counts, dtype=float)
    order = np.argsort(ids)
    return Document(ids[order], counts[order])


@dataclass
class Corpus:
    """A list of documents over a fixed vocabulary."""

    docs: list
    vocab_size: int
    vocab: list = None

    def __post_init__(self):
        for i, doc in enumerate(self.docs):
            if doc.ids.size and (doc.ids.min() < 0 or doc.ids.max() >= self.vocab_size):
                raise CorpusFormatError(f"document {i} has word ids outside [0, {self.vocab_size})")
            if np.any(doc.counts < 1):
                raise CorpusFormatError(f"document {i} has counts below 1")

    @property
    def n_docs(self) -> int:
        return len(self.docs)

    @property
    def n_total_words(self) -> float:
        return float(sum(doc.counts.sum() for doc in self.docs))

    def __len__(self):
        return len(self.docs)

    def __getitem__(self, i):
        return self.docs[i]


def load_corpus(path) -> Corpus:
    """Parse a UCI bag-of-words file; deterministic document order as in file."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    header = []
    body_start = 0
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            header.append(int(line.split()[0]) if len(line.split()) == 1 else None)
        except ValueError:
            raise CorpusFormatError("header must be three integer lines", line=lineno)
        if header[-1] is None:
            raise CorpusFormatError("header must be three integer lines", line=lineno)
        if len(header) == 3:
            body_start = lineno
            break
    if len(header) < 3:
        raise CorpusFormatError("missing header (need D, V, NNZ lines)")
    n_docs, vocab_size, nnz = header
    if n_docs < 0 or vocab_size < 1:
        raise CorpusFormatError("header values out of range")
    accum = [dict() for _ in range(n_docs)]
    n_rows = 0
    for lineno, line in enumerate(lines[body_start:], start=body_start + 1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 3:
            raise CorpusFormatError("expected 'docID wordID count'", line=lineno)
        try:
            doc_id, word_id, count = int(parts[0]), int(parts[1]), int(parts[2])
        except ValueError:
            raise CorpusFormatError("expected integer triple", line=lineno)
        if not 1 <= doc_id <= n_docs:
            raise CorpusFormatError(f"doc id {doc_id} outside [1, {n_docs}]", line=lineno)
        if not 1 <= word_id <= vocab_size:
            raise CorpusFormatError(f"word id {word_id} outside [1, {vocab_size}]", line=lineno)
        if count < 1:
            raise CorpusFormatError("counts must be >= 1", line=lineno)
        d = accum[doc_id - 1]
        d[word_id - 1] = d.get(word_id - 1, 0) + count
        n_rows += 1
    docs = [_make_document(list(d.keys()), list(d.values())) for d in accum]
    return Corpus(docs, vocab_size)


def save_corpus(corpus: Corpus, path):
    """Write the UCI format; rows sorted by (doc, word) so round trips are identity."""
    rows = []
    for i, doc in enumerate(corpus.docs):
        for wid, cnt in zip(doc.ids, doc.counts):
            rows.append((i + 1, int(wid) + 1, int(cnt)))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{corpus.n_docs}\n{corpus.vocab_size}\n{len(rows)}\n")
        for d, w, c in rows:
            fh.write(f"{d} {w} {c}\n")


def load_vocab(path) -> list:
    """One token per line."""
    with open(path, "r", encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh if line.strip()]


def make_synthetic_corpus(n_docs: int, vocab_size: int, n_topics: int,
                          mean_doc_len: float, seed: int = 0,
                          doc_conc: float = 0.3, topic_conc: float = 0.05,
                          n_families: int = 0, family_share: float = 0.5):
    """Generate a desk-scale corpus from an LDA-style generative model.

    Topics are drawn from a sparse Dirichlet; when ``n_families`` > 0 the
    topics are grouped into families sharing a common word block
    (``family_share`` of each topic's mass), which makes topic merging an
    attractive local optimum for inference.  Returns (Corpus, true topics).
    """
    rng = np.random.default_rng(seed)
    topics = rng.dirichlet(np.full(vocab_size, topic_conc), size=n_topics)
    if n_families > 0:
        family = np.repeat(np.arange(n_families), int(np.ceil(n_topics / n_families)))[:n_topics]
        shared = rng.dirichlet(np.full(vocab_size, topic_conc), size=n_families)
        topics = (1.0 - family_share) * topics + family_share * shared[family]
    docs = []
    for _ in range(n_docs):
        theta = rng.dirichlet(np.full(n_topics, doc_conc))
        n_d = max(1, rng.poisson(mean_doc_len))
        word_probs = theta @ topics
        counts = rng.multinomial(n_d, word_probs)
        ids = np.nonzero(counts)[0]
        docs.append(_make_document(ids, counts[ids]))
    return Corpus(docs, vocab_size), topics
