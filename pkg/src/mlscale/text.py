"""Text to hashed feature vectors: cleaning, stop words, stemming, hashing, TF-IDF."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable, Iterable

import numpy as np
import scipy.sparse as sp

from . import kernels

_NON_WORD = re.compile(r"[\W_]+")

# (suffix, replacement) pairs; each strictly shortens the token
FRENCH_PLURAL_RULES = (
    ("eaux", "eau"),
    ("aux", "al"),
    ("eux", "eu"),
    ("s", ""),
)
MIN_STEM = 3


def clean(text):
    """Lowercase, blank out punctuation and undecodable characters, split on whitespace."""
    return _NON_WORD.sub(" ", text.lower()).split()


def load_stoplist(path=None):
    """Stop words from ``path`` (one per line), or the built-in French list."""
    if path is None:
        raw = resources.files("mlscale").joinpath("data/stopwords_fr.txt").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            raw = fh.read()
    return frozenset(w.strip().lower() for w in raw.splitlines() if w.strip())


DEFAULT_STOPLIST = load_stoplist()


def remove_stopwords(tokens, stoplist=DEFAULT_STOPLIST):
    return [t for t in tokens if t not in stoplist]


def stem(token, rules=FRENCH_PLURAL_RULES):
    """Rule-based suffix stripper applied until no rule fires.

    A rule fires only if the result keeps at least three characters; a
    trailing ``s`` is not stripped after another ``s``.
    """
    if len(token) < MIN_STEM:
        return token
    changed = True
    while changed:
        changed = False
        for suffix, repl in rules:
            if not token.endswith(suffix):
                continue
            base = token[: len(token) - len(suffix)]
            if suffix == "s" and base.endswith("s"):
                continue
            cand = base + repl
            if len(cand) >= MIN_STEM:
                token = cand
                changed = True
                break
    return token


def grams(tokens, ngram=1):
    """Unigrams, or bigrams of consecutive tokens joined by a space."""
    if ngram == 1:
        return list(tokens)
    if ngram == 2:
        return [f"{a} {b}" for a, b in zip(tokens, tokens[1:])]
    raise ValueError("ngram must be 1 or 2")


def hash_features(tokens, n_hash, ngram=1, signed=True):
    """Hashed count vector of one token list as sorted ``(indices, counts)``.

    Bucket = MurmurHash3 (seed 0) mod ``n_hash``; with ``signed`` each gram
    contributes +-1 according to an independent hash (seed 1). Buckets whose
    signed contributions cancel to zero are dropped.
    """
    if n_hash < 1:
        raise ValueError("n_hash must be at least 1")
    g = grams(tokens, ngram)
    if not g:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    idx, sign = kernels.hash_grams(g, n_hash, signed)
    uniq, inv = np.unique(idx, return_inverse=True)
    counts = np.zeros(uniq.shape[0], dtype=np.int64)
    np.add.at(counts, inv, sign)
    keep = counts != 0
    return uniq[keep], counts[keep]


STAGES = ("counts", "tfidf")


@dataclass
class HashedMatrix:
    """Document x feature matrix (``n_docs x n_hash``, CSR) at a pipeline stage."""

    matrix: sp.csr_matrix
    stage: str = "counts"

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ValueError(f"stage must be one of {STAGES}")
        self.matrix = sp.csr_matrix(self.matrix)
        self.matrix.sort_indices()

    @property
    def n_docs(self):
        return self.matrix.shape[0]

    @property
    def n_hash(self):
        return self.matrix.shape[1]

    def row(self, i):
        s, e = self.matrix.indptr[i], self.matrix.indptr[i + 1]
        return self.matrix.indices[s:e], self.matrix.data[s:e]

    @property
    def rows(self):
        return [list(zip(*map(np.ndarray.tolist, self.row(i)))) for i in range(self.n_docs)]

    def save(self, path):
        """Sparse triplet text: header ``n_docs n_hash stage`` then ``doc feature weight``."""
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        with open(path, "w") as fh:
            fh.write(f"{self.n_docs} {self.n_hash} {self.stage}\n")
            if self.stage == "counts":
                for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
                    fh.write(f"{r} {c} {int(v)}\n")
            else:
                for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
                    fh.write(f"{r} {c} {float(v)!r}\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            header = fh.readline().split()
            if len(header) != 3 or header[2] not in STAGES:
                raise ValueError(f"{path}: bad HashedMatrix header")
            n_docs, n_hash, stage = int(header[0]), int(header[1]), header[2]
            body = np.loadtxt(fh, ndmin=2)
        if body.size == 0:
            body = np.zeros((0, 3))
        dtype = np.int64 if stage == "counts" else np.float64
        m = sp.csr_matrix((body[:, 2].astype(dtype), (body[:, 0].astype(np.int64),
                                                     body[:, 1].astype(np.int64))),
                          shape=(n_docs, n_hash))
        return cls(m, stage)


@dataclass
class TextPipeline:
    """Clean, drop stop words, stem, then hash into ``n_hash`` buckets."""

    n_hash: int = 60000
    ngram: int = 1
    signed: bool = True
    stoplist: frozenset = field(default=DEFAULT_STOPLIST)
    stemmer: Callable[[str], str] | None = stem

    def tokens(self, text):
        toks = remove_stopwords(clean(text), self.stoplist)
        if self.stemmer is not None:
            toks = [self.stemmer(t) for t in toks]
        return toks

    def transform(self, docs: Iterable[str]):
        """Hashed count matrix of ``docs``; a pure function of the documents and config."""
        if self.n_hash < 1:
            raise ValueError("n_hash must be at least 1")
        all_grams, doc_of = [], []
        n_docs = 0
        for i, text in enumerate(docs):
            g = grams(self.tokens(text), self.ngram)
            all_grams.extend(g)
            doc_of.extend([i] * len(g))
            n_docs = i + 1
        if all_grams:
            idx, sign = kernels.hash_grams(all_grams, self.n_hash, self.signed)
        else:
            idx = sign = np.zeros(0, dtype=np.int64)
        m = sp.coo_matrix((sign, (np.asarray(doc_of, dtype=np.int64), idx)),
                          shape=(n_docs, self.n_hash)).tocsr()
        m.sum_duplicates()
        m.eliminate_zeros()
        return HashedMatrix(m, "counts")


def vectorize(docs, n_hash=60000, ngram=1, signed=True, stoplist=DEFAULT_STOPLIST, stemmer=stem):
    return TextPipeline(n_hash, ngram, signed, stoplist, stemmer).transform(docs)


@dataclass(frozen=True)
class IdfWeights:
    n_hash: int
    idf: np.ndarray
    n_docs: int
    doc_freq: np.ndarray


def tfidf_fit(counts):
    """Smooth inverse document frequencies ``log((D + 1) / (f + 1))`` from training counts.

    ``f`` counts the documents where a feature is nonzero (either sign).
    """
    if counts.stage != "counts":
        raise ValueError("tfidf_fit expects a counts-stage matrix")
    m = counts.matrix
    nz = m.data != 0
    f = np.bincount(m.indices[nz], minlength=counts.n_hash).astype(np.int64)
    D = counts.n_docs
    idf = np.log((D + 1.0) / (f + 1.0))
    return IdfWeights(counts.n_hash, idf, D, f)


def tfidf_transform(counts, idf):
    """Weights ``count * idf`` using weights fitted on the training documents."""
    if counts.n_hash != idf.n_hash:
        raise ValueError(f"n_hash mismatch: matrix {counts.n_hash}, idf {idf.n_hash}")
    if counts.stage != "counts":
        raise ValueError("tfidf_transform expects a counts-stage matrix")
    m = counts.matrix.astype(np.float64)
    m = sp.csr_matrix(m @ sp.diags(idf.idf))
    m.eliminate_zeros()
    return HashedMatrix(m, "tfidf")


def read_corpus(path, labeled=True):
    """One document per line, optionally ``label<TAB>text``. Returns ``(labels, docs)``."""
    labels, docs = [], []
    with open(path, encoding="utf-8", errors="replace") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if labeled:
                if "\t" not in line:
                    raise ValueError(f"{path}:{lineno}: missing label field")
                lab, text = line.split("\t", 1)
                labels.append(lab)
            else:
                text = line
            docs.append(text)
    return (labels if labeled else None), docs


def save_idf(path, idf):
    """Header ``n_hash D`` then one ``idf doc_freq`` line per feature."""
    with open(path, "w") as fh:
        fh.write(f"{idf.n_hash} {idf.n_docs}\n")
        for v, f in zip(idf.idf, idf.doc_freq):
            fh.write(f"{float(v)!r} {int(f)}\n")


def load_idf(path):
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: bad idf header")
        n_hash, D = int(header[0]), int(header[1])
        body = np.loadtxt(fh, ndmin=2)
    if body.shape != (n_hash, 2):
        raise ValueError(f"{path}: expected {n_hash} idf lines")
    return IdfWeights(n_hash, body[:, 0].copy(), D, body[:, 1].astype(np.int64))
