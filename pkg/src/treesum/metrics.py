"""ROUGE and dependency-relation preservation scores.

ROUGE-1/2 use clipped n-gram counts, ROUGE-L uses the longest common
subsequence; both report (precision, recall, F1).  Relation preservation
compares directed (head, dependent) word pairs between a system tree and
source/reference relations: strict matching requires string equality,
lenient matching accepts embedding cosine similarity of at least a
threshold for both words, with the threshold 1.0 degenerating to strict.
Matching is one-to-one, greedy by descending pair similarity.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class Relation:
    """A directed dependency: direction is part of identity."""

    head: str
    dependent: str

    def __post_init__(self):
        if not self.head or not self.dependent:
            raise MetricsError("relation words must be non-empty")


def relations_from_heads(words, heads):
    """Word-to-word relations of a parse; arcs from R are skipped because
    R is not a word."""
    out = []
    for dep_pos, head_pos in enumerate(heads, start=1):
        if head_pos != 0:
            out.append(Relation(head=words[head_pos - 1],
                                dependent=words[dep_pos - 1]))
    return out


def prf(overlap, n_candidate, n_reference):
    """Precision/recall/F1 from an overlap count; empty sides give 0."""
    p = overlap / n_candidate if n_candidate else 0.0
    r = overlap / n_reference if n_reference else 0.0
    f = 2.0 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f


def _ngram_counts(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(candidate, reference, n):
    """Clipped n-gram overlap (precision, recall, F1)."""
    if n < 1:
        raise MetricsError("n must be at least 1")
    cand = _ngram_counts(candidate, n)
    ref = _ngram_counts(reference, n)
    overlap = sum(min(count, ref[g]) for g, count in cand.items())
    return prf(overlap, sum(cand.values()), sum(ref.values()))


def rouge_l(candidate, reference):
    """Longest-common-subsequence (precision, recall, F1), beta = 1."""
    m, n = len(candidate), len(reference)
    if m == 0 or n == 0:
        return 0.0, 0.0, 0.0
    table = np.zeros((m + 1, n + 1), dtype=np.int64)
    for i in range(1, m + 1):
        for j in range(1, n + 1):
            if candidate[i - 1] == reference[j - 1]:
                table[i, j] = table[i - 1, j - 1] + 1
            else:
                table[i, j] = max(table[i - 1, j], table[i, j - 1])
    return prf(int(table[m, n]), m, n)


class EmbeddingTable:
    """Word vectors for lenient relation matching."""

    def __init__(self, vectors=None, dim=None):
        self.vectors = dict(vectors or {})
        self.dim = dim
        for word, vec in self.vectors.items():
            if self.dim is None:
                self.dim = len(vec)
            if len(vec) != self.dim:
                raise MetricsError(
                    f"vector for {word!r} has dimension {len(vec)}, "
                    f"expected {self.dim}")

    def __contains__(self, word):
        return word in self.vectors

    def __len__(self):
        return len(self.vectors)

    def cosine(self, u, v):
        a, b = self.vectors[u], self.vectors[v]
        na, nb = np.linalg.norm(a), np.linalg.norm(b)
        if na == 0.0 or nb == 0.0:
            return 0.0
        return float(np.dot(a, b) / (na * nb))


def load_embeddings(path) -> EmbeddingTable:
    """Parse ``word v1 v2 ... vd`` lines; first occurrence wins on
    duplicates; dimension mismatches report the line number."""
    vectors = {}
    dim = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            word, values = parts[0], parts[1:]
            if not values:
                raise MetricsError(f"{path}:{lineno}: no vector values")
            try:
                vec = np.array([float(v) for v in values], dtype=np.float64)
            except ValueError:
                raise MetricsError(f"{path}:{lineno}: unparseable value")
            if dim is None:
                dim = len(vec)
            elif len(vec) != dim:
                raise MetricsError(
                    f"{path}:{lineno}: dimension {len(vec)} != {dim}")
            vectors.setdefault(word, vec)
    return EmbeddingTable(vectors, dim)


def _word_similarity(u, v, table):
    """1.0 on string equality; embedding cosine otherwise; words missing
    from the table fall back to string equality (similarity 0 here)."""
    if u == v:
        return 1.0
    if table is not None and u in table and v in table:
        return table.cosine(u, v)
    if table is not None:
        for w in (u, v):
            if w not in table:
                logger.debug("word %r missing from embedding table; "
                             "strict fallback", w)
    return 0.0


def relation_matches(predicted, target, table=None, sigma=1.0):
    """One-to-one matched count at threshold sigma.

    A predicted relation may match a target relation when both the head
    pair and the dependent pair reach similarity sigma; sigma = 1.0 is
    exact string matching.  Pairs are taken greedily by descending
    min-similarity, ties by first occurrence.  Returns
    (matched, n_predicted, n_target) so callers can pool counts.
    """
    if not 0.0 < sigma <= 1.0:
        raise MetricsError("sigma must lie in (0, 1]")
    predicted = list(predicted)
    target = list(target)
    if not predicted or not target:
        return 0, len(predicted), len(target)
    eligible = []
    for i, p in enumerate(predicted):
        for j, t in enumerate(target):
            if sigma >= 1.0:
                if p.head == t.head and p.dependent == t.dependent:
                    eligible.append((1.0, i, j))
                continue
            hs = _word_similarity(p.head, t.head, table)
            ds = _word_similarity(p.dependent, t.dependent, table)
            if hs >= sigma and ds >= sigma:
                eligible.append((min(hs, ds), i, j))
    eligible.sort(key=lambda e: (-e[0], e[1], e[2]))
    used_p, used_t = set(), set()
    matched = 0
    for _, i, j in eligible:
        if i in used_p or j in used_t:
            continue
        used_p.add(i)
        used_t.add(j)
        matched += 1
    return matched, len(predicted), len(target)


def relation_f(predicted, target, table=None, sigma=1.0):
    """Relation-preservation (precision, recall, F1) at threshold sigma."""
    return prf(*relation_matches(predicted, target, table, sigma))


def threshold_sweep(predicted, target, table, sigmas=(1.0, 0.9, 0.8, 0.7)):
    """Rows of (sigma, precision, recall, F1) for plotting."""
    return [(s, *relation_f(predicted, target, table, s)) for s in sigmas]
