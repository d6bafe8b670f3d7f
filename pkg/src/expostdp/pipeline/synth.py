"""Marginal queries, a noisy naive-Bayes synthesizer and a naive-Bayes classifier."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import CategoricalDataset

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MarginalQuery:
    """Counts over every value combination of 1-3 columns (given by index)."""

    attrs: tuple[int, ...]
    shape: tuple[int, ...]

    @classmethod
    def on(cls, dataset: CategoricalDataset, *names: str) -> MarginalQuery:
        attrs = tuple(dataset.col(n) for n in names)
        return cls.of(dataset, attrs)

    @classmethod
    def of(cls, dataset: CategoricalDataset, attrs: Sequence[int]) -> MarginalQuery:
        attrs = tuple(int(a) for a in attrs)
        if not 1 <= len(attrs) <= 3 or len(set(attrs)) != len(attrs):
            raise ValueError(f"marginal needs 1-3 distinct columns, got {attrs}")
        if any(a < 0 or a >= len(dataset.columns) for a in attrs):
            raise ValueError(f"column index out of range in {attrs}")
        return cls(attrs, tuple(dataset.sizes[a] for a in attrs))

    @property
    def cells(self) -> int:
        return math.prod(self.shape)


@dataclass
class MarginalTable:
    query: MarginalQuery
    counts: np.ndarray
    noisy: bool = False

    def table(self) -> np.ndarray:
        return self.counts.reshape(self.query.shape)


def marginal_counts(dataset: CategoricalDataset, query: MarginalQuery) -> np.ndarray:
    flat = np.ravel_multi_index(tuple(dataset.rows[:, a] for a in query.attrs), query.shape)
    return np.bincount(flat, minlength=query.cells).astype(float)


def evaluate_marginals(dataset: CategoricalDataset, queries: Sequence[MarginalQuery]):
    """Exact marginal tables and their joint l2 sensitivity.

    Adding or removing one row changes one cell of each marginal by one, so
    the concatenated count vector has sensitivity sqrt(len(queries)).
    """
    tables = [MarginalTable(q, marginal_counts(dataset, q)) for q in queries]
    return tables, math.sqrt(len(queries))


def label_queries(dataset: CategoricalDataset) -> list[MarginalQuery]:
    """Label 1-way marginal plus every (feature, label) pair."""
    y = dataset.label_index
    qs = [MarginalQuery.of(dataset, (y,))]
    qs += [MarginalQuery.of(dataset, (c, y)) for c in range(len(dataset.columns)) if c != y]
    return qs


def flatten(tables: Sequence[MarginalTable]) -> np.ndarray:
    return np.concatenate([t.counts for t in tables])


def unflatten(vector: np.ndarray, queries: Sequence[MarginalQuery], noisy: bool = True) -> list[MarginalTable]:
    out, pos = [], 0
    for q in queries:
        out.append(MarginalTable(q, np.asarray(vector[pos:pos + q.cells], dtype=float), noisy))
        pos += q.cells
    if pos != len(vector):
        raise ValueError("vector length does not match the queries")
    return out


def _normalize(counts: np.ndarray, what: str) -> np.ndarray:
    clamped = np.clip(counts, 0.0, None)
    total = clamped.sum(axis=-1, keepdims=True)
    empty = total[..., 0] <= 0
    if np.any(empty):
        log.warning("all-zero noisy marginal for %s; falling back to uniform", what)
    uniform = np.full_like(clamped, 1.0 / clamped.shape[-1])
    with np.errstate(invalid="ignore", divide="ignore"):
        probs = clamped / total
    return np.where(empty[..., None], uniform, probs)


def synthesize(dataset_like: CategoricalDataset, tables: Sequence[MarginalTable], n_rows: int,
               rng: np.random.Generator) -> CategoricalDataset:
    """Sample synthetic rows from noisy label and (feature, label) marginals.

    Negative counts are clamped to zero before normalising. The label is drawn
    from its 1-way marginal and each feature independently from its noisy
    conditional given the label. Columns absent from ``tables`` are an error.
    """
    y = dataset_like.label_index
    label_probs = None
    cond = {}
    for t in tables:
        attrs = t.query.attrs
        if attrs == (y,):
            label_probs = _normalize(t.counts, "label")
        elif len(attrs) == 2 and attrs[1] == y:
            # conditional of the feature given the label: rows indexed by label
            cond[attrs[0]] = _normalize(t.table().T, dataset_like.columns[attrs[0]])
    needed = [c for c in range(len(dataset_like.columns)) if c != y]
    missing = [dataset_like.columns[c] for c in needed if c not in cond]
    if label_probs is None or missing:
        raise ValueError(f"marginals do not cover the label and features {missing}")

    rows = np.empty((n_rows, len(dataset_like.columns)), dtype=np.int64)
    labels = _sample_categorical(np.broadcast_to(label_probs, (n_rows, label_probs.size)), rng)
    rows[:, y] = labels
    for c in needed:
        rows[:, c] = _sample_categorical(cond[c][labels], rng)
    return dataset_like.with_rows(rows)


def _sample_categorical(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    cdf = np.cumsum(probs, axis=1)
    u = rng.random(probs.shape[0]) * cdf[:, -1]
    return np.minimum((u[:, None] >= cdf).sum(axis=1), probs.shape[1] - 1)


class NaiveBayes:
    """Categorical naive Bayes with add-one smoothing."""

    def fit(self, data: CategoricalDataset) -> NaiveBayes:
        if data.row_count == 0:
            raise ValueError("cannot train on an empty dataset")
        y = data.label_index
        n_classes = data.sizes[y]
        labels = data.rows[:, y]
        self.label_col = y
        self.log_prior = np.log(np.bincount(labels, minlength=n_classes) + 1.0)
        self.log_cond = {}
        for c in range(len(data.columns)):
            if c == y:
                continue
            counts = np.zeros((n_classes, data.sizes[c]))
            np.add.at(counts, (labels, data.rows[:, c]), 1.0)
            counts += 1.0
            self.log_cond[c] = np.log(counts / counts.sum(axis=1, keepdims=True))
        return self

    def predict(self, data: CategoricalDataset) -> np.ndarray:
        scores = np.tile(self.log_prior, (data.row_count, 1))
        for c, table in self.log_cond.items():
            scores += table[:, data.rows[:, c]].T
        return scores.argmax(axis=1)

    def accuracy(self, data: CategoricalDataset) -> float:
        return float(np.mean(self.predict(data) == data.rows[:, self.label_col]))


def train_and_score(synthetic: CategoricalDataset, eval_split: CategoricalDataset) -> float:
    """Accuracy on ``eval_split`` of naive Bayes trained on ``synthetic``."""
    return NaiveBayes().fit(synthetic).accuracy(eval_split)
