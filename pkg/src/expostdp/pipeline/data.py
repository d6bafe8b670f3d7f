"""Categorical datasets: Adult ingestion, an offline generator, and splitting."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd

log = logging.getLogger(__name__)


@dataclass
class CategoricalDataset:
    """Rows of category indices, one column per variable.

    ``categories[c]`` lists the category names of column ``c``; cell ``[r, c]``
    indexes into it.
    """

    columns: list[str]
    categories: list[list[str]]
    rows: np.ndarray
    label: str | None = None

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.int64).reshape(-1, len(self.columns))
        if len(self.categories) != len(self.columns):
            raise ValueError("need a category list per column")
        sizes = np.array(self.sizes)
        if self.rows.size and (np.any(self.rows < 0) or np.any(self.rows >= sizes)):
            raise ValueError("cell index outside its column's categories")
        if self.label is not None and self.label not in self.columns:
            raise ValueError(f"label column {self.label!r} not in dataset")

    @property
    def sizes(self) -> list[int]:
        return [len(c) for c in self.categories]

    @property
    def row_count(self) -> int:
        return self.rows.shape[0]

    def __len__(self):
        return self.row_count

    def col(self, name: str) -> int:
        return self.columns.index(name)

    @property
    def label_index(self) -> int:
        if self.label is None:
            raise ValueError("dataset has no label column")
        return self.col(self.label)

    def subset(self, idx) -> CategoricalDataset:
        return CategoricalDataset(self.columns, self.categories, self.rows[idx], self.label)

    def with_rows(self, rows) -> CategoricalDataset:
        return CategoricalDataset(self.columns, self.categories, rows, self.label)


@dataclass(frozen=True)
class Schema:
    """Preprocessing recipe for a raw CSV.

    ``bins`` maps a numeric column to ``(edges, open_top)``: values fall in
    ``[edges[k], edges[k+1])`` with the last edge included, and ``open_top``
    adds a final ``>= edges[-1]`` category. ``positive`` columns become a
    binary "is positive" flag. Every other kept column is categorical.
    """

    columns: tuple[str, ...]
    drop: tuple[str, ...] = ()
    bins: tuple = ()
    positive: tuple[str, ...] = ()
    label: str | None = None
    missing: str = "?"


ADULT_SCHEMA = Schema(
    columns=(
        "age", "workclass", "fnlwgt", "education", "educational-num", "marital-status",
        "occupation", "relationship", "race", "gender", "capital-gain", "capital-loss",
        "hours-per-week", "native-country", "income",
    ),
    drop=("fnlwgt", "educational-num"),
    bins=(
        ("age", (tuple(range(10, 91, 10)), False)),
        ("hours-per-week", (tuple(range(0, 91, 10)), True)),
    ),
    positive=("capital-gain", "capital-loss"),
    label="income",
)


def _bin_labels(edges, open_top):
    labels = [f"[{a},{b})" for a, b in zip(edges[:-1], edges[1:])]
    if open_top:
        labels.append(f">={edges[-1]}")
    else:
        labels[-1] = labels[-1][:-1] + "]"
    return labels


def discretize_numeric(values: np.ndarray, edges: Sequence[float], open_top: bool) -> np.ndarray:
    """Bin numeric values; raises on values outside the covered range."""
    edges = np.asarray(edges, dtype=float)
    values = np.asarray(values, dtype=float)
    idx = np.searchsorted(edges, values, side="right") - 1
    if open_top:
        ok = values >= edges[0]
    else:
        idx = np.where(values == edges[-1], len(edges) - 2, idx)
        ok = (values >= edges[0]) & (values <= edges[-1])
    if not np.all(ok):
        bad = values[~ok][:3]
        raise ValueError(f"values {bad.tolist()} outside bin edges {edges[0]}..{edges[-1]}")
    return idx


def load_and_discretize(csv_path, schema: Schema = ADULT_SCHEMA) -> CategoricalDataset:
    """Read a CSV and apply ``schema``: drop columns and missing rows, bin, binarize."""
    df = pd.read_csv(csv_path, dtype=str, skipinitialspace=True)
    df.columns = [c.strip() for c in df.columns]
    unknown = sorted(set(df.columns) - set(schema.columns))
    missing_cols = sorted(set(schema.columns) - set(df.columns))
    if unknown or missing_cols:
        raise ValueError(f"unknown columns {unknown}, missing columns {missing_cols}")

    df = df.drop(columns=list(schema.drop))
    df = df.apply(lambda s: s.str.strip())
    bad = df.isin([schema.missing, ""]).any(axis=1) | df.isna().any(axis=1)
    if bad.any():
        log.info("dropping %d rows with missing values", int(bad.sum()))
    df = df[~bad].reset_index(drop=True)

    bins = dict(schema.bins)
    columns, categories, cells = [], [], []
    for name in df.columns:
        raw = df[name]
        if name in bins or name in schema.positive:
            try:
                num = pd.to_numeric(raw).to_numpy(dtype=float)
            except ValueError as exc:
                raise ValueError(f"column {name!r}: {exc}") from None
            if name in bins:
                edges, open_top = bins[name]
                idx = discretize_numeric(num, edges, open_top)
                cats = _bin_labels(edges, open_top)
            else:
                idx = (num > 0).astype(np.int64)
                cats = ["not positive", "positive"]
        else:
            if name == schema.label:
                raw = raw.str.rstrip(".")
            cats = sorted(raw.unique())
            idx = pd.Categorical(raw, categories=cats).codes.astype(np.int64)
        columns.append(name)
        categories.append(list(cats))
        cells.append(idx)
    rows = np.column_stack(cells) if cells else np.zeros((0, 0), dtype=np.int64)
    return CategoricalDataset(columns, categories, rows, schema.label)


GENERATED_SIZES = (8, 7, 16, 7, 14, 6, 5, 2, 2, 2, 10, 12)


def generate_dataset(n_rows: int = 20_000, seed: int = 0, sizes: Sequence[int] = GENERATED_SIZES,
                     label_rate: float = 0.25, signal: float = 0.6) -> CategoricalDataset:
    """Synthetic stand-in for Adult: 12 categorical features plus a binary label.

    Each feature is drawn from a label-dependent categorical distribution, so
    the label is predictable from the features. ``signal`` scales how far the
    two class conditionals are apart.
    """
    rng = np.random.default_rng(seed)
    label = (rng.random(n_rows) < label_rate).astype(np.int64)
    cols, cats, cells = [], [], []
    for k, size in enumerate(sizes):
        base = rng.normal(0.0, 1.0, size)
        shift = rng.normal(0.0, signal, size)
        logits = np.stack([base, base + shift])
        probs = np.exp(logits - logits.max(axis=1, keepdims=True))
        probs /= probs.sum(axis=1, keepdims=True)
        u = rng.random(n_rows)
        cdf = np.cumsum(probs, axis=1)[label]
        cells.append(np.minimum((u[:, None] > cdf).sum(axis=1), size - 1))
        cols.append(f"x{k}")
        cats.append([f"c{j}" for j in range(size)])
    cols.append("label")
    cats.append(["neg", "pos"])
    cells.append(label)
    return CategoricalDataset(cols, cats, np.column_stack(cells), "label")


@dataclass(frozen=True)
class Split:
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray


def split(dataset: CategoricalDataset, seed: int, fractions=(0.4, 0.4, 0.2)) -> Split:
    """Random train/validation/test split, validation and test stratified by label.

    Sizes are rounded to the nearest row, the test split taking the remainder.
    Returns sorted row indices.
    """
    lab = dataset.rows[:, dataset.label_index]
    n = dataset.row_count
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    if n_train + n_val > n:
        raise ValueError("split fractions exceed the dataset size")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    train, rest = perm[:n_train], perm[n_train:]

    n_rest = rest.size
    rest_lab = lab[rest]
    classes = np.unique(rest_lab)
    share = n_val / n_rest if n_rest else 0.0
    quotas = {c: np.sum(rest_lab == c) * share for c in classes}
    take = {c: int(np.floor(q)) for c, q in quotas.items()}
    # largest remainder so the validation split has exactly n_val rows
    order = sorted(classes, key=lambda c: (-(quotas[c] - take[c]), c))
    for c in order[: n_val - sum(take.values())]:
        take[c] += 1
    val, test = [], []
    for c in classes:
        members = rest[rest_lab == c]
        val.append(members[: take[c]])
        test.append(members[take[c]:])
    return Split(np.sort(train), np.sort(np.concatenate(val)), np.sort(np.concatenate(test)))
