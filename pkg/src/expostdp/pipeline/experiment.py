"""Accuracy-first synthetic data experiment.

Each repeat releases the label-pairwise marginals of the training split with
the Brownian mechanism, stepping through an increasing list of budgets. After
each release, synthetic data is generated and a naive-Bayes classifier trained
on it is scored on the private validation split. A noisy check (plain Gaussian
or SVT) decides whether the accuracy threshold is met.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..accounting import log_spaced_schedule
from ..composition import (
    AccuracyFirstEngine,
    GaussianCheck,
    GaussianCheckConfig,
    NoiseReductionBase,
    SvtCheck,
    schedule_selector,
    svt_calibrate,
)
from ..noise_reduction import NoiseReductionSession, brownian_release
from .data import CategoricalDataset, Split, split
from .synth import (
    evaluate_marginals,
    flatten,
    label_queries,
    synthesize,
    train_and_score,
    unflatten,
)

log = logging.getLogger(__name__)

CHECKERS = ("gaussian", "svt")
RECORD_COLUMNS = (
    "repeat", "checker", "step", "eps_step", "eps_cum", "noisy_val_acc",
    "clean_val_acc", "halted", "accepted_eps", "test_acc", "eps_total",
)
EXHAUSTED = "exhausted"


@dataclass
class ExperimentConfig:
    alpha: float = 20.0
    eps_query: float = 0.01
    eps_check: float = 0.01
    schedule: list[float] = field(default_factory=lambda: log_spaced_schedule(0.01, 1.0, 7))
    threshold: float | None = None
    repeats: int = 50
    checker: str = "gaussian"
    seed: int = 0
    synth_repeats: int = 10
    split_seed: int = 0
    # evaluate, but never release, the schedule steps after a halt
    trace: bool = True

    def __post_init__(self):
        if self.checker not in CHECKERS:
            raise ValueError(f"checker must be one of {CHECKERS}, got {self.checker!r}")
        if self.repeats < 1 or self.synth_repeats < 1:
            raise ValueError("repeats must be positive")


class AccuracyEvaluator:
    """Mean naive-Bayes accuracy over several synthetic datasets from one release.

    Synthesis randomness is keyed by (seed, repeat, step), so two checkers
    seeing the same release also see the same synthetic data.
    """

    def __init__(self, dataset: CategoricalDataset, parts: Split, synth_repeats: int):
        self.template = dataset
        self.train = dataset.subset(parts.train)
        self.validation = dataset.subset(parts.validation)
        self.test = dataset.subset(parts.test)
        self.queries = label_queries(dataset)
        tables, self.sensitivity = evaluate_marginals(self.train, self.queries)
        self.fx = flatten(tables)
        self.synth_repeats = synth_repeats

    def scores(self, vector: np.ndarray, key: Sequence[int]) -> tuple[float, float]:
        """(validation accuracy, test accuracy), each averaged over synthetic repeats."""
        tables = unflatten(vector, self.queries)
        val, test = [], []
        for j in range(self.synth_repeats):
            rng = np.random.default_rng([*key, j])
            syn = synthesize(self.template, tables, self.train.row_count, rng)
            val.append(train_and_score(syn, self.validation))
            test.append(train_and_score(syn, self.test))
        return float(np.mean(val)), float(np.mean(test))


def derive_threshold(dataset: CategoricalDataset, parts: Split, cfg: ExperimentConfig, runs: int = 10) -> tuple[float, float, float]:
    """Midpoint between the non-private accuracy and the accuracy at the lowest budget.

    Returns ``(threshold, non_private_acc, lowest_eps_acc)``.
    """
    ev = AccuracyEvaluator(dataset, parts, cfg.synth_repeats)
    clean, _ = ev.scores(ev.fx, (cfg.seed, 1_000_003))
    low = []
    for r in range(runs):
        session = NoiseReductionSession(ev.fx, ev.sensitivity, cfg.alpha)
        out = brownian_release(session, cfg.schedule[0], np.random.default_rng([cfg.seed, 1_000_004, r]))
        low.append(ev.scores(out.payload, (cfg.seed, 1_000_005, r))[0])
    low_acc = float(np.mean(low))
    return (clean + low_acc) / 2, clean, low_acc


def make_checker(cfg: ExperimentConfig, n_validation: int, rng: np.random.Generator):
    delta_acc = 1.0 / n_validation
    if cfg.checker == "gaussian":
        return GaussianCheck(GaussianCheckConfig(cfg.alpha, delta_acc, len(cfg.schedule), cfg.eps_check, cfg.threshold))
    svt_cfg = svt_calibrate(cfg.alpha, delta_acc, cfg.eps_check, cfg.threshold)
    return SvtCheck(svt_cfg, rng)


def run_repeat(cfg: ExperimentConfig, ev: AccuracyEvaluator, parts: Split, repeat: int,
               checker_factory: Callable | None = None) -> list[dict]:
    release_rng = np.random.default_rng([cfg.seed, repeat, 0])
    check_rng = np.random.default_rng([cfg.seed, repeat, 1])
    if checker_factory is None:
        checker = make_checker(cfg, len(parts.validation), check_rng)
    else:
        checker = checker_factory(cfg, len(parts.validation), check_rng)
    m = len(cfg.schedule)
    steps: list[dict] = []

    def stopper(validation, payload, _rng):
        k = len(steps)
        val_acc, test_acc = ev.scores(payload, (cfg.seed, repeat, 2, k))
        row = {"clean_val_acc": val_acc, "test_acc": test_acc, "noisy_val_acc": None, "halted": None}
        steps.append(row)
        if k == m - 1:
            # no check after the last release: nothing is left to try
            return False
        halt = checker(val_acc, check_rng)
        row["noisy_val_acc"] = getattr(checker, "last_noisy", None)
        row["halted"] = int(halt)
        return halt

    base = NoiseReductionBase(lambda _train: ev.fx, ev.sensitivity, cfg.alpha, "brownian")
    engine = AccuracyFirstEngine(
        parts.train, parts.validation, base, schedule_selector(cfg.schedule), stopper,
        cfg.eps_check, m,
    )
    result = engine.run(release_rng)

    accepted = result.eps_cum[-1] if result.halted else EXHAUSTED
    eps_total = cfg.eps_query + result.eps_total
    eps_cum = list(result.eps_cum)
    eps_steps = list(result.eps_steps)
    accepted_test = steps[result.t - 1]["test_acc"]
    if cfg.trace and result.t < m:
        # diagnostic continuation of the same noise path; not part of the release
        session = base.session
        for k in range(result.t, m):
            eps = cfg.schedule[k]
            out = brownian_release(session, eps, release_rng)
            val_acc, test_acc = ev.scores(out.payload, (cfg.seed, repeat, 2, k))
            steps.append({"clean_val_acc": val_acc, "test_acc": test_acc, "noisy_val_acc": None, "halted": None})
            eps_steps.append(eps - eps_cum[-1])
            eps_cum.append(eps)

    records = []
    for k, row in enumerate(steps):
        records.append({
            "repeat": repeat,
            "checker": cfg.checker,
            "step": k + 1,
            "eps_step": eps_steps[k],
            "eps_cum": eps_cum[k],
            "noisy_val_acc": row["noisy_val_acc"],
            "clean_val_acc": row["clean_val_acc"],
            "halted": row["halted"],
            "accepted_eps": accepted,
            "test_acc": accepted_test,
            "eps_total": eps_total,
        })
    return records


def run_experiment(cfg: ExperimentConfig, dataset: CategoricalDataset, parts: Split | None = None,
                   checker_factory: Callable | None = None) -> list[dict]:
    """Run ``cfg.repeats`` accuracy-first repeats; one record per release step."""
    if parts is None:
        parts = split(dataset, cfg.split_seed)
    if cfg.threshold is None:
        cfg.threshold, clean, low = derive_threshold(dataset, parts, cfg)
        log.info("derived threshold %.4f (non-private %.4f, lowest budget %.4f)", cfg.threshold, clean, low)
    ev = AccuracyEvaluator(dataset, parts, cfg.synth_repeats)
    records = []
    for r in range(cfg.repeats):
        records.extend(run_repeat(cfg, ev, parts, r, checker_factory))
    return records


def accepted_budgets(records: Sequence[dict], schedule: Sequence[float]) -> list[float]:
    """Budget charged per repeat; exhausted runs count as the final budget."""
    out = {}
    for rec in records:
        acc = rec["accepted_eps"]
        out[rec["repeat"]] = schedule[-1] if acc == EXHAUSTED else float(acc)
    return [out[k] for k in sorted(out)]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def records_to_csv(records: Sequence[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RECORD_COLUMNS)
    for rec in records:
        writer.writerow([_fmt(rec[c]) for c in RECORD_COLUMNS])
    return buf.getvalue()
