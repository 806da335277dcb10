#!/usr/bin/env python3
"""Protocolos de avaliação: 10 dobras in-target e leave-one-target-out
cross-target, com paralelismo opcional via joblib."""
import logging
import os
import sys
from collections import Counter
from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Optional, Protocol, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from corpus import (
    LABELS,
    ArgumentExample,
    DatasetSplit,
    RawRecord,
    list_targets,
    make_cross_target_split,
    make_in_target_folds,
    to_examples,
)
from metrics import METRIC_NAMES, MetricReport, confusion, mean_report, metric_report, reports_frame
from mutual import VARIANTS, TrainerConfig, fit_team

logger = logging.getLogger(__name__)


class ProtocolError(ValueError):
    pass


class Predictor(Protocol):
    def predict(self, examples: Sequence[ArgumentExample]) -> List[str]:
        ...


Trainer = Callable[[DatasetSplit, int], Predictor]


def ensure_dirs(base_dir: str) -> Dict[str, str]:
    dirs = {name: os.path.join(base_dir, name) for name in ("artifacts", "outputs", "reports")}
    for path in dirs.values():
        os.makedirs(path, exist_ok=True)
    return dirs


# ======================================================================
# preditores de referência
# ======================================================================


class OraclePredictor:
    def predict(self, examples: Sequence[ArgumentExample]) -> List[str]:
        return [ex.label for ex in examples]


@dataclass
class MajorityPredictor:
    label: str

    def predict(self, examples: Sequence[ArgumentExample]) -> List[str]:
        return [self.label] * len(examples)


def oracle_predictor(split: DatasetSplit, seed: int) -> Predictor:
    return OraclePredictor()


def majority_predictor(split: DatasetSplit, seed: int) -> Predictor:
    counts = Counter(ex.label for ex in split.train)
    # empate pela ordem support < oppose < none
    label = max(LABELS, key=lambda lab: (counts.get(lab, 0), -LABELS.index(lab)))
    return MajorityPredictor(label)


@dataclass
class TeamTrainer:
    config: TrainerConfig

    def __call__(self, split: DatasetSplit, seed: int) -> Predictor:
        return fit_team(split, replace(self.config, seed=seed))


# ======================================================================
# protocolos
# ======================================================================


@dataclass
class RunResult:
    name: str
    report: MetricReport
    confusion: np.ndarray
    test_size: int


@dataclass
class ProtocolResult:
    protocol: str
    runs: List[RunResult]

    @property
    def mean(self) -> MetricReport:
        return mean_report([r.report for r in self.runs])

    @property
    def total_confusion(self) -> np.ndarray:
        return np.sum([r.confusion for r in self.runs], axis=0)

    def to_frame(self) -> pd.DataFrame:
        index_name = "fold" if self.protocol == "in_target" else "target"
        return reports_frame([r.report for r in self.runs], [r.name for r in self.runs], index_name)


def assert_no_leakage(split: DatasetSplit) -> None:
    if split.held_out_target is None:
        return
    leaked = [role for role, examples in (("train", split.train), ("val", split.val))
              if any(ex.target == split.held_out_target for ex in examples)]
    if leaked:
        raise ProtocolError(f"alvo {split.held_out_target!r} presente em: {', '.join(leaked)}")


def evaluate_split(trainer: Trainer, split: DatasetSplit, seed: int, name: str) -> RunResult:
    assert_no_leakage(split)
    if not split.test:
        raise ProtocolError(f"rodada {name} sem exemplos de teste")
    predictor = trainer(split, seed)
    preds = predictor.predict(split.test)
    cm = confusion([ex.label for ex in split.test], preds)
    report = metric_report(cm)
    logger.info("rodada %s: macro F1 %.4f (%d exemplos)", name, report.macro_f1, len(split.test))
    return RunResult(name=name, report=report, confusion=cm, test_size=len(split.test))


def run_in_target(trainer: Trainer, examples: Sequence[ArgumentExample], k: int = 10, seed: int = 42,
                  n_jobs: int = 1) -> ProtocolResult:
    folds = make_in_target_folds(examples, k=k, seed=seed)
    runs = Parallel(n_jobs=n_jobs)(
        delayed(evaluate_split)(trainer, split, seed + i, str(i)) for i, split in enumerate(folds)
    )
    return ProtocolResult(protocol="in_target", runs=list(runs))


def run_cross_target(trainer: Trainer, records: Sequence[RawRecord], targets: Optional[Sequence[str]] = None,
                     seed: int = 42, n_jobs: int = 1) -> ProtocolResult:
    targets = list(targets) if targets else list_targets(records)
    splits = [make_cross_target_split(records, target) for target in targets]
    runs = Parallel(n_jobs=n_jobs)(
        delayed(evaluate_split)(trainer, split, seed + i, split.held_out_target) for i, split in enumerate(splits)
    )
    return ProtocolResult(protocol="cross_target", runs=list(runs))


def run_protocol(trainer: Trainer, records: Sequence[RawRecord], protocol: str, k: int = 10, seed: int = 42,
                 n_jobs: int = 1, targets: Optional[Sequence[str]] = None) -> ProtocolResult:
    if protocol == "in_target":
        return run_in_target(trainer, to_examples(records), k=k, seed=seed, n_jobs=n_jobs)
    if protocol == "cross_target":
        return run_cross_target(trainer, records, targets=targets, seed=seed, n_jobs=n_jobs)
    raise ValueError(f"protocolo desconhecido: {protocol}")


def run_variants(config: TrainerConfig, records: Sequence[RawRecord], protocol: str,
                 variants: Sequence[str] = VARIANTS, topic_grid: Sequence[int] = (), k: int = 10,
                 seed: int = 42, n_jobs: int = 1) -> pd.DataFrame:
    """Tabela com a média de cada variante de ablação (ou de cada K da grade)."""
    if topic_grid:
        named = [(f"K={num}", replace(config, num_topics=int(num))) for num in topic_grid]
    else:
        named = [(name, config.for_variant(name)) for name in variants]

    rows = []
    for name, variant_config in named:
        result = run_protocol(TeamTrainer(variant_config), records, protocol, k=k, seed=seed, n_jobs=n_jobs)
        rows.append({"variant": name, **result.mean.as_dict()})
        logger.info("variante %s: macro F1 %.4f", name, result.mean.macro_f1)
    return pd.DataFrame(rows, columns=["variant"] + METRIC_NAMES)


def main() -> None:
    from cli import main as cli_main

    sys.exit(cli_main(["evaluate", *sys.argv[1:]]))


if __name__ == "__main__":
    main()
