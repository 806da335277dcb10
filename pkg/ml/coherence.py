#!/usr/bin/env python3
"""Coerência de tópicos por NPMI com janelas deslizantes booleanas."""
import logging
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, List, Sequence

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

NPMI_EPSILON = 1e-12
DEFAULT_WINDOW = 10
DEFAULT_CUTOFFS = (5, 10, 15, 20)


@dataclass
class WindowCounts:
    """Contagens de janelas em que cada palavra (e cada par) aparece."""

    words: List[str]
    single: np.ndarray
    joint: np.ndarray
    num_windows: int

    def index(self, word: str) -> int:
        return self.words.index(word)


@dataclass
class CoherenceReport:
    per_topic: pd.DataFrame
    average: Dict[int, float]
    missing_words: List[str] = field(default_factory=list)


def _windows(doc: Sequence[str], window: int) -> List[Sequence[str]]:
    # documento menor que a janela conta como uma janela só
    if len(doc) <= window:
        return [doc]
    return [doc[i:i + window] for i in range(len(doc) - window + 1)]


def count_windows(words: Sequence[str], docs: Sequence[Sequence[str]], window: int = DEFAULT_WINDOW) -> WindowCounts:
    if window < 1:
        raise ValueError(f"janela deve ser >= 1, recebido {window}")
    words = list(dict.fromkeys(words))
    position = {w: i for i, w in enumerate(words)}
    n = len(words)
    single = np.zeros(n, dtype=np.int64)
    joint = np.zeros((n, n), dtype=np.int64)
    total = 0
    for doc in docs:
        if not doc:
            continue
        ids = np.array([position.get(t, -1) for t in doc])
        for chunk in _windows(ids, window):
            present = np.zeros(n, dtype=np.int64)
            hits = chunk[chunk >= 0]
            present[hits] = 1
            single += present
            joint += np.outer(present, present)
            total += 1
    return WindowCounts(words=words, single=single, joint=joint, num_windows=total)


def pair_npmi(counts: WindowCounts, i: int, j: int, eps: float = NPMI_EPSILON) -> float:
    if counts.num_windows == 0:
        return 0.0
    if counts.single[i] == 0 or counts.single[j] == 0:
        return -1.0
    p_i = max(counts.single[i] / counts.num_windows, eps)
    p_j = max(counts.single[j] / counts.num_windows, eps)
    p_ij = counts.joint[i, j] / counts.num_windows + eps
    if p_ij >= 1.0:
        return 1.0
    value = math.log(p_ij / (p_i * p_j)) / -math.log(p_ij)
    return float(min(1.0, max(-1.0, value)))


def npmi(topic_words: Sequence[str], corpus_docs: Sequence[Sequence[str]], window: int = DEFAULT_WINDOW,
         cutoff: int = 10) -> float:
    """NPMI médio sobre os pares não ordenados das ``cutoff`` primeiras palavras."""
    if cutoff > len(topic_words):
        raise ValueError(f"cutoff={cutoff} maior que a lista ({len(topic_words)} palavras)")
    if cutoff < 2:
        raise ValueError("cutoff deve ser >= 2 para formar pares")
    top = list(topic_words[:cutoff])
    counts = count_windows(top, corpus_docs, window)
    missing = [w for w in counts.words if counts.single[counts.index(w)] == 0]
    if missing:
        logger.warning("palavras ausentes do corpus (pontuadas com o piso): %s", ", ".join(missing))
    idx = [counts.index(w) for w in top]
    return float(np.mean([pair_npmi(counts, a, b) for a, b in combinations(idx, 2)]))


def coherence_report(topic_lists: Sequence[Sequence[str]], docs: Sequence[Sequence[str]],
                     window: int = DEFAULT_WINDOW, cutoffs: Sequence[int] = DEFAULT_CUTOFFS) -> CoherenceReport:
    usable = [c for c in cutoffs if all(len(t) >= c for t in topic_lists)]
    skipped = sorted(set(cutoffs) - set(usable))
    if skipped:
        logger.warning("cortes ignorados (listas curtas demais): %s", skipped)

    vocabulary = [w for topic in topic_lists for w in topic[: max(usable, default=0)]]
    counts = count_windows(vocabulary, docs, window)
    missing = sorted(w for w in counts.words if counts.single[counts.index(w)] == 0)

    rows = []
    for k, topic in enumerate(topic_lists):
        row: Dict[str, float] = {"topic": k}
        for cutoff in usable:
            idx = [counts.index(w) for w in topic[:cutoff]]
            row[f"npmi@{cutoff}"] = float(np.mean([pair_npmi(counts, a, b) for a, b in combinations(idx, 2)]))
        rows.append(row)
    per_topic = pd.DataFrame(rows, columns=["topic"] + [f"npmi@{c}" for c in usable])
    average = {c: float(per_topic[f"npmi@{c}"].mean()) for c in usable}
    return CoherenceReport(per_topic=per_topic, average=average, missing_words=missing)


def report_frame(report: CoherenceReport) -> pd.DataFrame:
    mean_row = {"topic": "mean", **{f"npmi@{c}": v for c, v in report.average.items()}}
    return pd.concat([report.per_topic.astype({"topic": str}), pd.DataFrame([mean_row])], ignore_index=True)
