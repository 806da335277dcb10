#!/usr/bin/env python3
"""Métricas de classificação: matriz de confusão, precisão/recall de
support e oppose e macro F1 sobre as três classes."""
import os
from dataclasses import asdict, dataclass, fields
from typing import Dict, List, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
import seaborn as sns
from sklearn.metrics import confusion_matrix

from corpus import LABELS


@dataclass(frozen=True)
class MetricReport:
    macro_f1: float
    precision_support: float
    precision_oppose: float
    recall_support: float
    recall_oppose: float

    def as_dict(self) -> Dict[str, float]:
        return asdict(self)


METRIC_NAMES = [f.name for f in fields(MetricReport)]


def confusion(golds: Sequence[str], preds: Sequence[str]) -> np.ndarray:
    """3x3, linhas = verdadeiro, colunas = predito, na ordem support/oppose/none."""
    if len(golds) != len(preds):
        raise ValueError(f"tamanhos diferentes: {len(golds)} rótulos e {len(preds)} predições")
    if len(golds) == 0:
        return np.zeros((len(LABELS), len(LABELS)), dtype=np.int64)
    unknown = (set(golds) | set(preds)) - set(LABELS)
    if unknown:
        raise ValueError(f"rótulos desconhecidos: {sorted(unknown)}")
    return confusion_matrix(list(golds), list(preds), labels=list(LABELS)).astype(np.int64)


def _safe_div(num: float, den: float) -> float:
    return float(num) / float(den) if den else 0.0


def per_class(cm: np.ndarray) -> List[Tuple[float, float, float]]:
    """(precisão, recall, F1) de cada classe; 0/0 vale 0."""
    cm = np.asarray(cm)
    out = []
    for i in range(cm.shape[0]):
        tp = cm[i, i]
        precision = _safe_div(tp, cm[:, i].sum())
        recall = _safe_div(tp, cm[i, :].sum())
        f1 = _safe_div(2 * precision * recall, precision + recall)
        out.append((precision, recall, f1))
    return out


def metric_report(cm: np.ndarray) -> MetricReport:
    stats = per_class(cm)
    return MetricReport(
        macro_f1=float(np.mean([f1 for _, _, f1 in stats])),
        precision_support=stats[0][0],
        precision_oppose=stats[1][0],
        recall_support=stats[0][1],
        recall_oppose=stats[1][1],
    )


def mean_report(reports: Sequence[MetricReport]) -> MetricReport:
    if not reports:
        raise ValueError("nenhum relatório para agregar")
    return MetricReport(**{name: float(np.mean([getattr(r, name) for r in reports])) for name in METRIC_NAMES})


def reports_frame(reports: Sequence[MetricReport], index: Sequence[str], index_name: str) -> pd.DataFrame:
    """Uma linha por rodada mais a linha ``mean``."""
    rows = [dict(r.as_dict(), **{index_name: str(i)}) for i, r in zip(index, reports)]
    rows.append(dict(mean_report(reports).as_dict(), **{index_name: "mean"}))
    return pd.DataFrame(rows, columns=[index_name] + METRIC_NAMES)


def save_confusion(cm: np.ndarray, outputs_dir: str, name: str = "confusion_matrix") -> Tuple[str, str]:
    df_cm = pd.DataFrame(np.asarray(cm), index=list(LABELS), columns=list(LABELS))
    csv_path = os.path.join(outputs_dir, f"{name}.csv")
    df_cm.to_csv(csv_path)

    plt.figure(figsize=(6, 5))
    sns.heatmap(df_cm, annot=True, fmt="d", cmap="Blues")
    plt.ylabel("Verdadeiro")
    plt.xlabel("Predito")
    plt.title("Matriz de Confusão")
    png_path = os.path.join(outputs_dir, f"{name}.png")
    plt.tight_layout()
    plt.savefig(png_path, dpi=140)
    plt.close()

    return csv_path, png_path
