#!/usr/bin/env python3
import argparse
import csv
import logging
import os
from typing import List, Tuple

import pandas as pd

from corpus import LABEL_MAP, LABELS, ArgumentExample, normalize_target, tokenize
from mutual import TeamModel

logger = logging.getLogger(__name__)


def load_sentences(input_path: str) -> Tuple[List[ArgumentExample], bool]:
    """Lê um TSV com ``topic`` e ``sentence``; ``annotation`` é opcional.

    Linhas com anotação desconhecida são descartadas, como em ``read_corpus``.
    """
    if not os.path.exists(input_path):
        raise FileNotFoundError(f"Arquivo não encontrado: {input_path}")
    df = pd.read_csv(input_path, sep="\t", dtype=str, keep_default_na=False, quoting=csv.QUOTE_NONE)
    missing = [c for c in ("topic", "sentence") if c not in df.columns]
    if missing:
        raise ValueError(f"Colunas ausentes no TSV de entrada: {missing}")
    has_gold = "annotation" in df.columns
    examples = []
    rejected = 0
    for row in df.itertuples(index=False):
        if has_gold and row.annotation.strip() not in LABEL_MAP:
            rejected += 1
            continue
        label = LABEL_MAP[row.annotation.strip()] if has_gold else "none"
        examples.append(ArgumentExample(
            target=normalize_target(row.topic),
            tokens=tuple(tokenize(row.sentence, "encoder")),
            label=label,
            sentence=row.sentence,
        ))
    if rejected:
        logger.warning("%s: %d linhas rejeitadas por anotação desconhecida", input_path, rejected)
    return examples, has_gold


def run_predict(input_path: str, output_path: str, checkpoint_path: str) -> str:
    model = TeamModel.load(checkpoint_path)
    examples, has_gold = load_sentences(input_path)
    predictions = model.predict_proba(examples)

    df_out = pd.DataFrame({
        "target": [ex.target for ex in examples],
        "sentence": [ex.sentence for ex in examples],
    })
    if has_gold:
        df_out["gold"] = [ex.label for ex in examples]
    df_out["predicted"] = [p.predicted for p in predictions]
    for i, label in enumerate(LABELS):
        df_out[f"p_{label}"] = [float(p.probabilities[i]) for p in predictions]

    os.makedirs(os.path.dirname(output_path) or ".", exist_ok=True)
    df_out.to_csv(output_path, sep="\t", index=False)
    return output_path


def main() -> None:
    base_dir = os.path.dirname(__file__)

    parser = argparse.ArgumentParser(description="Classificação de argumentos com o modelo treinado")
    parser.add_argument("--input", required=True, help="TSV com colunas topic e sentence")
    parser.add_argument(
        "--output",
        required=False,
        default=os.path.join(base_dir, "outputs", "predictions.tsv"),
        help="TSV de saída com predições",
    )
    parser.add_argument(
        "--checkpoint",
        required=False,
        default=os.path.join(base_dir, "runs", "artifacts", "team.joblib"),
        help="Checkpoint salvo por cli.py train",
    )
    args = parser.parse_args()

    out = run_predict(args.input, args.output, args.checkpoint)
    print(f"[OK] Predição salva em: {out}")


if __name__ == "__main__":
    main()
