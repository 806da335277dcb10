#!/usr/bin/env python3
"""Corpora sintéticos: sentenças argumentativas no formato TSV do UKP
(para testes e demonstração do pipeline) e documentos LDA com tópicos
plantados (para conferir a recuperação de tópicos do NTM)."""
import argparse
import os
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd

from corpus import Vocabulary

# Palavras plantadas por classe: a classe é recuperável pelo vocabulário
LABEL_WORDS: Dict[str, List[str]] = {
    "Argument_for": ["benefit", "safe", "clean", "improves", "helps", "progress", "efficient", "protects"],
    "Argument_against": ["danger", "risk", "harm", "costly", "waste", "threat", "damage", "unfair"],
    "NoArgument": ["weather", "yesterday", "museum", "painting", "holiday", "recipe", "concert", "garden"],
}
TARGET_WORDS: Dict[str, List[str]] = {
    "nuclear energy": ["reactor", "plant", "uranium", "radiation", "power", "electricity"],
    "school uniforms": ["students", "dress", "clothing", "teachers", "classroom", "code"],
    "gun control": ["firearms", "weapons", "rifle", "owners", "permit", "shooting"],
    "minimum wage": ["workers", "salary", "employers", "income", "hourly", "jobs"],
}
FILLER = ["the", "a", "of", "and", "is", "that", "this", "it", "in", "for", "we", "they"]


def build_argument_dataset(n_per_target: int = 150, targets: Sequence[str] = ("nuclear energy", "school uniforms"),
                           random_state: int = 42, split_proportions: Tuple[float, float, float] = (0.7, 0.15, 0.15)
                           ) -> pd.DataFrame:
    rng = np.random.default_rng(random_state)
    annotations = list(LABEL_WORDS)
    rows = []
    for target in targets:
        topic_words = TARGET_WORDS.get(target, target.split())
        for i in range(n_per_target):
            annotation = annotations[i % len(annotations)]
            words = list(rng.choice(LABEL_WORDS[annotation], size=3, replace=False))
            words += list(rng.choice(topic_words, size=2, replace=True))
            words += list(rng.choice(FILLER, size=4, replace=True))
            if rng.random() < 0.5:
                words += target.split()
            rng.shuffle(words)
            sentence = " ".join(words).capitalize() + "."
            rows.append({"topic": target, "sentence": sentence, "annotation": annotation})

    df = pd.DataFrame(rows)
    df = df.sample(frac=1.0, random_state=random_state).reset_index(drop=True)
    tags = rng.choice(["train", "val", "test"], size=len(df), p=list(split_proportions))
    df["set"] = tags
    return df[["topic", "sentence", "annotation", "set"]]


def write_corpus_tsv(df: pd.DataFrame, path: str) -> str:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    df.to_csv(path, sep="\t", index=False)
    return path


@dataclass
class LdaCorpus:
    bows: np.ndarray             # D x V
    topic_word: np.ndarray       # K x V
    vocab: Vocabulary
    planted_top_words: List[List[str]]


def build_lda_corpus(vocab_size: int = 200, num_topics: int = 5, num_docs: int = 2000, doc_length: int = 60,
                     random_state: int = 42, alpha: float = 0.1, top_n: int = 10) -> LdaCorpus:
    """Cada tópico ocupa um bloco disjunto do vocabulário e concentra 80% da
    massa nas ``top_n`` palavras do bloco."""
    if vocab_size % num_topics:
        raise ValueError("vocab_size deve ser múltiplo de num_topics")
    rng = np.random.default_rng(random_state)
    block = vocab_size // num_topics
    if block <= top_n:
        raise ValueError("bloco de palavras por tópico menor que top_n")

    tokens = [f"w{i:03d}" for i in range(vocab_size)]
    topic_word = np.zeros((num_topics, vocab_size))
    planted = []
    for k in range(num_topics):
        ids = np.arange(k * block, (k + 1) * block)
        head, tail = ids[:top_n], ids[top_n:]
        topic_word[k, head] = 0.8 * rng.dirichlet(np.full(top_n, 5.0))
        topic_word[k, tail] = 0.2 * rng.dirichlet(np.ones(tail.size))
        planted.append([tokens[i] for i in head])

    theta = rng.dirichlet(np.full(num_topics, alpha), size=num_docs)
    probs = theta @ topic_word
    probs /= probs.sum(axis=1, keepdims=True)
    bows = np.vstack([rng.multinomial(doc_length, p) for p in probs]).astype(np.int64)

    counts = bows.sum(axis=0)
    vocab = Vocabulary(
        index_of={t: i for i, t in enumerate(tokens)},
        frequency={t: int(c) for t, c in zip(tokens, counts)},
        document_frequency={t: int(c) for t, c in zip(tokens, (bows > 0).sum(axis=0))},
    )
    return LdaCorpus(bows=bows, topic_word=topic_word, vocab=vocab, planted_top_words=planted)


def main() -> None:
    parser = argparse.ArgumentParser(description="Gerar corpus argumentativo sintético no formato UKP")
    parser.add_argument("--n-per-target", type=int, default=150, help="Sentenças por alvo")
    parser.add_argument("--targets", type=str, default="nuclear energy,school uniforms",
                        help="Alvos separados por vírgula")
    parser.add_argument("--random-state", type=int, default=42, help="Semente aleatória")
    parser.add_argument(
        "--output",
        type=str,
        default=os.path.join(os.path.dirname(__file__), "data", "synthetic_argmin.tsv"),
        help="Caminho do TSV de saída",
    )
    args = parser.parse_args()

    targets = [t.strip() for t in args.targets.split(",") if t.strip()]
    df = build_argument_dataset(n_per_target=args.n_per_target, targets=targets, random_state=args.random_state)
    write_corpus_tsv(df, args.output)

    print(f"[OK] Gerado: {args.output} ({len(df)} linhas)")


if __name__ == "__main__":
    main()
