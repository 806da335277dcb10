#!/usr/bin/env python3
"""Extração de tópicos explicáveis: mascara as palavras do alvo na matriz
tópico-palavra, pega os N termos mais pesados de cada tópico e escolhe o
tópico mais parecido com o alvo por similaridade de cosseno."""
import csv
import logging
import math
import os
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd

from corpus import Vocabulary, tokenize

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TargetMask:
    mask: np.ndarray  # K x V de {0, 1}

    @property
    def masked_columns(self) -> np.ndarray:
        return np.flatnonzero(self.mask[0] == 0) if self.mask.size else np.array([], dtype=int)


@dataclass(frozen=True)
class KeyTermLists:
    ids: np.ndarray      # K x N_t
    weights: np.ndarray  # K x N_t

    @property
    def num_topics(self) -> int:
        return self.ids.shape[0]

    def words(self, vocab: Vocabulary) -> List[List[str]]:
        tokens = vocab.tokens
        return [[tokens[i] for i in row] for row in self.ids]


@dataclass(frozen=True)
class EmbeddingTable:
    vectors: np.ndarray
    index_of: Dict[str, int]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @classmethod
    def from_matrix(cls, vectors: np.ndarray, vocab: Vocabulary) -> "EmbeddingTable":
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.shape[0] != vocab.size:
            raise ValueError(f"{vectors.shape[0]} vetores para um vocabulário de {vocab.size}")
        return cls(vectors=vectors, index_of=dict(vocab.index_of))

    def normalized(self) -> "EmbeddingTable":
        norms = np.linalg.norm(self.vectors, axis=1, keepdims=True)
        return EmbeddingTable(vectors=self.vectors / np.where(norms > 0, norms, 1.0), index_of=self.index_of)

    def lookup(self, words: Sequence[str]) -> np.ndarray:
        rows = [self.vectors[self.index_of[w]] if w in self.index_of else np.zeros(self.dim) for w in words]
        return np.vstack(rows) if rows else np.zeros((0, self.dim))


@dataclass(frozen=True)
class ExtractedTopics:
    topic_index: int
    terms: Tuple[str, ...]
    score: float
    weights: Tuple[float, ...] = ()
    scores: Tuple[float, ...] = ()

    @classmethod
    def empty(cls) -> "ExtractedTopics":
        return cls(topic_index=-1, terms=(), score=0.0)


@dataclass(frozen=True)
class TargetTopicScore:
    per_topic: np.ndarray
    ratio_p: float
    target_word_count: int


def build_target_mask(target_tokens: Sequence[str], vocab: Vocabulary, num_topics: int = 10) -> TargetMask:
    mask = np.ones((num_topics, vocab.size), dtype=np.int8)
    for token in target_tokens:
        idx = vocab.get(token)
        if idx is not None:
            mask[:, idx] = 0
    return TargetMask(mask=mask)


def filter_topics(topic_word: np.ndarray, mask: TargetMask, n: int) -> KeyTermLists:
    topic_word = np.asarray(topic_word, dtype=np.float64)
    if mask.mask.shape != topic_word.shape:
        raise ValueError(f"máscara {mask.mask.shape} incompatível com {topic_word.shape}")
    allowed = np.flatnonzero(mask.mask[0] != 0)
    if not 1 <= n <= allowed.size:
        raise ValueError(f"n={n} fora do intervalo [1, {allowed.size}]")

    masked = topic_word * mask.mask
    ids = np.zeros((topic_word.shape[0], n), dtype=np.int64)
    weights = np.zeros((topic_word.shape[0], n))
    for k, row in enumerate(masked):
        candidates = row[allowed]
        # peso decrescente; empate pelo menor id
        order = np.lexsort((allowed, -candidates))[:n]
        ids[k] = allowed[order]
        weights[k] = candidates[order]
    return KeyTermLists(ids=ids, weights=weights)


def score_topic(target_vecs: np.ndarray, topic_vecs: np.ndarray, p: float) -> float:
    if not 0.0 < p < 1.0:
        raise ValueError(f"p deve estar em (0, 1), recebido {p}")
    target_vecs = np.atleast_2d(np.asarray(target_vecs, dtype=np.float64))
    topic_vecs = np.atleast_2d(np.asarray(topic_vecs, dtype=np.float64))
    if target_vecs.shape[0] == 0 or topic_vecs.shape[0] == 0 or target_vecs.size == 0 or topic_vecs.size == 0:
        raise ValueError("lista de alvo ou de tópico vazia")

    maxima = (topic_vecs @ target_vecs.T).max(axis=1)
    keep = math.ceil(p * topic_vecs.shape[0] - 1e-9)
    top = np.sort(maxima)[::-1][:keep]
    return float(top.sum() / target_vecs.shape[0])


def score_targets(lists: KeyTermLists, embeddings: EmbeddingTable, vocab: Vocabulary,
                  target_tokens: Sequence[str], p: float) -> TargetTopicScore:
    table = embeddings.normalized()
    target_words = [t for t in target_tokens if t in table.index_of]
    if not target_words:
        raise ValueError(f"alvo sem palavras com embedding: {list(target_tokens)}")
    target_vecs = table.lookup(target_words)
    per_topic = np.array([score_topic(target_vecs, table.lookup(words), p) for words in lists.words(vocab)])
    return TargetTopicScore(per_topic=per_topic, ratio_p=p, target_word_count=len(target_words))


def extract_topics(lists: KeyTermLists, embeddings: EmbeddingTable, target_tokens: Sequence[str],
                   p: float, vocab: Vocabulary) -> ExtractedTopics:
    scores = score_targets(lists, embeddings, vocab, target_tokens, p)
    best = int(np.argmax(scores.per_topic))
    words = lists.words(vocab)[best]
    return ExtractedTopics(
        topic_index=best,
        terms=tuple(words),
        score=float(scores.per_topic[best]),
        weights=tuple(float(w) for w in lists.weights[best]),
        scores=tuple(float(s) for s in scores.per_topic),
    )


def extract_for_targets(topic_word: np.ndarray, vocab: Vocabulary, embeddings: EmbeddingTable,
                        targets: Sequence[str], n: int = 10, p: float = 0.5,
                        tokenizer=None) -> Dict[str, ExtractedTopics]:
    tokenizer = tokenizer or (lambda text: tokenize(text, "encoder"))
    extracted: Dict[str, ExtractedTopics] = {}
    for target in targets:
        tokens = tokenizer(target)
        mask = build_target_mask(tokens, vocab, topic_word.shape[0])
        allowed = vocab.size - mask.masked_columns.size
        lists = filter_topics(topic_word, mask, min(n, allowed))
        try:
            extracted[target] = extract_topics(lists, embeddings, tokens, p, vocab)
        except ValueError as exc:
            logger.warning("alvo %r sem tópicos extraídos: %s", target, exc)
            extracted[target] = ExtractedTopics.empty()
    return extracted


def load_embedding_file(path: str) -> EmbeddingTable:
    """Lê vetores no formato texto ``palavra v1 ... vd`` (uma palavra por linha)."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"Arquivo de embeddings não encontrado: {path}")
    df = pd.read_csv(path, sep=" ", header=None, quoting=csv.QUOTE_NONE, keep_default_na=False,
                     dtype={0: str}, encoding="utf-8")
    words = df.iloc[:, 0].astype(str).tolist()
    vectors = df.iloc[:, 1:].to_numpy(dtype=np.float64)
    if vectors.shape[1] == 0:
        raise ValueError(f"{path}: linhas sem valores")
    index_of: Dict[str, int] = {}
    for i, word in enumerate(words):
        index_of.setdefault(word, i)
    return EmbeddingTable(vectors=vectors, index_of=index_of)


def write_topic_report(extracted: Dict[str, ExtractedTopics], path: str) -> str:
    rows = []
    for target, topics in sorted(extracted.items()):
        terms = " ".join(
            f"{term}:{weight:.4f}" for term, weight in zip(topics.terms, topics.weights or (0.0,) * len(topics.terms))
        )
        rows.append({"target": target, "topic_index": topics.topic_index, "score": topics.score, "terms": terms})
    pd.DataFrame(rows, columns=["target", "topic_index", "score", "terms"]).to_csv(path, sep="\t", index=False)
    return path


def read_topic_report(path: str) -> Dict[str, ExtractedTopics]:
    df = pd.read_csv(path, sep="\t", keep_default_na=False, dtype={"terms": str})
    extracted: Dict[str, ExtractedTopics] = {}
    for row in df.itertuples(index=False):
        pairs = [item.rsplit(":", 1) for item in str(row.terms).split()]
        extracted[str(row.target)] = ExtractedTopics(
            topic_index=int(row.topic_index),
            terms=tuple(term for term, _ in pairs),
            score=float(row.score),
            weights=tuple(float(w) for _, w in pairs),
        )
    return extracted
