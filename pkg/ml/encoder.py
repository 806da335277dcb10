#!/usr/bin/env python3
"""Identificação de argumentos: monta a entrada (sentença ⊕ alvo ⊕ tópicos
extraídos), codifica num vetor h e classifica em support / oppose / none.

O codificador de referência soma embeddings de palavra e de segmento, faz a
média por segmento, concatena os três segmentos e passa por um MLP de duas
camadas. Qualquer mapa determinístico e diferenciável entrada -> h serve no
lugar dele, desde que mantenha ``encode_batch``.
"""
import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from corpus import LABELS, ArgumentExample, Vocabulary, build_vocabulary, tokenize
from neural_core import (
    MlpSpec,
    NonFiniteError,
    OptimizerState,
    ParameterSet,
    SeededRng,
    Tensor,
    cross_entropy_from_logits,
    init_mlp,
    mlp_forward,
    optimizer_step,
    prefixed,
    zero_grad,
)
from topics import EmbeddingTable, ExtractedTopics

logger = logging.getLogger(__name__)

CLS, SEP, UNK = "[CLS]", "[SEP]", "[UNK]"
MARKERS = (CLS, SEP, UNK)
SEGMENT_SENTENCE, SEGMENT_TARGET, SEGMENT_TOPICS = 0, 1, 2
NUM_SEGMENTS = 3


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int
    embed_dim: int = 100
    hidden_dim: int = 128
    max_len: int = 128
    learning_rate: float = 2e-5
    weight_decay: float = 0.01
    batch_size: int = 16

    @property
    def encoder_spec(self) -> MlpSpec:
        return MlpSpec((NUM_SEGMENTS * self.embed_dim, self.hidden_dim, self.hidden_dim), ("relu",))

    @property
    def classifier_spec(self) -> MlpSpec:
        return MlpSpec((self.hidden_dim, len(LABELS)))


@dataclass
class EncoderParams:
    config: EncoderConfig
    word_embedding: Tensor
    segment_embedding: Tensor
    encoder_mlp: ParameterSet
    classifier: ParameterSet

    def parameters(self) -> ParameterSet:
        flat = prefixed([("encoder_mlp", self.encoder_mlp), ("classifier", self.classifier)])
        flat["word_embedding"] = self.word_embedding
        flat["segment_embedding"] = self.segment_embedding
        return flat


@dataclass(frozen=True)
class EncoderInput:
    token_ids: Tuple[int, ...]
    segments: Tuple[int, ...]
    tokens: Tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.token_ids)

    @property
    def segment_count(self) -> int:
        return len(set(self.segments))


@dataclass
class EncodedArgument:
    h: Tensor

    @property
    def values(self) -> np.ndarray:
        return self.h.data


@dataclass(frozen=True)
class ClassPrediction:
    probabilities: np.ndarray
    predicted: str

    @classmethod
    def from_probabilities(cls, probabilities: np.ndarray) -> "ClassPrediction":
        probabilities = np.asarray(probabilities, dtype=np.float64)
        # argmax devolve o primeiro máximo: support < oppose < none
        return cls(probabilities=probabilities, predicted=LABELS[int(np.argmax(probabilities))])


@dataclass
class ClassifierEpochStats:
    loss: float
    cross_entropy: float
    extra: float
    examples: int


# ======================================================================
# vocabulário e entrada
# ======================================================================


def build_encoder_vocabulary(texts: Sequence, max_size: int) -> Vocabulary:
    """Vocabulário sem remoção de stopwords, com os marcadores nos primeiros ids."""
    return build_vocabulary(texts, max_size, stopwords=frozenset(), min_token_length=1, reserved=MARKERS)


def build_input(sentence_tokens: Sequence[str], target_tokens: Sequence[str], topics: Optional[ExtractedTopics],
                max_len: int, vocab: Vocabulary) -> EncoderInput:
    topic_terms = tuple(topics.terms) if topics is not None else ()
    fixed = 2 + len(target_tokens) + (1 + len(topic_terms) if topic_terms else 0)
    if max_len < fixed:
        raise ValueError(f"max_len={max_len} não comporta alvo e tópicos ({fixed} tokens)")

    sentence = list(sentence_tokens)[: max_len - fixed]
    tokens = [CLS] + sentence + [SEP] + list(target_tokens)
    segments = [SEGMENT_SENTENCE] * (len(sentence) + 2) + [SEGMENT_TARGET] * len(target_tokens)
    if topic_terms:
        tokens += [SEP] + list(topic_terms)
        segments += [SEGMENT_TARGET] + [SEGMENT_TOPICS] * len(topic_terms)

    unk = vocab.index_of[UNK]
    ids = tuple(vocab.index_of.get(t, unk) for t in tokens)
    return EncoderInput(token_ids=ids, segments=tuple(segments), tokens=tuple(tokens))


def featurize(examples: Sequence[ArgumentExample], vocab: Vocabulary, topics_by_target: Dict[str, ExtractedTopics],
              max_len: int, use_topics: bool = True) -> List[EncoderInput]:
    target_tokens = {}
    inputs = []
    for ex in examples:
        if ex.target not in target_tokens:
            target_tokens[ex.target] = tokenize(ex.target, "encoder")
        topics = topics_by_target.get(ex.target) if use_topics else None
        inputs.append(build_input(ex.tokens, target_tokens[ex.target], topics, max_len, vocab))
    return inputs


# ======================================================================
# modelo
# ======================================================================


def init_encoder(config: EncoderConfig, rng: SeededRng, zero: bool = False) -> EncoderParams:
    shape = (config.vocab_size, config.embed_dim)
    word = np.zeros(shape) if zero else rng.normal(shape) * 0.1
    segment = np.zeros((NUM_SEGMENTS, config.embed_dim)) if zero else rng.normal((NUM_SEGMENTS, config.embed_dim)) * 0.1
    return EncoderParams(
        config=config,
        word_embedding=Tensor(word, name="word_embedding"),
        segment_embedding=Tensor(segment, name="segment_embedding"),
        encoder_mlp=init_mlp(config.encoder_spec, rng, zero=zero),
        classifier=init_mlp(config.classifier_spec, rng, zero=zero),
    )


def _pooling_matrix(inputs: Sequence[EncoderInput]) -> np.ndarray:
    total = sum(len(inp) for inp in inputs)
    pool = np.zeros((len(inputs) * NUM_SEGMENTS, total))
    offset = 0
    for b, inp in enumerate(inputs):
        segments = np.asarray(inp.segments)
        for s in range(NUM_SEGMENTS):
            positions = np.flatnonzero(segments == s)
            if positions.size:
                pool[b * NUM_SEGMENTS + s, offset + positions] = 1.0 / positions.size
        offset += len(inp)
    return pool


def encode_batch(params: EncoderParams, inputs: Sequence[EncoderInput]) -> Tensor:
    """h para um lote de entradas, (B, d_h)."""
    if not inputs:
        raise ValueError("lote vazio")
    ids = np.concatenate([np.asarray(inp.token_ids, dtype=np.int64) for inp in inputs])
    if ids.min() < 0 or ids.max() >= params.config.vocab_size:
        raise ValueError(f"id de token fora do intervalo [0, {params.config.vocab_size})")
    segments = np.concatenate([np.asarray(inp.segments, dtype=np.int64) for inp in inputs])

    tokens = params.word_embedding[ids] + params.segment_embedding[segments]
    pooled = _pooling_matrix(inputs) @ tokens
    features = pooled.reshape(len(inputs), NUM_SEGMENTS * params.config.embed_dim)
    return mlp_forward(params.config.encoder_spec, params.encoder_mlp, features)


def encode(params: EncoderParams, inp: EncoderInput) -> EncodedArgument:
    return EncodedArgument(h=encode_batch(params, [inp])[0])


def classify_batch(params: EncoderParams, h: Tensor) -> Tensor:
    """Logits (B, 3)."""
    return mlp_forward(params.config.classifier_spec, params.classifier, h)


def classify(params: EncoderParams, h: EncodedArgument) -> ClassPrediction:
    logits = classify_batch(params, h.h)
    return ClassPrediction.from_probabilities(logits.softmax(axis=-1).data)


def predict_examples(params: EncoderParams, inputs: Sequence[EncoderInput], batch_size: int = 64) -> List[ClassPrediction]:
    predictions: List[ClassPrediction] = []
    for start in range(0, len(inputs), batch_size):
        batch = inputs[start:start + batch_size]
        probs = classify_batch(params, encode_batch(params, batch)).softmax(axis=-1).data
        predictions.extend(ClassPrediction.from_probabilities(row) for row in probs)
    return predictions


def embedding_table(params: EncoderParams, vocab: Vocabulary) -> EmbeddingTable:
    return EmbeddingTable.from_matrix(params.word_embedding.data, vocab)


# ======================================================================
# treino
# ======================================================================


ExtraLoss = Callable[[np.ndarray, Tensor], Tensor]


def make_optimizer(config: EncoderConfig) -> OptimizerState:
    return OptimizerState(algorithm="adamw", learning_rate=config.learning_rate, weight_decay=config.weight_decay)


def train_classifier_epoch(params: EncoderParams, inputs: Sequence[EncoderInput], labels: Sequence[int],
                           optimizer: OptimizerState, batch_size: int, rng: SeededRng,
                           extra_loss: Optional[ExtraLoss] = None,
                           extra_params: Optional[ParameterSet] = None) -> ClassifierEpochStats:
    """Uma época de entropia cruzada em lotes embaralhados.

    ``extra_loss(idx, h)`` soma um termo à perda do lote; os parâmetros que ele
    usa entram em ``extra_params`` para serem otimizados junto.
    """
    n = len(inputs)
    if n == 0:
        raise ValueError("sem exemplos de treino")
    if len(labels) != n:
        raise ValueError(f"{len(labels)} rótulos para {n} entradas")
    labels = np.asarray(labels, dtype=np.int64)
    trainable = dict(params.parameters())
    if extra_params:
        trainable.update(extra_params)

    order = rng.permutation(n)
    sums = {"loss": 0.0, "cross_entropy": 0.0, "extra": 0.0}
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        zero_grad(trainable)
        h = encode_batch(params, [inputs[i] for i in idx])
        ce = cross_entropy_from_logits(classify_batch(params, h), labels[idx])
        loss = ce
        if extra_loss is not None:
            extra = extra_loss(idx, h)
            loss = loss + extra
            sums["extra"] += extra.item()
        if not np.isfinite(loss.item()):
            raise NonFiniteError("perda não finita no treino do classificador")
        loss.backward()
        optimizer_step(optimizer, trainable, {name: p.grad for name, p in trainable.items()})
        sums["loss"] += loss.item()
        sums["cross_entropy"] += ce.item()
    return ClassifierEpochStats(examples=n, **{k: v / n for k, v in sums.items()})


def to_param_groups(params: EncoderParams) -> Dict[str, ParameterSet]:
    return {"encoder": params.parameters()}


def from_param_group(config: EncoderConfig, group: ParameterSet) -> EncoderParams:
    def pick(prefix: str) -> ParameterSet:
        return {name.split(".", 1)[1]: p for name, p in group.items() if name.startswith(prefix + ".")}

    return EncoderParams(
        config=config,
        word_embedding=group["word_embedding"],
        segment_embedding=group["segment_embedding"],
        encoder_mlp=pick("encoder_mlp"),
        classifier=pick("classifier"),
    )
