#!/usr/bin/env python3
"""Modelo neural de tópicos (VAE): rede de inferência (mu, logvar), amostra
reparametrizada, distribuição de tópicos z, decodificador
``log_softmax(m + z·T)`` e treino pelo ELBO negativo."""
import csv
import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import sparse
from scipy.optimize import linear_sum_assignment

from corpus import Vocabulary
from neural_core import (
    MlpSpec,
    NonFiniteError,
    OptimizerState,
    ParameterSet,
    SeededRng,
    ShapeError,
    Tensor,
    gaussian_kl,
    glorot_uniform,
    init_mlp,
    mlp_forward,
    optimizer_step,
    prefixed,
    zero_grad,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NtmConfig:
    vocab_size: int
    num_topics: int = 10
    latent_dim: int = 64
    hidden_dim: int = 256
    num_samples: int = 1
    kl_warmup_epochs: int = 10
    learning_rate: float = 2e-3
    batch_size: int = 16

    @property
    def mu_spec(self) -> MlpSpec:
        return MlpSpec((self.vocab_size, self.hidden_dim, self.latent_dim), ("softplus",))

    @property
    def logvar_spec(self) -> MlpSpec:
        return MlpSpec((self.vocab_size, self.hidden_dim, self.latent_dim), ("softplus",))

    @property
    def topic_spec(self) -> MlpSpec:
        return MlpSpec((self.latent_dim, self.num_topics))


@dataclass
class NtmParams:
    config: NtmConfig
    encoder_mu: ParameterSet
    encoder_logvar: ParameterSet
    latent_to_topic: ParameterSet
    topic_word: Tensor
    log_freq: np.ndarray

    def __post_init__(self):
        k, v = self.config.num_topics, self.config.vocab_size
        if self.topic_word.shape != (k, v):
            raise ShapeError(f"topic_word deve ser {k}x{v}, recebido {self.topic_word.shape}")
        if self.log_freq.shape != (v,):
            raise ShapeError(f"log_freq deve ter tamanho {v}")

    def parameters(self) -> ParameterSet:
        flat = prefixed([
            ("encoder_mu", self.encoder_mu),
            ("encoder_logvar", self.encoder_logvar),
            ("latent_to_topic", self.latent_to_topic),
        ])
        flat["topic_word"] = self.topic_word
        return flat


@dataclass
class LatentSample:
    mu: Tensor
    logvar: Tensor
    noise: np.ndarray
    pre_activation: Tensor
    theta_hat: Tensor


@dataclass
class TopicDistribution:
    z: Tensor

    @property
    def values(self) -> np.ndarray:
        return self.z.data


@dataclass
class ElboTerms:
    total: Tensor
    reconstruction: Tensor
    kl: Tensor
    objective: Tensor
    topic: TopicDistribution


@dataclass
class EpochStats:
    loss: float
    elbo: float
    reconstruction: float
    kl: float
    extra: float
    documents: int
    kl_weight: float = 1.0


# ======================================================================


def compute_log_freq(corpus_bows) -> np.ndarray:
    if sparse.issparse(corpus_bows):
        counts = np.asarray(corpus_bows.sum(axis=0)).ravel()
    else:
        counts = np.asarray(corpus_bows, dtype=np.float64)
        counts = counts.sum(axis=0) if counts.ndim == 2 else counts
    counts = counts.astype(np.float64)
    total = counts.sum()
    if total <= 0:
        raise ValueError("corpus vazio: nenhuma palavra do vocabulário")
    return np.log((counts + 1.0) / (total + counts.shape[0]))


def init_ntm(config: NtmConfig, log_freq: np.ndarray, rng: SeededRng) -> NtmParams:
    return NtmParams(
        config=config,
        encoder_mu=init_mlp(config.mu_spec, rng),
        encoder_logvar=init_mlp(config.logvar_spec, rng),
        latent_to_topic=init_mlp(config.topic_spec, rng),
        topic_word=Tensor(glorot_uniform(rng, config.num_topics, config.vocab_size), name="topic_word"),
        log_freq=np.asarray(log_freq, dtype=np.float64),
    )


def _normalize_counts(v: np.ndarray) -> np.ndarray:
    totals = v.sum(axis=-1, keepdims=True)
    return v / np.maximum(totals, 1.0)


def infer(params: NtmParams, v) -> Tuple[Tensor, Tensor]:
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != params.config.vocab_size:
        raise ShapeError(f"BoW de tamanho {v.shape[-1]}, esperado {params.config.vocab_size}")
    x = _normalize_counts(v)
    mu = mlp_forward(params.config.mu_spec, params.encoder_mu, x)
    logvar = mlp_forward(params.config.logvar_spec, params.encoder_logvar, x)
    return mu, logvar


def reparameterize(mu: Tensor, logvar: Tensor, rng: Optional[SeededRng] = None,
                   noise: Optional[np.ndarray] = None) -> LatentSample:
    if mu.shape != logvar.shape:
        raise ShapeError(f"mu {mu.shape} e logvar {logvar.shape} diferem")
    if noise is None:
        noise = rng.normal(mu.shape)
    pre = mu + (logvar * 0.5).exp() * noise
    return LatentSample(mu=mu, logvar=logvar, noise=noise, pre_activation=pre, theta_hat=pre.softplus())


def topic_distribution(params: NtmParams, sample: LatentSample) -> TopicDistribution:
    logits = mlp_forward(params.config.topic_spec, params.latent_to_topic, sample.theta_hat)
    return TopicDistribution(z=logits.softmax(axis=-1))


def decode(params: NtmParams, z) -> Tensor:
    z = z.z if isinstance(z, TopicDistribution) else z
    return (z @ params.topic_word + params.log_freq).log_softmax(axis=-1)


def elbo_loss(params: NtmParams, v, rng: SeededRng, num_samples: int = 1, kl_weight: float = 1.0) -> ElboTerms:
    """ELBO negativo somado sobre os documentos do lote."""
    if num_samples < 1:
        raise ValueError("num_samples deve ser >= 1")
    counts = np.asarray(v, dtype=np.float64)
    mu, logvar = infer(params, counts)

    reconstruction = None
    first_topic = None
    for _ in range(num_samples):
        topic = topic_distribution(params, reparameterize(mu, logvar, rng))
        if first_topic is None:
            first_topic = topic
        nll = -(decode(params, topic) * counts).sum()
        reconstruction = nll if reconstruction is None else reconstruction + nll
    reconstruction = reconstruction * (1.0 / num_samples)
    kl = gaussian_kl(mu, logvar).sum()
    return ElboTerms(
        total=reconstruction + kl,
        reconstruction=reconstruction,
        kl=kl,
        objective=reconstruction + kl * kl_weight,
        topic=first_topic,
    )


def kl_weight_for_epoch(epoch: int, warmup_epochs: int) -> float:
    if warmup_epochs <= 0:
        return 1.0
    return min(1.0, epoch / float(warmup_epochs))


def _dense_rows(bows, index: np.ndarray) -> np.ndarray:
    rows = bows[index]
    if sparse.issparse(rows):
        return rows.toarray().astype(np.float64)
    return np.asarray(rows, dtype=np.float64)


ExtraLoss = Callable[[np.ndarray, Tensor], Tensor]


def train_ntm_epoch(params: NtmParams, corpus_bows, optimizer: OptimizerState, batch_size: int,
                    rng: SeededRng, kl_weight: float = 1.0, extra_loss: Optional[ExtraLoss] = None) -> EpochStats:
    """Uma passada em lotes embaralhados. ``extra_loss(idx, z)`` soma um termo
    à perda de cada lote (usado pelo mutual learning)."""
    n = corpus_bows.shape[0]
    if n == 0:
        raise ValueError("corpus vazio")
    param_set = params.parameters()
    order = rng.permutation(n)
    sums = {"loss": 0.0, "elbo": 0.0, "reconstruction": 0.0, "kl": 0.0, "extra": 0.0}
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        batch = _dense_rows(corpus_bows, idx)
        zero_grad(param_set)
        terms = elbo_loss(params, batch, rng, params.config.num_samples, kl_weight)
        loss = terms.objective
        if extra_loss is not None:
            extra = extra_loss(idx, terms.topic.z)
            loss = loss + extra
            sums["extra"] += extra.item()
        if not np.isfinite(loss.item()):
            raise NonFiniteError("perda não finita no treino do NTM")
        loss.backward()
        optimizer_step(optimizer, param_set, {name: p.grad for name, p in param_set.items()})
        sums["loss"] += loss.item()
        sums["elbo"] += terms.total.item()
        sums["reconstruction"] += terms.reconstruction.item()
        sums["kl"] += terms.kl.item()
    return EpochStats(documents=n, kl_weight=kl_weight, **{k: v / n for k, v in sums.items()})


def make_optimizer(config: NtmConfig) -> OptimizerState:
    return OptimizerState(algorithm="adam", learning_rate=config.learning_rate)


def fit_ntm(params: NtmParams, corpus_bows, epochs: int, rng: SeededRng,
            optimizer: Optional[OptimizerState] = None) -> List[EpochStats]:
    optimizer = optimizer or make_optimizer(params.config)
    history = []
    for epoch in range(epochs):
        weight = kl_weight_for_epoch(epoch, params.config.kl_warmup_epochs)
        stats = train_ntm_epoch(params, corpus_bows, optimizer, params.config.batch_size, rng, weight)
        logger.info("NTM época %d: elbo=%.4f kl=%.4f (peso %.2f)", epoch + 1, stats.elbo, stats.kl, weight)
        history.append(stats)
    return history


def document_topics(params: NtmParams, corpus_bows, batch_size: int = 256) -> np.ndarray:
    """z determinístico (ruído zero) para cada documento."""
    n = corpus_bows.shape[0]
    out = np.zeros((n, params.config.num_topics))
    for start in range(0, n, batch_size):
        idx = np.arange(start, min(n, start + batch_size))
        mu, logvar = infer(params, _dense_rows(corpus_bows, idx))
        sample = reparameterize(mu, logvar, noise=np.zeros(mu.shape))
        out[idx] = topic_distribution(params, sample).values
    return out


# ======================================================================
# exportação de tópicos
# ======================================================================


def top_words(params: NtmParams, vocab: Vocabulary, n: int = 10) -> List[List[Tuple[str, float]]]:
    words = vocab.tokens
    weights = params.topic_word.data
    lists = []
    for row in weights:
        order = np.lexsort((np.arange(row.shape[0]), -row))[:n]
        lists.append([(words[i], float(row[i])) for i in order])
    return lists


def export_topic_word_tsv(params: NtmParams, vocab: Vocabulary, path: str) -> str:
    words = vocab.tokens
    weights = params.topic_word.data
    k, v = weights.shape
    df = pd.DataFrame({
        "topic": np.repeat(np.arange(k), v),
        "word": words * k,
        "weight": weights.ravel(),
    })
    df = df.sort_values(["topic", "weight"], ascending=[True, False], kind="mergesort")
    df.to_csv(path, sep="\t", index=False, quoting=csv.QUOTE_NONE, escapechar="\\")
    return path


def read_topic_word_tsv(path: str, top_n: Optional[int] = None) -> List[List[str]]:
    df = pd.read_csv(path, sep="\t", dtype={"word": str}, keep_default_na=False,
                     quoting=csv.QUOTE_NONE, escapechar="\\")
    missing = [c for c in ("topic", "word", "weight") if c not in df.columns]
    if missing:
        raise ValueError(f"{path}: coluna obrigatória ausente: {', '.join(missing)}")
    lists = []
    for _topic, group in df.groupby("topic", sort=True):
        group = group.sort_values("weight", ascending=False, kind="mergesort")
        words = group["word"].tolist()
        lists.append(words[:top_n] if top_n else words)
    return lists


def match_topics(learned: Sequence[Sequence[str]], planted: Sequence[Sequence[str]]) -> Tuple[float, List[Tuple[int, int, int]]]:
    """Casamento um-para-um entre listas de palavras; devolve a sobreposição média."""
    overlap = np.array([[len(set(a) & set(b)) for b in planted] for a in learned], dtype=np.float64)
    rows, cols = linear_sum_assignment(-overlap)
    pairs = [(int(r), int(c), int(overlap[r, c])) for r, c in zip(rows, cols)]
    return float(overlap[rows, cols].mean()), pairs


def to_param_groups(params: NtmParams) -> Dict[str, ParameterSet]:
    return {"ntm": params.parameters()}


def from_param_group(config: NtmConfig, group: ParameterSet, log_freq: np.ndarray) -> NtmParams:
    def pick(prefix: str) -> ParameterSet:
        return {name.split(".", 1)[1]: p for name, p in group.items() if name.startswith(prefix + ".")}

    return NtmParams(
        config=config,
        encoder_mu=pick("encoder_mu"),
        encoder_logvar=pick("encoder_logvar"),
        latent_to_topic=pick("latent_to_topic"),
        topic_word=group["topic_word"],
        log_freq=np.asarray(log_freq, dtype=np.float64),
    )
