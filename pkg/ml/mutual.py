#!/usr/bin/env python3
"""Aprendizado mútuo tópico-argumento.

O vetor h do classificador é projetado numa distribuição u sobre os K
tópicos; a similaridade O(u, z) é 1 / (1 + média harmônica das duas KL).
A perda mútua é Σ(1 - O), minimizada. O treino alterna fases: NTM com u
fixo, extração de tópicos, classificador com z fixo.
"""
import logging
import math
import os
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import sparse

import encoder as enc
import ntm
from corpus import (
    LABELS,
    NTM_MIN_TOKEN_LENGTH,
    ArgumentExample,
    DatasetSplit,
    Vocabulary,
    build_vocabulary,
    ntm_tokens,
    vectorize_corpus,
)
from metrics import confusion, metric_report
from neural_core import (
    PROB_FLOOR,
    MlpSpec,
    NonFiniteError,
    ParameterSet,
    SeededRng,
    Tensor,
    as_tensor,
    copy_params,
    init_mlp,
    kl_categorical,
    load_checkpoint,
    mlp_forward,
    restore_params,
    save_checkpoint,
)
from topics import EmbeddingTable, ExtractedTopics, extract_for_targets, load_embedding_file

logger = logging.getLogger(__name__)

VARIANTS = ("full", "-ML", "-ET", "-ET&ML")
HISTORY_COLUMNS = ["iteration", "phase", "epoch", "elbo", "kl", "mutual", "cross_entropy", "val_macro_f1"]

NTM_RNG_OFFSET = 11
CLASSIFIER_RNG_OFFSET = 12


class TrainingError(ValueError):
    def __init__(self, iteration: int, message: str):
        super().__init__(f"iteração {iteration}: {message}")
        self.iteration = iteration


@dataclass(frozen=True)
class MutualLossConfig:
    gamma: float = 0.1
    direction_epsilon: float = PROB_FLOOR
    loss_form: str = "one_minus_O"

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError(f"gamma deve ser >= 0, recebido {self.gamma}")
        if self.loss_form != "one_minus_O":
            raise ValueError(f"forma de perda desconhecida: {self.loss_form}")


@dataclass(frozen=True)
class TrainSchedule:
    max_iterations: int = 20
    ntm_epochs_per_iteration: int = 1
    classifier_epochs_per_iteration: int = 1
    batch_size: int = 16
    seed: int = 42
    patience: int = 5

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations deve ser >= 1")
        if self.ntm_epochs_per_iteration < 1 or self.classifier_epochs_per_iteration < 1:
            raise ValueError("épocas por iteração devem ser >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size deve ser >= 1")


@dataclass
class ProjectedTopic:
    u: Tensor

    @property
    def values(self) -> np.ndarray:
        return self.u.data


@dataclass
class ProjectionParams:
    hidden_dim: int
    num_topics: int
    params: ParameterSet

    @property
    def spec(self) -> MlpSpec:
        return MlpSpec((self.hidden_dim, self.num_topics))


def init_projection(hidden_dim: int, num_topics: int, rng: SeededRng, zero: bool = False) -> ProjectionParams:
    spec = MlpSpec((hidden_dim, num_topics))
    return ProjectionParams(hidden_dim=hidden_dim, num_topics=num_topics, params=init_mlp(spec, rng, zero=zero))


# ======================================================================
# álgebra da perda mútua
# ======================================================================


def project_to_topic(projection: ProjectionParams, h) -> ProjectedTopic:
    h = h.h if isinstance(h, enc.EncodedArgument) else h
    return ProjectedTopic(u=mlp_forward(projection.spec, projection.params, h).softmax(axis=-1))


def similarity_O(u, z, eps: float = PROB_FLOOR) -> Tensor:
    """1 / (1 + A·B/(A+B)) com A = KL(u‖z), B = KL(z‖u); vale 1 quando A = B = 0.

    Aceita lotes: a similaridade é calculada ao longo do último eixo.
    """
    u = u.u if isinstance(u, ProjectedTopic) else as_tensor(u)
    z = z.z if isinstance(z, ntm.TopicDistribution) else as_tensor(z)
    a = kl_categorical(u, z, eps)
    b = kl_categorical(z, u, eps)
    total = a + b
    harmonic = (a * b) / (total + (total.data == 0.0).astype(np.float64))
    return 1.0 / (harmonic + 1.0)


def batch_mutual_loss(u, z, config: Optional[MutualLossConfig] = None) -> Tensor:
    eps = config.direction_epsilon if config else PROB_FLOOR
    return (1.0 - similarity_O(u, z, eps)).sum()


def mutual_loss(pairs: Sequence[Tuple[object, object]], config: Optional[MutualLossConfig] = None) -> Tensor:
    if not pairs:
        raise ValueError("lista de pares vazia")
    eps = config.direction_epsilon if config else PROB_FLOOR
    total = None
    for u, z in pairs:
        term = 1.0 - similarity_O(u, z, eps)
        total = term if total is None else total + term
    return total


def loss_topic_side(elbo_total, l_m, gamma: float):
    return l_m * gamma + elbo_total


def loss_classifier_side(ce_sum, l_m, gamma: float):
    return l_m * gamma + ce_sum


# ======================================================================
# configuração do treino completo
# ======================================================================


@dataclass(frozen=True)
class TrainerConfig:
    num_topics: int = 10
    vocab_max_size: int = 4888
    ntm_latent_dim: int = 64
    ntm_hidden_dim: int = 256
    ntm_learning_rate: float = 2e-3
    kl_warmup_epochs: int = 10
    encoder_vocab_max_size: int = 20000
    embed_dim: int = 100
    encoder_hidden_dim: int = 128
    max_len: int = 128
    classifier_learning_rate: float = 2e-5
    weight_decay: float = 0.01
    gamma: float = 0.1
    use_topics: bool = True
    top_n: int = 10
    ratio_p: float = 0.5
    embedding_path: Optional[str] = None
    max_iterations: int = 20
    ntm_epochs_per_iteration: int = 1
    classifier_epochs_per_iteration: int = 1
    batch_size: int = 16
    patience: int = 5
    seed: int = 42

    def for_variant(self, name: str) -> "TrainerConfig":
        if name not in VARIANTS:
            raise ValueError(f"variante desconhecida: {name}; opções: {', '.join(VARIANTS)}")
        no_ml = name in ("-ML", "-ET&ML")
        no_et = name in ("-ET", "-ET&ML")
        return replace(
            self,
            gamma=0.0 if no_ml else self.gamma,
            use_topics=False if no_et else self.use_topics,
        )

    @property
    def schedule(self) -> TrainSchedule:
        return TrainSchedule(
            max_iterations=self.max_iterations,
            ntm_epochs_per_iteration=self.ntm_epochs_per_iteration,
            classifier_epochs_per_iteration=self.classifier_epochs_per_iteration,
            batch_size=self.batch_size,
            seed=self.seed,
            patience=self.patience,
        )

    @property
    def loss_config(self) -> MutualLossConfig:
        return MutualLossConfig(gamma=self.gamma)

    def ntm_config(self, vocab_size: int) -> ntm.NtmConfig:
        return ntm.NtmConfig(
            vocab_size=vocab_size,
            num_topics=self.num_topics,
            latent_dim=self.ntm_latent_dim,
            hidden_dim=self.ntm_hidden_dim,
            kl_warmup_epochs=self.kl_warmup_epochs,
            learning_rate=self.ntm_learning_rate,
            batch_size=self.batch_size,
        )

    def encoder_config(self, vocab_size: int) -> enc.EncoderConfig:
        return enc.EncoderConfig(
            vocab_size=vocab_size,
            embed_dim=self.embed_dim,
            hidden_dim=self.encoder_hidden_dim,
            max_len=self.max_len,
            learning_rate=self.classifier_learning_rate,
            weight_decay=self.weight_decay,
            batch_size=self.batch_size,
        )


@dataclass
class TrainingData:
    examples: List[ArgumentExample]
    bows: sparse.csr_matrix
    labels: np.ndarray

    @property
    def targets(self) -> List[str]:
        return sorted({ex.target for ex in self.examples})

    def __len__(self) -> int:
        return len(self.examples)


def prepare_data(examples: Sequence[ArgumentExample], ntm_vocab: Vocabulary) -> TrainingData:
    examples = list(examples)
    bows = vectorize_corpus([ntm_tokens(ex.tokens) for ex in examples], ntm_vocab)
    labels = np.asarray([ex.label_index for ex in examples], dtype=np.int64)
    return TrainingData(examples=examples, bows=bows, labels=labels)


@dataclass
class TeamState:
    ntm: ntm.NtmParams
    encoder: enc.EncoderParams
    projection: ProjectionParams
    ntm_vocab: Vocabulary
    encoder_vocab: Vocabulary
    topics: Dict[str, ExtractedTopics] = field(default_factory=dict)
    ntm_optimizer: Optional[object] = None
    classifier_optimizer: Optional[object] = None

    def all_parameters(self) -> ParameterSet:
        flat: ParameterSet = {}
        flat.update({f"ntm.{k}": v for k, v in self.ntm.parameters().items()})
        flat.update({f"encoder.{k}": v for k, v in self.encoder.parameters().items()})
        flat.update({f"projection.{k}": v for k, v in self.projection.params.items()})
        return flat


def init_team(train_examples: Sequence[ArgumentExample], config: TrainerConfig) -> Tuple[TeamState, TrainingData]:
    """Vocabulários e parâmetros iniciais a partir apenas dos exemplos de treino."""
    if not train_examples:
        raise ValueError("sem exemplos de treino")
    ntm_vocab = build_vocabulary([ex.sentence for ex in train_examples], config.vocab_max_size,
                                 min_token_length=NTM_MIN_TOKEN_LENGTH)
    texts = [ex.sentence for ex in train_examples] + sorted({ex.target for ex in train_examples})
    encoder_vocab = enc.build_encoder_vocabulary(texts, config.encoder_vocab_max_size)

    data = prepare_data(train_examples, ntm_vocab)
    init_rng = SeededRng(config.seed)
    state = TeamState(
        ntm=ntm.init_ntm(config.ntm_config(ntm_vocab.size), ntm.compute_log_freq(data.bows), init_rng.derive(1)),
        encoder=enc.init_encoder(config.encoder_config(encoder_vocab.size), init_rng.derive(2)),
        projection=init_projection(config.encoder_hidden_dim, config.num_topics, init_rng.derive(3)),
        ntm_vocab=ntm_vocab,
        encoder_vocab=encoder_vocab,
    )
    return state, data


def _embeddings(state: TeamState, config: TrainerConfig) -> EmbeddingTable:
    if config.embedding_path:
        return load_embedding_file(config.embedding_path)
    return enc.embedding_table(state.encoder, state.encoder_vocab)


def _projected(state: TeamState, inputs: Sequence[enc.EncoderInput], batch_size: int = 256) -> np.ndarray:
    out = np.zeros((len(inputs), state.projection.num_topics))
    for start in range(0, len(inputs), batch_size):
        h = enc.encode_batch(state.encoder, inputs[start:start + batch_size])
        out[start:start + len(h.data)] = project_to_topic(state.projection, h).values
    return out


def evaluate_macro_f1(state: TeamState, data: TrainingData, config: TrainerConfig) -> float:
    inputs = enc.featurize(data.examples, state.encoder_vocab, state.topics, config.max_len, config.use_topics)
    preds = [p.predicted for p in enc.predict_examples(state.encoder, inputs)]
    golds = [LABELS[i] for i in data.labels]
    return metric_report(confusion(golds, preds)).macro_f1


def train_alternating(state: TeamState, train: TrainingData, config: TrainerConfig,
                      val: Optional[TrainingData] = None) -> Tuple[TeamState, pd.DataFrame]:
    """Treino alternado com parada antecipada pelo macro F1 de validação.

    Com gamma = 0 nenhum termo mútuo é montado e a projeção não é otimizada.
    """
    schedule = config.schedule
    loss_config = config.loss_config
    gamma = loss_config.gamma
    ntm_rng = SeededRng(schedule.seed).derive(NTM_RNG_OFFSET)
    clf_rng = SeededRng(schedule.seed).derive(CLASSIFIER_RNG_OFFSET)
    state.ntm_optimizer = state.ntm_optimizer or ntm.make_optimizer(state.ntm.config)
    state.classifier_optimizer = state.classifier_optimizer or enc.make_optimizer(state.encoder.config)
    extra_params = {f"projection.{k}": v for k, v in state.projection.params.items()} if gamma > 0 else None

    targets = sorted(set(train.targets) | set(val.targets if val is not None else []))
    rows: List[dict] = []
    best_f1, best_snapshot, best_topics, stale = -math.inf, None, None, 0
    ntm_epoch = 0

    for iteration in range(1, schedule.max_iterations + 1):
        try:
            # (a) NTM com u fixo
            u_fixed = None
            if gamma > 0:
                inputs = enc.featurize(train.examples, state.encoder_vocab, state.topics, config.max_len,
                                       config.use_topics)
                u_fixed = _projected(state, inputs)
            for epoch in range(1, schedule.ntm_epochs_per_iteration + 1):
                hook = None
                if u_fixed is not None:
                    hook = lambda idx, z, u=u_fixed: batch_mutual_loss(Tensor(u[idx]), z, loss_config) * gamma
                weight = ntm.kl_weight_for_epoch(ntm_epoch, state.ntm.config.kl_warmup_epochs)
                stats = ntm.train_ntm_epoch(state.ntm, train.bows, state.ntm_optimizer, schedule.batch_size,
                                            ntm_rng, weight, hook)
                ntm_epoch += 1
                logger.info("iteração %d NTM época %d: elbo=%.4f kl=%.4f mútua=%.4f",
                            iteration, epoch, stats.elbo, stats.kl, stats.extra)
                rows.append({"iteration": iteration, "phase": "ntm", "epoch": epoch, "elbo": stats.elbo,
                             "kl": stats.kl, "mutual": stats.extra, "cross_entropy": None, "val_macro_f1": None})

            # (b) z de cada argumento de treino
            z_fixed = ntm.document_topics(state.ntm, train.bows)

            # (c) tópicos explicáveis com a matriz tópico-palavra atualizada
            if config.use_topics:
                state.topics = extract_for_targets(state.ntm.topic_word.data, state.ntm_vocab,
                                                   _embeddings(state, config), targets, config.top_n, config.ratio_p)

            # (d) classificador com z fixo
            inputs = enc.featurize(train.examples, state.encoder_vocab, state.topics, config.max_len,
                                   config.use_topics)
            for epoch in range(1, schedule.classifier_epochs_per_iteration + 1):
                hook = None
                if gamma > 0:
                    hook = lambda idx, h, z=z_fixed: batch_mutual_loss(
                        project_to_topic(state.projection, h), Tensor(z[idx]), loss_config) * gamma
                stats = enc.train_classifier_epoch(state.encoder, inputs, train.labels, state.classifier_optimizer,
                                                   schedule.batch_size, clf_rng, hook, extra_params)
                logger.info("iteração %d classificador época %d: ce=%.4f mútua=%.4f",
                            iteration, epoch, stats.cross_entropy, stats.extra)
                rows.append({"iteration": iteration, "phase": "classifier", "epoch": epoch, "elbo": None,
                             "kl": None, "mutual": stats.extra, "cross_entropy": stats.cross_entropy,
                             "val_macro_f1": None})
        except NonFiniteError as exc:
            raise TrainingError(iteration, str(exc)) from exc

        if val is None or len(val) == 0:
            continue
        f1 = evaluate_macro_f1(state, val, config)
        rows[-1]["val_macro_f1"] = f1
        logger.info("iteração %d: macro F1 de validação %.4f", iteration, f1)
        if f1 > best_f1:
            best_f1, best_snapshot, best_topics, stale = f1, copy_params(state.all_parameters()), dict(state.topics), 0
        else:
            stale += 1
            if stale >= schedule.patience:
                logger.info("parada antecipada na iteração %d (melhor F1 %.4f)", iteration, best_f1)
                break

    if best_snapshot is not None:
        restore_params(state.all_parameters(), best_snapshot)
        state.topics = best_topics
    return state, pd.DataFrame(rows, columns=HISTORY_COLUMNS)


# ======================================================================
# modelo treinado
# ======================================================================


class TeamModel:
    """NTM + encoder + projeção treinados juntos, com os tópicos por alvo."""

    def __init__(self, config: TrainerConfig, state: TeamState, history: Optional[pd.DataFrame] = None,
                 split_info: Optional[Dict[str, object]] = None):
        self.config = config
        self.state = state
        self.history = history if history is not None else pd.DataFrame(columns=HISTORY_COLUMNS)
        # partição usada no treino (modo, dobra ou alvo retido, semente, k)
        self.split_info = dict(split_info) if split_info else None

    def topics_for(self, targets: Sequence[str]) -> Dict[str, ExtractedTopics]:
        missing = sorted({t for t in targets if t not in self.state.topics})
        if missing and self.config.use_topics:
            self.state.topics.update(extract_for_targets(
                self.state.ntm.topic_word.data, self.state.ntm_vocab, _embeddings(self.state, self.config),
                missing, self.config.top_n, self.config.ratio_p))
        return self.state.topics

    def predict_proba(self, examples: Sequence[ArgumentExample]) -> List[enc.ClassPrediction]:
        if not examples:
            return []
        topics = self.topics_for([ex.target for ex in examples])
        inputs = enc.featurize(examples, self.state.encoder_vocab, topics, self.config.max_len, self.config.use_topics)
        return enc.predict_examples(self.state.encoder, inputs)

    def predict(self, examples: Sequence[ArgumentExample]) -> List[str]:
        return [p.predicted for p in self.predict_proba(examples)]

    def document_topics(self, examples: Sequence[ArgumentExample]) -> np.ndarray:
        return ntm.document_topics(self.state.ntm, prepare_data(examples, self.state.ntm_vocab).bows)

    def save(self, path: str) -> str:
        groups = {
            **ntm.to_param_groups(self.state.ntm),
            **enc.to_param_groups(self.state.encoder),
            "projection": self.state.projection.params,
        }
        steps = {
            "ntm": self.state.ntm_optimizer.step if self.state.ntm_optimizer else 0,
            "classifier": self.state.classifier_optimizer.step if self.state.classifier_optimizer else 0,
        }
        extra = {
            "config": asdict(self.config),
            "ntm_vocab": self.state.ntm_vocab.to_frame().to_dict(orient="list"),
            "encoder_vocab": self.state.encoder_vocab.to_frame().to_dict(orient="list"),
            "log_freq": self.state.ntm.log_freq,
            "topics": {t: asdict(x) for t, x in self.state.topics.items()},
            "history": self.history.to_dict(orient="list"),
            "split": self.split_info,
        }
        save_checkpoint(path, groups, rng_states={"seed": {"seed": self.config.seed}}, steps=steps, extra=extra)
        return path

    @classmethod
    def load(cls, path: str) -> "TeamModel":
        if not os.path.exists(path):
            raise FileNotFoundError(f"Checkpoint não encontrado em {path}. Rode antes: python cli.py train")
        payload = load_checkpoint(path)
        extra = payload["extra"]
        config = TrainerConfig(**extra["config"])
        ntm_vocab = Vocabulary.from_frame(pd.DataFrame(extra["ntm_vocab"]))
        encoder_vocab = Vocabulary.from_frame(pd.DataFrame(extra["encoder_vocab"]))
        groups = payload["params"]
        state = TeamState(
            ntm=ntm.from_param_group(config.ntm_config(ntm_vocab.size), groups["ntm"], extra["log_freq"]),
            encoder=enc.from_param_group(config.encoder_config(encoder_vocab.size), groups["encoder"]),
            projection=ProjectionParams(config.encoder_hidden_dim, config.num_topics, groups["projection"]),
            ntm_vocab=ntm_vocab,
            encoder_vocab=encoder_vocab,
            topics={t: ExtractedTopics(topic_index=x["topic_index"], terms=tuple(x["terms"]), score=x["score"],
                                       weights=tuple(x["weights"]), scores=tuple(x["scores"]))
                    for t, x in extra["topics"].items()},
        )
        return cls(config, state, pd.DataFrame(extra["history"], columns=HISTORY_COLUMNS), extra.get("split"))


def fit_team(split: DatasetSplit, config: TrainerConfig) -> TeamModel:
    state, train = init_team(split.train, config)
    val = prepare_data(split.val, state.ntm_vocab) if split.val else None
    logger.info("treinando: %d treino, %d validação, V_ntm=%d, V_enc=%d, gamma=%.3f, tópicos=%s",
                len(train), len(val) if val else 0, state.ntm_vocab.size, state.encoder_vocab.size,
                config.gamma, config.use_topics)
    state, history = train_alternating(state, train, config, val)
    return TeamModel(config, state, history)
