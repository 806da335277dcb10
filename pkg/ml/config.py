# Configurações do pipeline de mineração de argumentos com tópicos
# Centralizando valores padrão para facilitar manutenção
import os
import re
from dataclasses import asdict, dataclass, fields
from typing import Dict, Optional

# === CORPUS ===
CORPUS_CONFIG = {
    "data_path": os.path.join(os.path.dirname(__file__), "data", "synthetic_argmin.tsv"),
    "vocab_max_size": 4888,
    "encoder_vocab_max_size": 20000,
}

# === MODELO NEURAL DE TÓPICOS ===
NTM_CONFIG = {
    "num_topics": 10,
    "ntm_latent_dim": 64,
    "ntm_hidden_dim": 256,
    "ntm_learning_rate": 2e-3,  # Adam
    "kl_warmup_epochs": 10,
}

# === ENCODER / CLASSIFICADOR ===
ENCODER_CONFIG = {
    "embed_dim": 100,
    "encoder_hidden_dim": 128,
    "max_len": 128,
    "classifier_learning_rate": 2e-5,  # AdamW
    "weight_decay": 0.01,
}

# === EXTRAÇÃO DE TÓPICOS ===
TOPICS_CONFIG = {
    "top_n": 10,
    "ratio_p": 0.5,
    "use_topics": True,
    "embedding_path": "",
}

# === TREINO ALTERNADO ===
TRAIN_CONFIG = {
    "gamma": 0.1,
    "max_iterations": 20,
    "ntm_epochs_per_iteration": 1,
    "classifier_epochs_per_iteration": 1,
    "batch_size": 16,
    "patience": 5,
    "seed": 42,
}

# === AVALIAÇÃO ===
EVAL_CONFIG = {
    "protocol": "in_target",  # in_target | cross_target
    "k_folds": 10,
    "n_jobs": 1,
    "npmi_window": 10,
    "output_dir": os.path.join(os.path.dirname(__file__), "runs"),
}

_DEFAULTS = {**CORPUS_CONFIG, **NTM_CONFIG, **ENCODER_CONFIG, **TOPICS_CONFIG, **TRAIN_CONFIG, **EVAL_CONFIG}


@dataclass(frozen=True)
class RunConfig:
    data_path: str = _DEFAULTS["data_path"]
    vocab_max_size: int = _DEFAULTS["vocab_max_size"]
    encoder_vocab_max_size: int = _DEFAULTS["encoder_vocab_max_size"]
    num_topics: int = _DEFAULTS["num_topics"]
    ntm_latent_dim: int = _DEFAULTS["ntm_latent_dim"]
    ntm_hidden_dim: int = _DEFAULTS["ntm_hidden_dim"]
    ntm_learning_rate: float = _DEFAULTS["ntm_learning_rate"]
    kl_warmup_epochs: int = _DEFAULTS["kl_warmup_epochs"]
    embed_dim: int = _DEFAULTS["embed_dim"]
    encoder_hidden_dim: int = _DEFAULTS["encoder_hidden_dim"]
    max_len: int = _DEFAULTS["max_len"]
    classifier_learning_rate: float = _DEFAULTS["classifier_learning_rate"]
    weight_decay: float = _DEFAULTS["weight_decay"]
    top_n: int = _DEFAULTS["top_n"]
    ratio_p: float = _DEFAULTS["ratio_p"]
    use_topics: bool = _DEFAULTS["use_topics"]
    embedding_path: str = _DEFAULTS["embedding_path"]
    gamma: float = _DEFAULTS["gamma"]
    max_iterations: int = _DEFAULTS["max_iterations"]
    ntm_epochs_per_iteration: int = _DEFAULTS["ntm_epochs_per_iteration"]
    classifier_epochs_per_iteration: int = _DEFAULTS["classifier_epochs_per_iteration"]
    batch_size: int = _DEFAULTS["batch_size"]
    patience: int = _DEFAULTS["patience"]
    seed: int = _DEFAULTS["seed"]
    protocol: str = _DEFAULTS["protocol"]
    k_folds: int = _DEFAULTS["k_folds"]
    n_jobs: int = _DEFAULTS["n_jobs"]
    npmi_window: int = _DEFAULTS["npmi_window"]
    output_dir: str = _DEFAULTS["output_dir"]

    def __post_init__(self):
        if self.protocol not in ("in_target", "cross_target"):
            raise ValueError(f"protocolo desconhecido: {self.protocol}")
        if not 0.0 < self.ratio_p < 1.0:
            raise ValueError(f"ratio_p deve estar em (0, 1), recebido {self.ratio_p}")
        if self.gamma < 0:
            raise ValueError(f"gamma deve ser >= 0, recebido {self.gamma}")

    def trainer_config(self):
        from mutual import TrainerConfig

        names = {f.name for f in fields(TrainerConfig)}
        values = {k: v for k, v in asdict(self).items() if k in names}
        values["embedding_path"] = self.embedding_path or None
        return TrainerConfig(**values)


FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, raw: str):
    kind = FIELD_TYPES[key]
    if kind in (bool, "bool"):
        value = raw.strip().lower()
        if value in ("1", "true", "yes", "sim"):
            return True
        if value in ("0", "false", "no", "nao", "não"):
            return False
        raise ValueError(f"{key}: valor booleano inválido {raw!r}")
    if kind in (int, "int"):
        return int(raw)
    if kind in (float, "float"):
        return float(raw)
    return raw.strip()


def parse_overrides(pairs: Dict[str, str]) -> Dict[str, object]:
    unknown = sorted(set(pairs) - set(FIELD_TYPES))
    if unknown:
        raise ValueError(f"chaves de configuração desconhecidas: {', '.join(unknown)}")
    return {key: _coerce(key, value) for key, value in pairs.items()}


_COMMENT = re.compile(r"(?:^|\s)#.*")


def load_config_file(path: str) -> Dict[str, object]:
    """Lê ``chave=valor`` por linha; ``#`` inicia comentário."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"Arquivo de configuração não encontrado: {path}")
    pairs: Dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = _COMMENT.sub("", line).strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: linha sem '=': {line!r}")
            key, value = line.split("=", 1)
            pairs[key.strip()] = value.strip()
    return parse_overrides(pairs)


def resolve_config(config_path: Optional[str] = None, overrides: Optional[Dict[str, object]] = None) -> RunConfig:
    values: Dict[str, object] = {}
    if config_path:
        values.update(load_config_file(config_path))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return RunConfig(**values)


def write_config_snapshot(config: RunConfig, path: str) -> str:
    with open(path, "w", encoding="utf-8") as f:
        for key, value in sorted(asdict(config).items()):
            f.write(f"{key}={value}\n")
    return path
