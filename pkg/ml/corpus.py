#!/usr/bin/env python3
"""Leitura do corpus UKP ArgMin (TSV), tokenização, vocabulário do NTM,
bag-of-words e construção das partições in-target e cross-target."""
import csv
import glob
import logging
import os
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import sparse
from sklearn.feature_extraction.text import ENGLISH_STOP_WORDS, CountVectorizer
from sklearn.model_selection import KFold

logger = logging.getLogger(__name__)

REQUIRED_COLUMNS = ["topic", "sentence", "annotation", "set"]
LABEL_MAP = {
    "Argument_for": "support",
    "Argument_against": "oppose",
    "NoArgument": "none",
}
LABELS = ("support", "oppose", "none")
SPLIT_TAGS = ("train", "val", "test")
DEFAULT_STOPWORDS: FrozenSet[str] = frozenset(ENGLISH_STOP_WORDS)
NTM_MIN_TOKEN_LENGTH = 2


class CorpusError(ValueError):
    pass


def normalize_target(name: str) -> str:
    return " ".join(str(name).lower().split())


@dataclass(frozen=True)
class RawRecord:
    target_name: str
    sentence: str
    annotation: str
    split_tag: str


@dataclass(frozen=True)
class ArgumentExample:
    target: str
    tokens: Tuple[str, ...]
    label: str
    sentence: str = ""
    split_tag: str = ""

    @property
    def label_index(self) -> int:
        return LABELS.index(self.label)


@dataclass(frozen=True)
class CorpusLoad:
    records: List[RawRecord]
    rejected: int = 0


@dataclass(frozen=True)
class Vocabulary:
    index_of: Dict[str, int]
    frequency: Dict[str, int] = field(default_factory=dict)
    document_frequency: Dict[str, int] = field(default_factory=dict)

    @property
    def size(self) -> int:
        return len(self.index_of)

    def __len__(self) -> int:
        return len(self.index_of)

    def __contains__(self, token: str) -> bool:
        return token in self.index_of

    @property
    def tokens(self) -> List[str]:
        return sorted(self.index_of, key=self.index_of.__getitem__)

    def get(self, token: str, default: Optional[int] = None) -> Optional[int]:
        return self.index_of.get(token, default)

    def to_frame(self) -> pd.DataFrame:
        tokens = self.tokens
        return pd.DataFrame({
            "id": [self.index_of[t] for t in tokens],
            "token": tokens,
            "frequency": [self.frequency.get(t, 0) for t in tokens],
            "document_frequency": [self.document_frequency.get(t, 0) for t in tokens],
        })

    @classmethod
    def from_frame(cls, df: pd.DataFrame) -> "Vocabulary":
        df = df.sort_values("id")
        tokens = df["token"].astype(str).tolist()
        ids = df["id"].astype(int).tolist()
        if ids != list(range(len(ids))):
            raise CorpusError("ids do vocabulário não são densos")
        return cls(
            index_of=dict(zip(tokens, ids)),
            frequency=dict(zip(tokens, df["frequency"].astype(int))),
            document_frequency=dict(zip(tokens, df["document_frequency"].astype(int))),
        )

    def save(self, path: str) -> str:
        self.to_frame().to_csv(path, sep="\t", index=False, quoting=csv.QUOTE_NONE, escapechar="\\")
        return path

    @classmethod
    def load(cls, path: str) -> "Vocabulary":
        if not os.path.exists(path):
            raise FileNotFoundError(f"Vocabulário não encontrado em {path}. Rode antes: python cli.py prepare")
        df = pd.read_csv(path, sep="\t", dtype={"token": str}, keep_default_na=False,
                         quoting=csv.QUOTE_NONE, escapechar="\\")
        return cls.from_frame(df)


@dataclass(frozen=True)
class DatasetSplit:
    train: List[ArgumentExample]
    val: List[ArgumentExample]
    test: List[ArgumentExample]
    held_out_target: Optional[str] = None

    def roles(self) -> Iterable[Tuple[str, List[ArgumentExample]]]:
        return (("train", self.train), ("val", self.val), ("test", self.test))


# ======================================================================
# leitura
# ======================================================================


def read_corpus(path: str) -> CorpusLoad:
    if not os.path.exists(path):
        raise FileNotFoundError(f"Dataset não encontrado em {path}.")
    if os.path.isdir(path):
        files = sorted(glob.glob(os.path.join(path, "*.tsv")))
        if not files:
            raise FileNotFoundError(f"Nenhum arquivo .tsv em {path}")
        loads = [_read_tsv(f) for f in files]
        return CorpusLoad(
            records=[r for load in loads for r in load.records],
            rejected=sum(load.rejected for load in loads),
        )
    return _read_tsv(path)


def load_tsv(path: str) -> List[RawRecord]:
    return read_corpus(path).records


def _read_tsv(path: str) -> CorpusLoad:
    try:
        df = pd.read_csv(
            path,
            sep="\t",
            dtype=str,
            keep_default_na=False,
            quoting=csv.QUOTE_NONE,
            engine="python",
            encoding="utf-8",
        )
    except pd.errors.EmptyDataError as exc:
        raise CorpusError(f"{path}: arquivo sem cabeçalho") from exc
    except pd.errors.ParserError as exc:
        raise CorpusError(f"{path}: linha malformada ({exc})") from exc

    missing = [c for c in REQUIRED_COLUMNS if c not in df.columns]
    if missing:
        raise CorpusError(f"{path}: coluna obrigatória ausente: {', '.join(missing)}")

    records: List[RawRecord] = []
    rejected = 0
    for offset, row in enumerate(df[REQUIRED_COLUMNS].itertuples(index=False)):
        line = offset + 2  # cabeçalho é a linha 1
        if any(pd.isna(v) for v in row):
            raise CorpusError(f"{path}: linha {line} malformada: campos faltando")
        topic, sentence, annotation, split_tag = (str(v) for v in row)
        if not sentence.strip():
            raise CorpusError(f"{path}: linha {line} malformada: sentença vazia")
        split_tag = split_tag.strip().lower()
        if split_tag not in SPLIT_TAGS:
            raise CorpusError(f"{path}: linha {line} malformada: set={split_tag!r}")
        annotation = annotation.strip()
        if annotation not in LABEL_MAP:
            rejected += 1
            continue
        records.append(RawRecord(
            target_name=normalize_target(topic),
            sentence=sentence.strip(),
            annotation=annotation,
            split_tag=split_tag,
        ))
    if rejected:
        logger.warning("%s: %d linhas rejeitadas por anotação desconhecida", path, rejected)
    logger.info("%s: %d registros carregados", path, len(records))
    return CorpusLoad(records=records, rejected=rejected)


def corpus_statistics(records: Sequence[RawRecord]) -> pd.DataFrame:
    """Contagem por alvo e rótulo, com total por linha e linha de total."""
    df = pd.DataFrame({
        "target": [r.target_name for r in records],
        "label": [LABEL_MAP[r.annotation] for r in records],
    })
    table = pd.crosstab(df["target"], df["label"]).reindex(columns=list(LABELS), fill_value=0)
    table.insert(0, "sentences", table.sum(axis=1))
    table.loc["total"] = table.sum(axis=0)
    return table


# ======================================================================
# tokenização e vocabulário
# ======================================================================


def _strip_punctuation(text: str) -> str:
    return "".join(" " if unicodedata.category(ch).startswith("P") else ch for ch in text)


def tokenize(text: str, mode: str = "ntm", stopwords: Optional[FrozenSet[str]] = None,
             min_token_length: int = NTM_MIN_TOKEN_LENGTH) -> List[str]:
    if mode not in ("ntm", "encoder"):
        raise ValueError(f"modo de tokenização desconhecido: {mode}")
    tokens = _strip_punctuation(text.lower()).split()
    if mode == "encoder":
        return tokens
    stopwords = DEFAULT_STOPWORDS if stopwords is None else stopwords
    return [t for t in tokens if t not in stopwords and len(t) >= min_token_length]


def ntm_tokens(tokens: Sequence[str]) -> List[str]:
    return [t for t in tokens if t not in DEFAULT_STOPWORDS and len(t) >= NTM_MIN_TOKEN_LENGTH]


def build_vocabulary(records: Sequence[Union[RawRecord, str]], max_size: int,
                     stopwords: Optional[FrozenSet[str]] = None,
                     min_token_length: int = 1, reserved: Sequence[str] = ()) -> Vocabulary:
    """Vocabulário por frequência decrescente, empate lexicográfico.

    O NTM passa ``min_token_length=NTM_MIN_TOKEN_LENGTH``; o padrão 1 mantém todos os tokens.
    """
    if max_size < 1:
        raise ValueError(f"max_size deve ser >= 1, recebido {max_size}")
    if not records:
        raise ValueError("não há registros para construir o vocabulário")

    frequency: Counter = Counter()
    document_frequency: Counter = Counter()
    for record in records:
        text = record if isinstance(record, str) else record.sentence
        tokens = tokenize(text, "ntm", stopwords=stopwords, min_token_length=min_token_length)
        frequency.update(tokens)
        document_frequency.update(set(tokens))

    for token in reserved:
        frequency.pop(token, None)
    # frequência decrescente; empate pela ordem lexicográfica
    ranked = sorted(frequency.items(), key=lambda kv: (-kv[1], kv[0]))[:max_size]
    ordered = list(reserved) + [token for token, _count in ranked]
    return Vocabulary(
        index_of={token: i for i, token in enumerate(ordered)},
        frequency={token: frequency.get(token, 0) for token in ordered},
        document_frequency={token: document_frequency.get(token, 0) for token in ordered},
    )


def vectorize(tokens: Sequence[str], vocab: Vocabulary) -> np.ndarray:
    ids = [vocab.index_of[t] for t in tokens if t in vocab.index_of]
    return np.bincount(np.asarray(ids, dtype=np.int64), minlength=vocab.size).astype(np.int64)


def vectorize_corpus(token_lists: Sequence[Sequence[str]], vocab: Vocabulary) -> sparse.csr_matrix:
    vectorizer = CountVectorizer(vocabulary=vocab.index_of, analyzer=list, lowercase=False)
    return vectorizer.transform(token_lists).astype(np.int64).tocsr()


# ======================================================================
# exemplos e partições
# ======================================================================


def to_example(record: RawRecord) -> ArgumentExample:
    return ArgumentExample(
        target=record.target_name,
        tokens=tuple(tokenize(record.sentence, "encoder")),
        label=LABEL_MAP[record.annotation],
        sentence=record.sentence,
        split_tag=record.split_tag,
    )


def to_examples(records: Sequence[RawRecord]) -> List[ArgumentExample]:
    return [to_example(r) for r in records]


def make_in_target_folds(examples: Sequence[ArgumentExample], k: int = 10, seed: int = 42) -> List[DatasetSplit]:
    """k partições; em cada rodada a dobra seguinte à de teste vira validação."""
    if k < 2:
        raise ValueError(f"k deve ser >= 2, recebido {k}")
    if len(examples) < k:
        raise ValueError(f"k={k} maior que o número de exemplos ({len(examples)})")

    kfold = KFold(n_splits=k, shuffle=True, random_state=seed)
    test_folds = [test_idx for _train_idx, test_idx in kfold.split(np.arange(len(examples)))]
    splits: List[DatasetSplit] = []
    for i, test_idx in enumerate(test_folds):
        val_idx = test_folds[(i + 1) % k] if k > 2 else np.array([], dtype=int)
        excluded = set(test_idx.tolist()) | set(val_idx.tolist())
        train_idx = [j for j in range(len(examples)) if j not in excluded]
        splits.append(DatasetSplit(
            train=[examples[j] for j in train_idx],
            val=[examples[j] for j in sorted(val_idx.tolist())],
            test=[examples[j] for j in sorted(test_idx.tolist())],
        ))
    return splits


def list_targets(records: Sequence[RawRecord]) -> List[str]:
    return sorted({r.target_name for r in records})


def make_cross_target_split(records: Sequence[RawRecord], held_out: str) -> DatasetSplit:
    held_out = normalize_target(held_out)
    targets = list_targets(records)
    if held_out not in targets:
        raise CorpusError(f"alvo desconhecido: {held_out!r}; disponíveis: {targets}")
    train = [to_example(r) for r in records if r.target_name != held_out and r.split_tag == "train"]
    val = [to_example(r) for r in records if r.target_name != held_out and r.split_tag == "val"]
    test = [to_example(r) for r in records if r.target_name == held_out and r.split_tag == "test"]
    return DatasetSplit(train=train, val=val, test=test, held_out_target=held_out)


def write_split_manifest(split: DatasetSplit, path: str) -> str:
    rows = [
        {"target": ex.target, "label": ex.label, "role": role, "tokens": list(ex.tokens)}
        for role, examples in split.roles()
        for ex in examples
    ]
    df = pd.DataFrame(rows, columns=["target", "label", "role", "tokens"])
    df.to_json(path, orient="records", lines=True, force_ascii=False)
    return path
