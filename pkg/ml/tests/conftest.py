import numpy as np
import pytest

from corpus import read_corpus, to_examples
from generate_data import build_argument_dataset, write_corpus_tsv
from neural_core import SeededRng


@pytest.fixture
def rng():
    return SeededRng(42)


@pytest.fixture
def np_rng():
    return np.random.default_rng(42)


@pytest.fixture
def argument_tsv(tmp_path):
    """Corpus pequeno de dois alvos no formato UKP."""
    df = build_argument_dataset(n_per_target=30, random_state=7)
    return write_corpus_tsv(df, str(tmp_path / "argmin.tsv"))


@pytest.fixture
def argument_records(argument_tsv):
    return read_corpus(argument_tsv).records


@pytest.fixture
def argument_examples(argument_records):
    return to_examples(argument_records)


@pytest.fixture
def write_tsv(tmp_path):
    def _write(name, rows, header="topic\tsentence\tannotation\tset"):
        path = tmp_path / name
        path.write_text("\n".join([header] + ["\t".join(r) for r in rows]) + "\n", encoding="utf-8")
        return str(path)

    return _write
