import logging

import pytest

from predict import load_sentences


def test_unknown_annotation_rejected(write_tsv, caplog):
    path = write_tsv("novas.tsv", [
        ("Nuclear Energy", "reactors are safe", "Argument_for"),
        ("nuclear energy", "maybe later", "Talvez"),
        ("nuclear energy", "waste is forever", "Argument_against"),
    ], header="topic\tsentence\tannotation")
    with caplog.at_level(logging.WARNING, logger="predict"):
        examples, has_gold = load_sentences(path)
    assert has_gold
    assert [ex.label for ex in examples] == ["support", "oppose"]
    assert examples[0].target == "nuclear energy"
    assert "1 linhas rejeitadas" in caplog.text


def test_without_gold_column(write_tsv):
    path = write_tsv("novas.tsv", [("school uniforms", "uniforms cost money")], header="topic\tsentence")
    examples, has_gold = load_sentences(path)
    assert not has_gold
    assert examples[0].tokens == ("uniforms", "cost", "money")


def test_missing_sentence_column(write_tsv):
    path = write_tsv("novas.tsv", [("school uniforms",)], header="topic")
    with pytest.raises(ValueError, match="sentence"):
        load_sentences(path)
