from collections import Counter

import pandas as pd
import pytest

from corpus import LABELS, ArgumentExample, DatasetSplit, list_targets, make_in_target_folds
from evaluate_model import (
    MajorityPredictor,
    ProtocolError,
    TeamTrainer,
    assert_no_leakage,
    ensure_dirs,
    evaluate_split,
    majority_predictor,
    oracle_predictor,
    run_cross_target,
    run_in_target,
    run_protocol,
    run_variants,
)
from mutual import TrainerConfig


def _tiny_config(**overrides):
    values = dict(num_topics=3, vocab_max_size=60, ntm_latent_dim=4, ntm_hidden_dim=8, embed_dim=6,
                  encoder_hidden_dim=6, max_len=32, classifier_learning_rate=1e-2, top_n=3, max_iterations=1,
                  batch_size=8)
    values.update(overrides)
    return TrainerConfig(**values)


def _f1_of_constant_prediction(label, golds):
    hits = sum(g == label for g in golds)
    if hits == 0:
        return 0.0
    precision, recall = hits / len(golds), 1.0
    return 2 * precision * recall / (precision + recall)


class TestInTarget:
    def test_oracle_scores_one(self, argument_examples):
        result = run_in_target(oracle_predictor, argument_examples, k=10, seed=1)
        assert len(result.runs) == 10
        assert result.mean.macro_f1 == 1.0

    def test_majority_matches_hand_computation(self, argument_examples):
        result = run_in_target(majority_predictor, argument_examples, k=5, seed=2)
        for run, split in zip(result.runs, make_in_target_folds(argument_examples, k=5, seed=2)):
            counts = Counter(ex.label for ex in split.train)
            label = max(LABELS, key=lambda lab: (counts.get(lab, 0), -LABELS.index(lab)))
            expected = _f1_of_constant_prediction(label, [ex.label for ex in split.test]) / 3
            assert run.report.macro_f1 == pytest.approx(expected)

    def test_same_seed_same_report(self, argument_examples):
        trainer = TeamTrainer(_tiny_config())
        first = run_in_target(trainer, argument_examples, k=3, seed=7).to_frame()
        second = run_in_target(trainer, argument_examples, k=3, seed=7).to_frame()
        pd.testing.assert_frame_equal(first, second)

    def test_frame_shape(self, argument_examples):
        frame = run_in_target(oracle_predictor, argument_examples, k=4, seed=0).to_frame()
        assert frame["fold"].tolist() == ["0", "1", "2", "3", "mean"]


class TestCrossTarget:
    def test_one_row_per_target_plus_mean(self, argument_records):
        result = run_cross_target(oracle_predictor, argument_records, seed=1)
        targets = list_targets(argument_records)
        assert [r.name for r in result.runs] == targets
        assert result.to_frame()["target"].tolist() == targets + ["mean"]
        assert result.mean.macro_f1 == 1.0

    def test_leakage_detected(self):
        leaked = ArgumentExample(target="gun control", tokens=("guns",), label="oppose")
        split = DatasetSplit(train=[leaked], val=[], test=[leaked], held_out_target="gun control")
        with pytest.raises(ProtocolError):
            assert_no_leakage(split)
        with pytest.raises(ProtocolError):
            evaluate_split(oracle_predictor, split, 0, "gun control")

    def test_empty_test_rejected(self):
        split = DatasetSplit(train=[ArgumentExample(target="t", tokens=("a",), label="none")], val=[], test=[])
        with pytest.raises(ProtocolError):
            evaluate_split(oracle_predictor, split, 0, "0")

    def test_protocol_dispatch(self, argument_records):
        assert run_protocol(oracle_predictor, argument_records, "cross_target").protocol == "cross_target"
        with pytest.raises(ValueError):
            run_protocol(oracle_predictor, argument_records, "leave_one_out")


class TestVariants:
    def test_majority_predictor_tie_order(self):
        examples = [ArgumentExample(target="t", tokens=("a",), label=lab) for lab in ("none", "oppose")]
        predictor = majority_predictor(DatasetSplit(train=examples, val=[], test=[]), 0)
        assert predictor == MajorityPredictor("oppose")

    def test_variant_table(self, argument_records):
        frame = run_variants(_tiny_config(), argument_records, "in_target", variants=("-ET&ML",), k=2, seed=0)
        assert frame["variant"].tolist() == ["-ET&ML"]
        assert 0.0 <= frame.loc[0, "macro_f1"] <= 1.0

    def test_ensure_dirs(self, tmp_path):
        dirs = ensure_dirs(str(tmp_path / "run"))
        assert sorted(dirs) == ["artifacts", "outputs", "reports"]
