import numpy as np
import pandas as pd
import pytest
from scipy.optimize import brentq

import encoder as enc
import ntm
from corpus import ArgumentExample, DatasetSplit, RawRecord, to_examples
from generate_data import build_argument_dataset
from mutual import (
    VARIANTS,
    MutualLossConfig,
    TeamModel,
    TrainerConfig,
    TrainingError,
    TrainSchedule,
    batch_mutual_loss,
    evaluate_macro_f1,
    fit_team,
    init_projection,
    init_team,
    loss_classifier_side,
    loss_topic_side,
    mutual_loss,
    prepare_data,
    project_to_topic,
    similarity_O,
    train_alternating,
)
from neural_core import SeededRng, ShapeError, Tensor, cross_entropy_from_logits, grad_check


def _symmetric_pair(a):
    return np.array([a, 1 - a]), np.array([1 - a, a])


def _kl_one_point():
    # (2a - 1)·ln(a / (1 - a)) = 1 dá A = B = 1
    return brentq(lambda a: (2 * a - 1) * np.log(a / (1 - a)) - 1.0, 0.5 + 1e-9, 1 - 1e-9)


def _small_config(**overrides):
    values = dict(num_topics=3, vocab_max_size=60, ntm_latent_dim=4, ntm_hidden_dim=8, kl_warmup_epochs=2,
                  embed_dim=6, encoder_hidden_dim=6, max_len=32, classifier_learning_rate=1e-2,
                  top_n=3, max_iterations=2, batch_size=8, seed=3)
    values.update(overrides)
    return TrainerConfig(**values)


@pytest.fixture
def small_examples():
    return to_examples(_records(build_argument_dataset(n_per_target=12, random_state=5)))


def _records(df):
    return [RawRecord(r.topic, r.sentence, r.annotation, r.set) for r in df.itertuples(index=False)]


class TestSimilarity:
    def test_identical_distributions(self, np_rng):
        u = np_rng.dirichlet(np.ones(10))
        assert similarity_O(u, u).item() == 1.0

    def test_symmetric(self, np_rng):
        for _ in range(20):
            u, z = np_rng.dirichlet(np.ones(5)), np_rng.dirichlet(np.ones(5))
            np.testing.assert_allclose(similarity_O(u, z).item(), similarity_O(z, u).item(), rtol=1e-12)

    def test_range(self, np_rng):
        values = similarity_O(np_rng.dirichlet(np.ones(4), size=200), np_rng.dirichlet(np.ones(4), size=200)).data
        assert np.all(values > 0) and np.all(values <= 1)

    def test_unit_divergences_give_two_thirds(self):
        u, z = _symmetric_pair(_kl_one_point())
        np.testing.assert_allclose(similarity_O(u, z).item(), 2 / 3, atol=1e-6)

    def test_near_disjoint_distributions(self):
        u, z = _symmetric_pair(1 - 1e-6)
        assert similarity_O(u, z).item() < 0.2

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            similarity_O([0.5, 0.5], [0.2, 0.3, 0.5])


class TestMutualLoss:
    def test_matched_pairs(self, np_rng):
        pairs = [(p, p) for p in np_rng.dirichlet(np.ones(3), size=4)]
        assert mutual_loss(pairs).item() == 0.0

    def test_one_pair_at_two_thirds(self):
        u, z = _symmetric_pair(_kl_one_point())
        np.testing.assert_allclose(mutual_loss([(u, z)]).item(), 1 / 3, atol=1e-6)

    def test_bounded_by_pair_count(self, np_rng):
        pairs = [(np_rng.dirichlet(np.ones(6)), np_rng.dirichlet(np.ones(6))) for _ in range(7)]
        value = mutual_loss(pairs).item()
        assert 0 <= value < 7

    def test_batch_form_matches_pair_list(self, np_rng):
        u, z = np_rng.dirichlet(np.ones(4), size=5), np_rng.dirichlet(np.ones(4), size=5)
        np.testing.assert_allclose(batch_mutual_loss(u, z).item(), mutual_loss(list(zip(u, z))).item())

    def test_mixing_toward_u_decreases_loss(self, np_rng):
        for _ in range(100):
            u, z = np_rng.dirichlet(np.ones(5)), np_rng.dirichlet(np.ones(5))
            losses = [mutual_loss([(u, (1 - t) * z + t * u)]).item() for t in np.linspace(0, 1, 11)]
            assert np.all(np.diff(losses) < 0)

    def test_empty_pairs(self):
        with pytest.raises(ValueError):
            mutual_loss([])

    def test_side_losses(self):
        assert loss_topic_side(3.0, 2.0, 0.0) == 3.0
        assert loss_topic_side(3.0, 0.0, 0.1) == 3.0
        assert loss_classifier_side(0.0, 0.0, 0.1) == 0.0
        assert loss_classifier_side(1.0, 4.0, 0.1) - loss_classifier_side(1.0, 2.0, 0.1) == pytest.approx(0.2)

    def test_config_validation(self):
        assert MutualLossConfig().gamma == 0.1
        with pytest.raises(ValueError):
            MutualLossConfig(gamma=-1.0)
        with pytest.raises(ValueError):
            TrainSchedule(max_iterations=0)


class TestProjection:
    def test_zero_weights_uniform(self, rng):
        projection = init_projection(4, 10, rng, zero=True)
        u = project_to_topic(projection, Tensor(np.ones((2, 4)))).values
        np.testing.assert_allclose(u, 0.1)

    def test_sums_to_one(self, rng):
        projection = init_projection(4, 10, rng)
        u = project_to_topic(projection, Tensor(rng.normal((6, 4)))).values
        assert u.shape == (6, 10)
        np.testing.assert_allclose(u.sum(axis=1), 1.0, atol=1e-6)

    def test_classifier_side_gradients(self, small_examples):
        config = _small_config()
        state, data = init_team(small_examples, config)
        inputs = enc.featurize(data.examples[:4], state.encoder_vocab, {}, config.max_len, use_topics=False)
        z_fixed = np.random.default_rng(0).dirichlet(np.ones(config.num_topics), size=4)
        labels = data.labels[:4]

        def loss():
            h = enc.encode_batch(state.encoder, inputs)
            ce = cross_entropy_from_logits(enc.classify_batch(state.encoder, h), labels)
            l_m = batch_mutual_loss(project_to_topic(state.projection, h), Tensor(z_fixed))
            return loss_classifier_side(ce, l_m, 1.0)

        params = dict(state.encoder.parameters())
        params.update({f"projection.{k}": v for k, v in state.projection.params.items()})
        report = grad_check(loss, params, samples=60, rng=SeededRng(2))
        assert report.passed, report.max_relative_error


class TestTrainerConfig:
    def test_variants(self):
        config = TrainerConfig()
        assert config.for_variant("full") == config
        assert config.for_variant("-ML").gamma == 0.0
        assert config.for_variant("-ET").use_topics is False
        ablated = config.for_variant("-ET&ML")
        assert (ablated.gamma, ablated.use_topics) == (0.0, False)
        assert set(VARIANTS) == {"full", "-ML", "-ET", "-ET&ML"}

    def test_unknown_variant(self):
        with pytest.raises(ValueError):
            TrainerConfig().for_variant("-XYZ")


class TestAlternatingTraining:
    def test_history_rows(self, small_examples):
        config = _small_config(ntm_epochs_per_iteration=2)
        state, data = init_team(small_examples, config)
        _, history = train_alternating(state, data, config)
        assert len(history) == config.max_iterations * 3
        assert list(history["phase"][:3]) == ["ntm", "ntm", "classifier"]
        assert (history.loc[history["phase"] == "ntm", "mutual"] > 0).all()

    def test_topics_extracted_per_target(self, small_examples):
        config = _small_config()
        state, data = init_team(small_examples, config)
        state, _ = train_alternating(state, data, config)
        assert set(state.topics) == set(data.targets)
        for target, topics in state.topics.items():
            assert not set(target.split()) & set(topics.terms)

    def test_gamma_zero_matches_standalone_ntm(self, small_examples):
        config = _small_config(gamma=0.0, max_iterations=3)
        state, data = init_team(small_examples, config)
        train_alternating(state, data, config)

        reference = ntm.init_ntm(config.ntm_config(state.ntm_vocab.size), ntm.compute_log_freq(data.bows),
                                 SeededRng(config.seed).derive(1))
        ntm.fit_ntm(reference, data.bows, config.max_iterations, SeededRng(config.seed).derive(11))
        for name, p in reference.parameters().items():
            np.testing.assert_array_equal(state.ntm.parameters()[name].data, p.data)

    def test_without_topics_or_mutual_matches_standalone_classifier(self, small_examples):
        config = _small_config().for_variant("-ET&ML")
        state, data = init_team(small_examples, config)
        train_alternating(state, data, config)

        encoder_config = config.encoder_config(state.encoder_vocab.size)
        reference = enc.init_encoder(encoder_config, SeededRng(config.seed).derive(2))
        inputs = enc.featurize(data.examples, state.encoder_vocab, {}, config.max_len, use_topics=False)
        optimizer = enc.make_optimizer(encoder_config)
        rng = SeededRng(config.seed).derive(12)
        for _ in range(config.max_iterations):
            enc.train_classifier_epoch(reference, inputs, data.labels, optimizer, config.batch_size, rng)
        for name, p in reference.parameters().items():
            np.testing.assert_array_equal(state.encoder.parameters()[name].data, p.data)

    def test_deterministic(self, small_examples):
        config = _small_config()
        histories = []
        for _ in range(2):
            state, data = init_team(small_examples, config)
            histories.append(train_alternating(state, data, config)[1])
        pd.testing.assert_frame_equal(histories[0], histories[1])

    def test_non_finite_loss_reports_iteration(self, small_examples):
        config = _small_config()
        state, data = init_team(small_examples, config)
        state.ntm.topic_word.data[:] = np.nan
        with pytest.raises(TrainingError) as info:
            train_alternating(state, data, config)
        assert info.value.iteration == 1

    def test_validation_column_filled(self, small_examples):
        config = _small_config(max_iterations=3, patience=10)
        split = DatasetSplit(train=small_examples[:18], val=small_examples[18:], test=[])
        model = fit_team(split, config)
        scores = model.history["val_macro_f1"].dropna()
        assert len(scores) == 3
        assert scores.between(0, 1).all()

    @pytest.mark.slow
    def test_fits_planted_corpus(self):
        examples = to_examples(_records(build_argument_dataset(n_per_target=60, random_state=11)))
        config = _small_config(num_topics=4, embed_dim=16, encoder_hidden_dim=16, max_iterations=3,
                               classifier_epochs_per_iteration=10, classifier_learning_rate=1e-2)
        train, val = examples[:len(examples) * 4 // 5], examples[len(examples) * 4 // 5:]
        state, data = init_team(train, config)
        state, _ = train_alternating(state, data, config)
        assert evaluate_macro_f1(state, data, config) >= 0.95
        assert evaluate_macro_f1(state, prepare_data(val, state.ntm_vocab), config) >= 0.80


class TestTeamModel:
    def test_save_load_predicts_identically(self, small_examples, tmp_path):
        config = _small_config(max_iterations=1)
        model = fit_team(DatasetSplit(train=small_examples, val=[], test=[]), config)
        path = model.save(str(tmp_path / "team.joblib"))
        loaded = TeamModel.load(path)
        assert loaded.predict(small_examples) == model.predict(small_examples)
        assert loaded.state.topics == model.state.topics
        np.testing.assert_array_equal(loaded.document_topics(small_examples), model.document_topics(small_examples))

    def test_split_record_round_trip(self, small_examples, tmp_path):
        model = fit_team(DatasetSplit(train=small_examples, val=[], test=[]), _small_config(max_iterations=1))
        assert model.split_info is None
        model.split_info = {"mode": "in_target_fold", "fold": 2, "held_out": None, "k_folds": 5, "seed": 3}
        loaded = TeamModel.load(model.save(str(tmp_path / "team.joblib")))
        assert loaded.split_info == model.split_info

    def test_load_missing(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            TeamModel.load(str(tmp_path / "nada.joblib"))

    def test_unseen_target_gets_topics(self, small_examples):
        config = _small_config(max_iterations=1)
        model = fit_team(DatasetSplit(train=small_examples, val=[], test=[]), config)
        unseen = [ArgumentExample(target="plant reactor", tokens=("safe", "reactor"), label="support")]
        assert len(model.predict(unseen)) == 1
        assert "plant reactor" in model.state.topics

    def test_prepare_data_labels(self, small_examples):
        config = _small_config()
        state, data = init_team(small_examples, config)
        again = prepare_data(small_examples, state.ntm_vocab)
        np.testing.assert_array_equal(again.labels, data.labels)
        assert again.bows.shape == (len(small_examples), state.ntm_vocab.size)
