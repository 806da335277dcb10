import numpy as np
import pytest

from corpus import Vocabulary
from topics import (
    EmbeddingTable,
    ExtractedTopics,
    KeyTermLists,
    build_target_mask,
    extract_for_targets,
    extract_topics,
    filter_topics,
    load_embedding_file,
    read_topic_report,
    score_topic,
    write_topic_report,
)


def _vocab(words):
    return Vocabulary(index_of={w: i for i, w in enumerate(words)})


def _brute_force(row, allowed, n):
    return sorted(allowed, key=lambda i: (-row[i], i))[:n]


class TestTargetMask:
    vocab = _vocab(["gun", "control", "law", "safety"])

    def test_target_columns_zeroed(self):
        mask = build_target_mask(["gun", "control"], self.vocab, num_topics=2)
        np.testing.assert_array_equal(mask.mask, [[0, 0, 1, 1], [0, 0, 1, 1]])
        np.testing.assert_array_equal(mask.masked_columns, [0, 1])

    def test_oov_target_masks_nothing(self):
        assert build_target_mask(["abortion"], self.vocab, 3).mask.all()

    def test_empty_target(self):
        assert build_target_mask([], self.vocab, 3).mask.all()


class TestFilterTopics:
    def test_unmasked_row(self):
        mask = build_target_mask([], _vocab("abcd"), num_topics=1)
        lists = filter_topics(np.array([[5.0, 1.0, 9.0, 2.0]]), mask, 2)
        np.testing.assert_array_equal(lists.ids, [[2, 0]])
        np.testing.assert_array_equal(lists.weights, [[9.0, 5.0]])

    def test_masked_row(self):
        mask = build_target_mask(["c"], _vocab("abcd"), num_topics=1)
        lists = filter_topics(np.array([[5.0, 1.0, 9.0, 2.0]]), mask, 2)
        np.testing.assert_array_equal(lists.ids, [[0, 3]])

    def test_full_length_is_permutation(self, np_rng):
        mask = build_target_mask([], _vocab("abcdef"), num_topics=3)
        lists = filter_topics(np_rng.normal(size=(3, 6)), mask, 6)
        for row in lists.ids:
            assert sorted(row) == list(range(6))

    def test_n_out_of_range(self):
        mask = build_target_mask(["a"], _vocab("abc"), num_topics=1)
        with pytest.raises(ValueError):
            filter_topics(np.ones((1, 3)), mask, 3)
        with pytest.raises(ValueError):
            filter_topics(np.ones((1, 3)), mask, 0)

    def test_shape_mismatch(self):
        mask = build_target_mask([], _vocab("abc"), num_topics=2)
        with pytest.raises(ValueError):
            filter_topics(np.ones((3, 3)), mask, 1)

    def test_matches_full_sort(self, np_rng):
        for _ in range(1000):
            k, v = np_rng.integers(1, 5), np_rng.integers(2, 12)
            words = [f"w{i}" for i in range(v)]
            masked = [w for w in words if np_rng.random() < 0.3][: v - 1]
            mask = build_target_mask(masked, _vocab(words), num_topics=k)
            allowed = [i for i in range(v) if words[i] not in masked]
            n = int(np_rng.integers(1, len(allowed) + 1))
            # inteiros pequenos para forçar empates
            topic_word = np_rng.integers(-3, 4, size=(k, v)).astype(float)
            lists = filter_topics(topic_word, mask, n)
            for row, ids, weights in zip(topic_word, lists.ids, lists.weights):
                assert list(ids) == _brute_force(row, allowed, n)
                assert np.all(np.diff(weights) <= 0)


class TestScoreTopic:
    def test_all_identical(self):
        target = np.array([[1.0, 0.0]])
        assert score_topic(target, np.tile(target, (10, 1)), 0.5) == pytest.approx(5.0)

    def test_orthogonal(self):
        target = np.array([[1.0, 0.0, 0.0]])
        topic = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        assert score_topic(target, topic, 0.5) == 0.0

    def test_duplicated_target_halves_score(self, np_rng):
        target = np_rng.normal(size=(1, 4))
        target /= np.linalg.norm(target)
        topic = np_rng.normal(size=(6, 4))
        topic /= np.linalg.norm(topic, axis=1, keepdims=True)
        single = score_topic(target, topic, 0.5)
        np.testing.assert_allclose(score_topic(np.vstack([target, target]), topic, 0.5), single / 2)

    def test_order_invariance(self, np_rng):
        target, topic = np_rng.normal(size=(3, 5)), np_rng.normal(size=(8, 5))
        base = score_topic(target, topic, 0.3)
        np.testing.assert_allclose(score_topic(target[::-1], topic[np_rng.permutation(8)], 0.3), base)

    def test_keeps_ceil_of_fraction(self):
        target = np.array([[1.0, 0.0]])
        topic = np.array([[1.0, 0.0], [0.5, 0.5], [0.0, 1.0]])
        # ceil(0.5 * 3) = 2 maiores: 1.0 + 0.5
        assert score_topic(target, topic, 0.5) == pytest.approx(1.5)

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.2])
    def test_ratio_bounds(self, p):
        with pytest.raises(ValueError):
            score_topic(np.ones((1, 2)), np.ones((2, 2)), p)

    def test_empty_lists(self):
        with pytest.raises(ValueError):
            score_topic(np.zeros((0, 2)), np.ones((2, 2)), 0.5)


class TestExtractTopics:
    def _setup(self, rng, num_topics=4, n=5, dim=50, noise=0.1):
        target_vec = rng.normal(size=dim)
        words = ["alvo"]
        vectors = [target_vec]
        ids = []
        for k in range(num_topics):
            row = []
            for j in range(n):
                words.append(f"t{k}_{j}")
                base = target_vec if k == 0 else rng.normal(size=dim)
                vectors.append(base + noise * rng.normal(size=dim))
                row.append(len(words) - 1)
            ids.append(row)
        vocab = _vocab(words)
        table = EmbeddingTable.from_matrix(np.vstack(vectors), vocab)
        lists = KeyTermLists(ids=np.array(ids), weights=np.ones((num_topics, n)))
        return lists, table, vocab

    def test_selects_nearest_neighbour_topic(self, np_rng):
        for _ in range(100):
            lists, table, vocab = self._setup(np_rng)
            perm = np_rng.permutation(lists.num_topics)
            shuffled = KeyTermLists(ids=lists.ids[perm], weights=lists.weights[perm])
            chosen = extract_topics(shuffled, table, ["alvo"], 0.5, vocab)
            assert chosen.topic_index == int(np.flatnonzero(perm == 0)[0])
            assert all(term.startswith("t0_") for term in chosen.terms)

    def test_single_topic(self, np_rng):
        lists, table, vocab = self._setup(np_rng, num_topics=1)
        assert extract_topics(lists, table, ["alvo"], 0.5, vocab).topic_index == 0

    def test_rescaling_embeddings(self, np_rng):
        lists, table, vocab = self._setup(np_rng, noise=2.0)
        scaled = EmbeddingTable(vectors=table.vectors * 3.7, index_of=table.index_of)
        a = extract_topics(lists, table, ["alvo"], 0.5, vocab)
        b = extract_topics(lists, scaled, ["alvo"], 0.5, vocab)
        assert a.topic_index == b.topic_index
        np.testing.assert_allclose(a.scores, b.scores)

    def test_permutation_keeps_term_set(self, np_rng):
        lists, table, vocab = self._setup(np_rng, noise=1.0)
        perm = np.array([2, 0, 3, 1])
        shuffled = KeyTermLists(ids=lists.ids[perm], weights=lists.weights[perm])
        a = extract_topics(lists, table, ["alvo"], 0.5, vocab)
        b = extract_topics(shuffled, table, ["alvo"], 0.5, vocab)
        assert set(a.terms) == set(b.terms)
        assert perm[b.topic_index] == a.topic_index

    def test_target_without_embedding(self, np_rng):
        lists, table, vocab = self._setup(np_rng)
        with pytest.raises(ValueError):
            extract_topics(lists, table, ["desconhecida"], 0.5, vocab)


class TestExtractForTargets:
    def test_target_words_never_extracted(self, np_rng):
        words = ["gun", "control", "law", "rights", "crime", "safety", "owner", "police"]
        vocab = _vocab(words)
        table = EmbeddingTable.from_matrix(np_rng.normal(size=(len(words), 6)), vocab)
        for _ in range(50):
            topic_word = np_rng.normal(size=(3, len(words)))
            extracted = extract_for_targets(topic_word, vocab, table, ["gun control"], n=4, p=0.5)
            assert not {"gun", "control"} & set(extracted["gun control"].terms)
            assert len(extracted["gun control"].terms) == 4

    def test_n_clamped_to_allowed_words(self, np_rng):
        vocab = _vocab(["gun", "law", "crime"])
        table = EmbeddingTable.from_matrix(np_rng.normal(size=(3, 4)), vocab)
        extracted = extract_for_targets(np_rng.normal(size=(2, 3)), vocab, table, ["gun"], n=10)
        assert sorted(extracted["gun"].terms) == ["crime", "law"]

    def test_target_without_embeddings_gives_empty(self, np_rng):
        vocab = _vocab(["law", "crime"])
        table = EmbeddingTable.from_matrix(np_rng.normal(size=(2, 4)), vocab)
        extracted = extract_for_targets(np_rng.normal(size=(2, 2)), vocab, table, ["abortion"], n=1)
        assert extracted["abortion"] == ExtractedTopics.empty()


class TestFiles:
    def test_embedding_file(self, tmp_path):
        path = tmp_path / "emb.txt"
        path.write_text("gun 1.0 0.0\ncontrol 0.0 2.0\n", encoding="utf-8")
        table = load_embedding_file(str(path))
        assert table.dim == 2
        np.testing.assert_array_equal(table.lookup(["control", "oov"]), [[0.0, 2.0], [0.0, 0.0]])

    def test_missing_embedding_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_embedding_file(str(tmp_path / "nada.txt"))

    def test_topic_report_round_trip(self, tmp_path):
        extracted = {
            "gun control": ExtractedTopics(topic_index=3, terms=("law", "crime"), score=1.25, weights=(0.5, 0.25)),
            "abortion": ExtractedTopics.empty(),
        }
        loaded = read_topic_report(write_topic_report(extracted, str(tmp_path / "report.tsv")))
        assert loaded["gun control"].terms == ("law", "crime")
        assert loaded["gun control"].topic_index == 3
        assert loaded["abortion"].terms == ()
