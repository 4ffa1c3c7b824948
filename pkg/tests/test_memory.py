import itertools
import logging

import numpy as np
import pytest

from ppn import memory
from ppn.data import ConfigurationError
from ppn.engine import ContractError, ParameterSet


def planted(k=3, per=20, dim=6, spread=0.05, seed=0):
    rng = np.random.default_rng(seed)
    means = rng.normal(scale=10.0, size=(k, dim))
    emb = np.concatenate([means[j] + spread * rng.normal(size=(per, dim)) for j in range(k)])
    ids = [f"p{i:03d}" for i in range(k * per)]
    return emb, ids, means


def fresh_memory(k=3, n_rows=2, hidden=3):
    return memory.init_memory(ParameterSet(), k, n_rows, hidden)


class TestKMeans:
    def test_planted_recovery(self):
        emb, _, means = planted(seed=1)
        rng = np.random.default_rng(2)
        centers = memory.minibatch_kmeans(emb, 3, memory.kmeans_pp_init(emb, 3, rng), seed=2)
        d = np.sqrt(((centers[:, None] - means[None]) ** 2).sum(axis=2))
        assert sorted(np.argmin(d, axis=1).tolist()) == [0, 1, 2]  # one center per cluster
        assert np.min(d, axis=1).max() < 0.5

    def test_exact_centroids_are_fixed(self):
        # every point sits on a centroid, so no center can move
        pts = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]])
        emb = np.repeat(pts, 4, axis=0)
        out = memory.minibatch_kmeans(emb, 3, pts.copy(), seed=0)
        assert np.allclose(out, pts, atol=1e-12)

    def test_pp_init_picks_data_points(self):
        emb, _, _ = planted(seed=3)
        centers = memory.kmeans_pp_init(emb, 3, np.random.default_rng(0))
        for c in centers:
            assert np.any(np.all(emb == c, axis=1))

    def test_pp_init_coincident_points(self):
        emb = np.ones((5, 2))
        centers = memory.kmeans_pp_init(emb, 3, np.random.default_rng(0))
        assert np.array_equal(centers, np.ones((3, 2)))

    def test_too_few_points_rejected(self):
        with pytest.raises(ConfigurationError):
            memory.minibatch_kmeans(np.ones((2, 3)), 4, np.ones((4, 3)))

    def test_bad_init_shape_rejected(self):
        with pytest.raises(ConfigurationError):
            memory.minibatch_kmeans(np.ones((8, 3)), 2, np.ones((2, 5)))


class TestNearestPatient:
    def test_exact_hit(self):
        emb = np.array([[0.0, 0.0], [3.0, 4.0], [6.0, 8.0]])
        pid, vec = memory.nearest_patient(np.array([3.1, 4.1]), emb, ["a", "b", "c"])
        assert pid == "b"
        assert np.array_equal(vec, emb[1])

    def test_tie_takes_smaller_id(self):
        emb = np.array([[1.0, 0.0], [-1.0, 0.0]])
        pid, _ = memory.nearest_patient(np.zeros(2), emb, ["zz", "aa"])
        assert pid == "aa"

    def test_matches_linear_scan(self):
        rng = np.random.default_rng(7)
        emb = rng.normal(size=(40, 5))
        ids = [f"q{i}" for i in range(40)]
        for _ in range(25):
            target = rng.normal(size=5)
            pid, vec = memory.nearest_patient(target, emb, ids)
            want = min(range(40), key=lambda i: (np.linalg.norm(emb[i] - target), ids[i]))
            assert pid == ids[want]
            assert np.array_equal(vec, emb[want])


class TestMatchPrototypes:
    def test_small_example(self):
        res = memory.match_prototypes([[1.0, 2.0], [3.0, 1.0]])
        assert res.permutation == [0, 1]
        assert res.total_cost == 2.0

    def test_antidiagonal(self):
        res = memory.match_prototypes([[5.0, 1.0], [1.0, 5.0]])
        assert res.permutation == [1, 0]
        assert res.total_cost == 2.0

    def test_rejects_bad_input(self):
        with pytest.raises(ContractError):
            memory.match_prototypes(np.ones((2, 3)))
        with pytest.raises(ContractError):
            memory.match_prototypes(np.array([[np.inf, 1.0], [1.0, 1.0]]))

    @pytest.mark.parametrize("k", [2, 3, 4, 5, 6, 7])
    def test_brute_force_agreement(self, k):
        rng = np.random.default_rng(k)
        for _ in range(30):
            cost = rng.integers(0, 5, size=(k, k)).astype(float)  # many ties on purpose
            res = memory.match_prototypes(cost)
            best = min(sum(cost[j, p[j]] for j in range(k))
                       for p in itertools.permutations(range(k)))
            assert res.total_cost == pytest.approx(best, abs=1e-9)
            winners = [p for p in itertools.permutations(range(k))
                       if sum(cost[j, p[j]] for j in range(k)) <= best + 1e-9]
            assert res.permutation == list(min(winners))

    def test_never_beaten_by_random_permutations(self):
        rng = np.random.default_rng(99)
        cost = rng.random((20, 20))
        res = memory.match_prototypes(cost)
        for _ in range(1000):
            p = rng.permutation(20)
            assert res.total_cost <= cost[np.arange(20), p].sum() + 1e-12


class TestProgressiveSelect:
    def test_first_call_pins_real_patients(self):
        emb, ids, _ = planted(seed=4)
        mem = fresh_memory()
        res = memory.progressive_select(mem, emb, ids, epoch=0, seed=0)
        assert res is None
        assert mem.initialized
        assert mem.last_refresh_epoch == 0
        for j in range(mem.k):
            i = ids.index(mem.source_ids[j])
            assert np.array_equal(mem.nodes[j].value.reshape(-1), emb[i])
        assert len(set(mem.source_ids)) == 3

    def test_one_prototype_per_planted_cluster(self):
        emb, ids, _ = planted(k=3, per=30, seed=5)
        mem = fresh_memory()
        memory.progressive_select(mem, emb, ids, epoch=0, seed=1)
        clusters = {int(ids.index(sid)) // 30 for sid in mem.source_ids}
        assert clusters == {0, 1, 2}

    def test_refresh_is_fixed_point_on_stable_embeddings(self):
        emb, ids, _ = planted(seed=6)
        mem = fresh_memory()
        memory.progressive_select(mem, emb, ids, epoch=0, seed=0)
        before = (mem.flats().copy(), list(mem.source_ids))
        res = memory.progressive_select(mem, emb, ids, epoch=10, seed=0)
        assert res.permutation == [0, 1, 2]   # matching keeps slot identities
        assert np.array_equal(mem.flats(), before[0])
        assert mem.source_ids == before[1]
        assert mem.refresh_epochs == [0, 10]

    def test_too_few_patients_rejected(self):
        mem = fresh_memory(k=3)
        with pytest.raises(ConfigurationError):
            memory.progressive_select(mem, np.ones((2, 6)), ["a", "b"], epoch=0)


class TestAssignStep:
    def test_noop_when_already_pinned(self):
        emb, ids, _ = planted(seed=8)
        mem = fresh_memory()
        memory.progressive_select(mem, emb, ids, epoch=0, seed=0)
        before = mem.flats().copy()
        memory.assign_step(mem, emb, ids)
        assert np.array_equal(mem.flats(), before)

    def test_snaps_back_after_drift(self):
        emb, ids, _ = planted(seed=9)
        mem = fresh_memory()
        memory.progressive_select(mem, emb, ids, epoch=0, seed=0)
        before = mem.flats().copy()
        for node in mem.nodes:
            node.value += 0.01   # a small gradient-style drift
        memory.assign_step(mem, emb, ids)
        assert np.array_equal(mem.flats(), before)

    def test_duplicate_targets_resolve_to_distinct_patients(self, caplog):
        emb = np.array([[0.0, 0.0], [0.2, 0.0], [5.0, 5.0]])
        ids = ["a", "b", "c"]
        mem = fresh_memory(k=2, n_rows=1, hidden=2)
        for node in mem.nodes:
            node.value[...] = np.array([[0.01, 0.0]])  # both nearest to "a"
        with caplog.at_level(logging.WARNING, logger="ppn.memory"):
            memory.assign_step(mem, emb, ids)
        assert mem.source_ids == ["a", "b"]
        assert not caplog.records   # resolution avoided a collapse, no warning

    def test_collapse_warning_when_patients_run_out(self, caplog):
        emb = np.array([[0.0, 0.0]])
        mem = fresh_memory(k=2, n_rows=1, hidden=2)
        with caplog.at_level(logging.WARNING, logger="ppn.memory"):
            memory.assign_step(mem, emb, ["only"])
        assert mem.source_ids == ["only", "only"]
        assert any("diversity" in r.message for r in caplog.records)
