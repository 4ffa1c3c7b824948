import logging

import numpy as np
import pytest

from ppn import engine, integration
from ppn.engine import ContractError, DimensionError


def node(arr):
    return engine.constant(np.asarray(arr, dtype=np.float64))


def proto_nodes(*mats):
    return [node(m) for m in mats]


class TestCosine:
    def test_identical_is_one(self):
        p = node([[1.0, 2.0], [3.0, 4.0]])
        s = integration.cosine_similarities([p], node([[1.0, 2.0], [3.0, 4.0]]))
        assert s.value == pytest.approx([1.0], abs=1e-15)

    def test_orthogonal_is_zero(self):
        s = integration.cosine_similarities(proto_nodes([[1.0, 0.0]]), node([[0.0, 1.0]]))
        assert s.value == pytest.approx([0.0], abs=1e-15)

    def test_half_overlap(self):
        # flattened: p = (1,0,0,1), h = (1,1,0,0); dot 1, norms sqrt(2) each
        p = [[1.0, 0.0], [0.0, 1.0]]
        h = [[1.0, 1.0], [0.0, 0.0]]
        s = integration.cosine_similarities(proto_nodes(p), node(h))
        assert s.value == pytest.approx([0.5], abs=1e-12)

    def test_scale_invariance(self):
        rng = np.random.default_rng(0)
        p, h = rng.normal(size=(2, 3)), rng.normal(size=(2, 3))
        base = integration.cosine_similarities(proto_nodes(p), node(h)).value
        scaled = integration.cosine_similarities(proto_nodes(7.0 * p), node(0.03 * h)).value
        assert scaled == pytest.approx(base, abs=1e-12)

    def test_zero_norm_guard(self, caplog):
        protos = proto_nodes([[1.0, 2.0]], [[0.0, 0.0]])
        with caplog.at_level(logging.WARNING, logger="ppn.integration"):
            s = integration.cosine_similarities(protos, node([[0.5, 0.5]]))
        assert s.value[1] == 0.0
        assert s.value[0] != 0.0   # healthy slot unaffected
        assert any("zero-norm" in r.message for r in caplog.records)

    def test_range_bound(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            protos = proto_nodes(*rng.normal(size=(4, 3, 2)))
            s = integration.cosine_similarities(protos, node(rng.normal(size=(3, 2))))
            assert np.all(np.abs(s.value) <= 1.0 + 1e-12)


class TestTransforms:
    def test_raw_is_identity(self):
        v = node([0.3, -0.2])
        assert integration.transform_similarities(v, "raw") is v

    def test_relu_clips_negatives(self):
        out = integration.transform_similarities(node([-0.5, 0.0, 0.8]), "relu")
        assert np.array_equal(out.value, [0.0, 0.0, 0.8])

    def test_softmax_normalizes(self):
        out = integration.transform_similarities(node([0.1, 0.9, -0.3]), "softmax")
        assert out.value.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(out.value > 0)
        assert np.argmax(out.value) == 1

    def test_unknown_rejected(self):
        with pytest.raises(ContractError):
            integration.transform_similarities(node([0.1]), "sparsemax")


class TestIntegrate:
    def test_single_prototype_hand_case(self):
        w_h = node([[1.0], [1.0]])
        h = node([[1.0, 0.0], [0.0, 1.0]])
        s = node([1.0])
        h_prime, h_p = integration.integrate(w_h, h, s)
        assert np.array_equal(h_prime.value, [[1.0, 1.0]])
        assert np.array_equal(h_p.value, [1.0, 1.0])

    def test_similarity_weights_mix_rows(self):
        w_h = node(np.eye(2))
        h = node([[2.0, 0.0], [0.0, 4.0]])
        _, h_p = integration.integrate(w_h, h, node([0.5, 0.25]))
        assert np.allclose(h_p.value, [1.0, 1.0])

    def test_shape_mismatch_rejected(self):
        with pytest.raises(DimensionError):
            integration.integrate(node(np.ones((3, 2))), node(np.ones((2, 4))), node(np.ones(2)))
        with pytest.raises(DimensionError):
            integration.integrate(node(np.ones((2, 3))), node(np.ones((2, 4))), node(np.ones(2)))


class TestHeads:
    def test_sigmoid_of_one(self):
        y = integration.predict_risk(node([1.0, 0.0]), node(0.0), node([1.0, 5.0]))
        assert float(y.value) == pytest.approx(0.7310585786300049, abs=1e-12)

    def test_bias_only(self):
        y = integration.predict_risk(node([0.0]), node(0.0), node([3.0]))
        assert float(y.value) == pytest.approx(0.5, abs=1e-15)

    def test_similarity_head(self):
        y = integration.predict_from_similarities(node([2.0, -1.0]), node(0.5), node([0.5, 0.5]))
        assert float(y.value) == pytest.approx(1.0 / (1.0 + np.exp(-1.0)), abs=1e-12)


class TestRawTwins:
    def test_bit_identical_full_path(self):
        rng = np.random.default_rng(2)
        protos = rng.normal(size=(3, 2, 4))
        h = rng.normal(size=(2, 4))
        w_h = rng.normal(size=(2, 3))
        w, b = rng.normal(size=4), rng.normal(size=())
        s = integration.cosine_similarities(proto_nodes(*protos), node(h))
        _, h_p = integration.integrate(node(w_h), node(h), s)
        y = integration.predict_risk(node(w), node(b), h_p)

        s_raw = integration.cosine_similarities_raw(list(protos), h)
        _, h_p_raw = integration.integrate_raw(w_h, h, s_raw)
        y_raw = integration.predict_risk_raw(w, b, h_p_raw)
        assert np.array_equal(s.value, s_raw)
        assert np.array_equal(h_p.value, h_p_raw)
        assert float(y.value) == y_raw

    @pytest.mark.parametrize("transform", ["raw", "relu", "softmax"])
    def test_transform_twins(self, transform):
        sims = np.array([0.4, -0.2, 0.9])
        graph = integration.transform_similarities(node(sims), transform).value
        raw = integration.transform_similarities_raw(sims, transform)
        assert np.array_equal(graph, raw)

    def test_similarity_head_twin(self):
        u, b, s = np.array([0.3, -0.7]), np.array(0.2), np.array([0.1, 0.8])
        y = integration.predict_from_similarities(node(u), node(b), node(s))
        assert float(y.value) == integration.predict_from_similarities_raw(u, b, s)


class TestBatchedBuilders:
    def setup_method(self):
        rng = np.random.default_rng(3)
        self.protos = proto_nodes(*rng.normal(size=(3, 2, 4)))
        self.hs = rng.normal(size=(5, 2, 4))
        self.w_h = node(rng.normal(size=(2, 3)))
        self.w, self.b = node(rng.normal(size=4)), node(rng.normal(size=()))

    def test_cosine_bank_matches_singles(self):
        bank = integration.cosine_bank(self.protos, node(self.hs.reshape(5, -1))).value
        for i, h in enumerate(self.hs):
            single = integration.cosine_similarities(self.protos, node(h)).value
            assert bank[i] == pytest.approx(single, abs=1e-15)

    def test_cosine_bank_zero_row_guard(self, caplog):
        hs = self.hs.copy().reshape(5, -1)
        hs[2] = 0.0
        with caplog.at_level(logging.WARNING, logger="ppn.integration"):
            bank = integration.cosine_bank(self.protos, node(hs)).value
        assert np.array_equal(bank[2], np.zeros(3))
        assert any("zero-norm" in r.message for r in caplog.records)

    @pytest.mark.parametrize("transform", ["raw", "relu", "softmax"])
    def test_transform_batch_matches_singles(self, transform):
        mat = np.array([[0.4, -0.2, 0.9], [-0.1, 0.0, 0.3]])
        batch = integration.transform_similarities_batch(node(mat), transform).value
        for i, row in enumerate(mat):
            single = integration.transform_similarities(node(row), transform).value
            assert batch[i] == pytest.approx(single, abs=1e-15)

    def test_integrate_batch_matches_singles(self):
        s_mat = np.random.default_rng(4).normal(size=(5, 3))
        h_flat = node(self.hs.reshape(5, -1))
        fused = integration.integrate_batch(self.w_h, h_flat, node(s_mat)).value
        for i in range(5):
            _, h_p = integration.integrate(self.w_h, node(self.hs[i]), node(s_mat[i]))
            assert fused[i] == pytest.approx(h_p.value, abs=1e-14)

    def test_batched_heads_match_singles(self):
        rng = np.random.default_rng(5)
        h_p = rng.normal(size=(4, 4))
        ys = integration.predict_risk_batch(self.w, self.b, node(h_p)).value
        for i in range(4):
            y = integration.predict_risk(self.w, self.b, node(h_p[i]))
            assert ys[i] == pytest.approx(float(y.value), abs=1e-15)
