"""Point-set losses: definitions, properties, and gradients."""

import numpy as np
import pytest

from handmesh.autodiff import Tensor
from handmesh.errors import ConfigError, ShapeError
from handmesh.losses import LossWeights, l1_set_loss, total_loss

from _helpers import check_op_gradients


class TestL1SetLoss:
    def test_equal_inputs_give_zero(self):
        x = np.random.default_rng(0).uniform(-1, 1, (21, 3))
        assert l1_set_loss(Tensor(x), Tensor(x.copy())).item() == 0.0

    def test_single_point_l1_not_euclidean(self):
        pred = Tensor(np.array([[3.0, -4.0]]))
        gt = Tensor(np.zeros((1, 2)))
        assert l1_set_loss(pred, gt).item() == pytest.approx(7.0)

    def test_l2_mode_single_point_is_euclidean(self):
        pred = Tensor(np.array([[3.0, -4.0]]))
        gt = Tensor(np.zeros((1, 2)))
        assert l1_set_loss(pred, gt, per_point_norm="l2").item() == pytest.approx(5.0)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(1)
        a = rng.uniform(-1, 1, (21, 3))
        b = rng.uniform(-1, 1, (21, 3))
        got = l1_set_loss(Tensor(a), Tensor(b)).item()
        expect = 0.0
        for i in range(21):
            expect += sum(abs(a[i, d] - b[i, d]) for d in range(3))
        expect /= 21
        assert got == pytest.approx(expect, abs=1e-15)

    def test_scale_property(self):
        rng = np.random.default_rng(2)
        a = rng.uniform(-1, 1, (7, 3))
        b = rng.uniform(-1, 1, (7, 3))
        base = l1_set_loss(Tensor(a), Tensor(b)).item()
        for c in (2.0, -3.5, 0.25):
            scaled = l1_set_loss(Tensor(c * a), Tensor(c * b)).item()
            assert scaled == pytest.approx(abs(c) * base, rel=1e-12)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            l1_set_loss(Tensor(np.zeros((3, 2))), Tensor(np.zeros((4, 2))))

    def test_unknown_norm_rejected(self):
        x = Tensor(np.zeros((2, 2)))
        with pytest.raises(ConfigError):
            l1_set_loss(x, x, per_point_norm="linf")

    def test_gradients_both_modes(self):
        rng = np.random.default_rng(3)
        a = rng.uniform(-1, 1, (5, 3))
        b = rng.uniform(-1, 1, (5, 3))
        for mode in ("l1", "l2"):
            check_op_gradients(
                lambda p, g, m=mode: l1_set_loss(p, g, per_point_norm=m), [a, b]
            )


class TestTotalLoss:
    def test_default_weights_unit_components(self):
        w = LossWeights()
        one = Tensor(np.array(1.0))
        assert total_loss(one, one, one, w).item() == pytest.approx(21.0)

    def test_all_zero(self):
        w = LossWeights()
        zero = Tensor(np.array(0.0))
        assert total_loss(zero, zero, zero, w).item() == 0.0

    def test_selector_weights(self):
        w = LossWeights(k2d=0.0, k3d=0.0, kv=1.0)
        out = total_loss(
            Tensor(np.array(5.0)), Tensor(np.array(7.0)), Tensor(np.array(0.25)), w
        )
        assert out.item() == pytest.approx(0.25)

    def test_negative_weight_rejected(self):
        with pytest.raises(ConfigError):
            LossWeights(k2d=-1.0)

    def test_gradient_through_weighted_sum(self):
        rng = np.random.default_rng(4)
        pred = rng.uniform(-1, 1, (4, 3))
        gt = rng.uniform(-1, 1, (4, 3))
        w = LossWeights()

        def loss(p, g):
            term = l1_set_loss(p, g)
            return total_loss(term, term, term, w)

        check_op_gradients(loss, [pred, gt])
