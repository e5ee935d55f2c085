"""Backward-pass correctness: analytic gradients vs central differences."""

import numpy as np
import pytest

from handmesh import autodiff as ad
from handmesh.autodiff import Adam, Tape, Tensor, backward
from handmesh.errors import ContractError

from _helpers import check_op_gradients, rel_err


@pytest.fixture
def rng():
    return np.random.default_rng(987)


class TestBackwardBasics:
    def test_sum_gradient_is_ones(self, rng):
        x = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        with Tape() as tape:
            loss = ad.sum_all(x)
        backward(loss, tape)
        np.testing.assert_array_equal(x.grad, np.ones((3, 4)))

    def test_square_sum_gradient(self):
        x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
        with Tape() as tape:
            loss = ad.sum_all(ad.mul(x, x))
        backward(loss, tape)
        np.testing.assert_array_equal(x.grad, [2.0, 4.0, 6.0])

    def test_non_scalar_loss_rejected(self, rng):
        x = Tensor(rng.normal(size=(2, 2)), requires_grad=True)
        with Tape() as tape:
            y = ad.mul(x, x)
        with pytest.raises(ContractError):
            backward(y, tape)

    def test_replay_accumulates_twice(self, rng):
        x = Tensor(rng.normal(size=5), requires_grad=True)
        with Tape() as tape:
            loss = ad.sum_all(ad.mul(x, x))
        backward(loss, tape)
        once = x.grad.copy()
        backward(loss, tape)
        np.testing.assert_allclose(x.grad, 2.0 * once, rtol=1e-15)

    def test_no_tape_records_nothing(self, rng):
        x = Tensor(rng.normal(size=3), requires_grad=True)
        y = ad.mul(x, x)
        assert y.requires_grad
        tape = Tape()
        assert len(tape) == 0

    def test_shared_input_accumulates(self, rng):
        x = Tensor(rng.normal(size=4), requires_grad=True)
        with Tape() as tape:
            loss = ad.sum_all(ad.add(ad.mul(x, x), x))
        backward(loss, tape)
        np.testing.assert_allclose(x.grad, 2.0 * x.data + 1.0, rtol=1e-14)


class TestPerOpGradients:
    """Every differentiable op against the finite-difference oracle."""

    def test_matmul(self, rng):
        check_op_gradients(
            lambda a, b: ad.sum_all(ad.mul(y := ad.matmul(a, b), y)),
            [rng.normal(size=(3, 4)), rng.normal(size=(4, 2))],
        )

    def test_add_sub_mul_scale(self, rng):
        check_op_gradients(
            lambda a, b: ad.sum_all(ad.mul(ad.scale(ad.sub(ad.add(a, b), ad.mul(a, b)), 1.7), a)),
            [rng.normal(size=(3, 3)), rng.normal(size=(3, 3))],
        )

    def test_scalar_broadcast(self, rng):
        check_op_gradients(
            lambda a, s: ad.sum_all(ad.mul(ad.add(a, s), ad.mul(a, s))),
            [rng.normal(size=(2, 3)), rng.normal(size=())],
        )

    def test_relu(self, rng):
        check_op_gradients(
            lambda a: ad.sum_all(ad.mul(y := ad.relu(a), y)),
            [rng.normal(size=(4, 4)) + 0.05],
        )

    def test_sigmoid(self, rng):
        check_op_gradients(
            lambda a: ad.sum_all(ad.mul(y := ad.sigmoid(a), y)), [rng.normal(size=(3, 5))]
        )

    def test_absolute(self, rng):
        x = rng.normal(size=(3, 4))
        x[np.abs(x) < 0.1] += 0.5  # keep away from the kink
        check_op_gradients(lambda a: ad.sum_all(ad.absolute(a)), [x])

    def test_sqrt(self, rng):
        check_op_gradients(
            lambda a: ad.sum_all(ad.sqrt(a)), [rng.uniform(0.5, 2.0, size=(3, 3))]
        )

    def test_sum_axis_and_reshape(self, rng):
        check_op_gradients(
            lambda a: ad.sum_all(ad.mul(y := ad.sum_axis(ad.reshape(a, (2, 6)), 1), y)),
            [rng.normal(size=(3, 4))],
        )

    def test_transpose_concat_take_slice(self, rng):
        def loss(a, b):
            cat = ad.concat([ad.transpose(a), b], axis=0)
            took = ad.take_rows(cat, [0, 2, 2, 1])
            return ad.sum_all(ad.mul(s := ad.slice_cols(took, 0, 2), s))

        check_op_gradients(loss, [rng.normal(size=(3, 2)), rng.normal(size=(2, 3))])

    def test_linear(self, rng):
        check_op_gradients(
            lambda x, w, b: ad.sum_all(ad.mul(y := ad.linear(x, w, b), y)),
            [rng.normal(size=(3, 4)), rng.normal(size=(4, 2)), rng.normal(size=2)],
        )

    def test_conv2d(self, rng):
        check_op_gradients(
            lambda x, w, b: ad.sum_all(
                ad.mul(y := ad.conv2d(x, w, b, stride=2, padding=1), y)
            ),
            [rng.normal(size=(2, 5, 5)), rng.normal(size=(3, 2, 3, 3)), rng.normal(size=3)],
        )

    def test_conv_transpose2d(self, rng):
        check_op_gradients(
            lambda x, w, b: ad.sum_all(
                ad.mul(y := ad.conv_transpose2d(x, w, b, stride=2), y)
            ),
            [rng.normal(size=(2, 3, 3)), rng.normal(size=(2, 3, 2, 2)), rng.normal(size=3)],
        )

    def test_conv1d_depthwise(self, rng):
        check_op_gradients(
            lambda x, w: ad.sum_all(ad.mul(y := ad.conv1d_depthwise(x, w, padding=1), y)),
            [rng.normal(size=(5, 3)), rng.normal(size=(3, 3))],
        )

    def test_softmax(self, rng):
        check_op_gradients(
            lambda x: ad.sum_all(ad.mul(y := ad.softmax(x, axis=-1), ad.add(y, 0.3))),
            [rng.normal(size=(3, 5))],
        )

    def test_layer_norm(self, rng):
        check_op_gradients(
            lambda x, g, b: ad.sum_all(ad.mul(y := ad.layer_norm(x, g, b), y)),
            [rng.normal(size=(3, 6)), rng.uniform(0.5, 1.5, size=6), rng.normal(size=6)],
        )

    def test_grid_sample_both_inputs(self, rng):
        coords = rng.uniform(-0.85, 0.85, size=(6, 2))
        check_op_gradients(
            lambda f, c: ad.sum_all(ad.mul(y := ad.grid_sample_bilinear(f, c), y)),
            [rng.normal(size=(3, 5, 4)), coords],
        )

    def test_grid_sample_clamped_coord_has_zero_coord_grad(self, rng):
        f = Tensor(rng.normal(size=(2, 4, 4)), requires_grad=True)
        c = Tensor(np.array([[1.7, 0.0]]), requires_grad=True)
        with Tape() as tape:
            loss = ad.sum_all(ad.grid_sample_bilinear(f, c))
        backward(loss, tape)
        assert c.grad[0, 0] == 0.0


class TestAdam:
    def test_zero_grad_leaves_param_unchanged(self):
        p = Tensor([1.0, -2.0], requires_grad=True)
        opt = Adam([p], lr=0.1)
        opt.step()
        np.testing.assert_array_equal(p.data, [1.0, -2.0])

    def test_first_step_moves_by_lr_against_sign(self):
        p = Tensor([1.0, -1.0], requires_grad=True)
        p.grad = np.array([0.5, -3.0])
        opt = Adam([p], lr=0.01)
        opt.step()
        # bias-corrected m_hat/sqrt(v_hat) is exactly +-1 on the first step
        np.testing.assert_allclose(p.data, [1.0 - 0.01, -1.0 + 0.01], rtol=1e-6)

    def test_three_step_trace_matches_hand_unrolled(self):
        lr, b1, b2, eps = 0.05, 0.9, 0.999, 1e-8
        grads = [0.3, -0.7, 1.1]
        # independent scalar unroll of the update recurrence
        theta, m, v = 2.0, 0.0, 0.0
        for t, g in enumerate(grads, start=1):
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            theta -= lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)

        p = Tensor(2.0, requires_grad=True)
        opt = Adam([p], lr=lr, betas=(b1, b2), eps=eps)
        for g in grads:
            p.grad = np.asarray(g, dtype=np.float64)
            opt.step()
        assert abs(p.item() - theta) <= 1e-12

    def test_shape_mismatch_rejected(self):
        p = Tensor([1.0, 2.0], requires_grad=True)
        p.grad = np.zeros(3)
        with pytest.raises(ContractError):
            Adam([p], lr=0.1).step()


def test_chained_pipeline_gradient(rng):
    """A conv -> sample -> attention-ish -> loss chain, end to end."""

    def loss_fn(img, kw, coords, w):
        fmap = ad.conv2d(img, kw, stride=1, padding=1)
        s = ad.grid_sample_bilinear(fmap, coords)
        att = ad.softmax(ad.matmul(s, ad.transpose(s)), axis=-1)
        out = ad.linear(ad.matmul(att, s), w)
        return ad.sum_all(ad.mul(out, out))

    arrays = [
        rng.normal(size=(2, 6, 6)) * 0.5,
        rng.normal(size=(3, 2, 3, 3)) * 0.5,
        rng.uniform(-0.8, 0.8, size=(4, 2)),
        rng.normal(size=(3, 2)),
    ]
    worst = check_op_gradients(loss_fn, arrays)
    assert worst <= 1e-4


def test_gradients_flow_to_intermediates(rng):
    x = Tensor(rng.normal(size=(3, 3)), requires_grad=True)
    with Tape() as tape:
        mid = ad.mul(x, x)
        loss = ad.sum_all(ad.mul(mid, 3.0))
    backward(loss, tape)
    np.testing.assert_allclose(mid.grad, np.full((3, 3), 3.0))
    assert rel_err(x.grad, 6.0 * x.data) < 1e-12
