"""Tensor engine: forward values, gradient oracles, tape contracts."""

import numpy as np
import pytest

from treevq import autodiff as ad
from treevq.errors import DomainError, ShapeError

from conftest import finite_difference_check


class TestForwardValues:
    def test_matmul_identity(self):
        a = ad.constant([[1.0, 2.0], [3.0, 4.0]])
        out = ad.matmul(ad.constant(np.eye(2)), a)
        np.testing.assert_array_equal(out.data, a.data)

    def test_matmul_1x1(self):
        out = ad.matmul(ad.constant([[1.0, 2.0]]), ad.constant([[3.0], [4.0]]))
        assert out.data.tolist() == [[11.0]]

    def test_matmul_shape_error_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
            ad.matmul(ad.constant(np.ones((2, 3))), ad.constant(np.ones((2, 3))))

    def test_relu_negative(self):
        assert ad.relu(ad.constant(-1.0)).item() == 0.0

    def test_sigmoid_zero(self):
        assert ad.sigmoid(ad.constant(0.0)).item() == 0.5

    def test_log_domain_error(self):
        with pytest.raises(DomainError):
            ad.log(ad.constant([1.0, -2.0]))

    def test_mean_and_norm(self):
        assert ad.tmean(ad.constant([2.0, 4.0, 6.0])).item() == 4.0
        assert ad.l2_norm(ad.constant([3.0, 4.0])).item() == 5.0

    def test_invalid_axis(self):
        with pytest.raises(ShapeError):
            ad.tsum(ad.constant([1.0, 2.0]), axis=1)

    def test_cosine_similarity_values(self):
        v = ad.constant([0.3, -1.2, 2.0])
        assert ad.cosine_similarity(v, v).item() == pytest.approx(1.0)
        out = ad.cosine_similarity(ad.constant([1.0, 0.0]),
                                   ad.constant([0.0, 1.0]))
        assert out.item() == pytest.approx(0.0, abs=1e-15)

    def test_cosine_zero_norm_rejected(self):
        with pytest.raises(DomainError):
            ad.cosine_similarity(ad.constant([0.0, 0.0]), ad.constant([1.0, 0.0]))

    def test_mse_identical_is_zero(self):
        x = ad.constant([[1.0, 2.0]])
        assert ad.mse(x, x).item() == 0.0

    def test_bce_logit_zero_target_one(self):
        out = ad.bce_with_logits(ad.constant([0.0]), ad.constant([1.0]))
        assert out.item() == pytest.approx(np.log(2.0), abs=1e-12)

    def test_cross_entropy_label_out_of_range(self):
        with pytest.raises(DomainError):
            ad.softmax_cross_entropy(ad.constant([[0.0, 1.0]]), [2])


class TestGradientOracles:
    """Central finite differences are the oracle for every backward rule."""

    def test_matmul(self, rng):
        a = ad.Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        b = ad.Tensor(rng.normal(size=(4, 2)), requires_grad=True)
        finite_difference_check(lambda: ad.tsum(ad.matmul(a, b)), [a, b])

    @pytest.mark.parametrize("op", [
        lambda x: ad.tsum(ad.relu(x)),
        lambda x: ad.tsum(ad.sigmoid(x)),
        lambda x: ad.tsum(ad.exp(x)),
        lambda x: ad.tsum(ad.power(x, 3.0)),
        lambda x: ad.l2_norm(x),
        lambda x: ad.tmean(x, axis=1),
        lambda x: ad.tsum(ad.tmean(x, axis=0)),
        lambda x: ad.tsum(ad.rowwise_mean(x)),
    ])
    def test_elementwise_and_reductions(self, op, rng):
        x = ad.Tensor(rng.normal(size=(4, 3)) + 2.5, requires_grad=True)
        finite_difference_check(lambda: ad.tsum(op(x)) if op(x).shape else op(x),
                                [x])

    def test_sigmoid_at_point(self):
        x = ad.Tensor([0.3], requires_grad=True)
        finite_difference_check(lambda: ad.tsum(ad.sigmoid(x)), [x], rtol=1e-6)

    def test_log_and_mul(self, rng):
        x = ad.Tensor(rng.uniform(0.5, 2.0, size=(5,)), requires_grad=True)
        y = ad.Tensor(rng.uniform(0.5, 2.0, size=(5,)), requires_grad=True)
        finite_difference_check(lambda: ad.tsum(ad.mul(ad.log(x), y)), [x, y])

    def test_cosine_similarity(self, rng):
        a = ad.Tensor(rng.normal(size=6), requires_grad=True)
        b = ad.Tensor(rng.normal(size=6), requires_grad=True)
        finite_difference_check(lambda: ad.cosine_similarity(a, b), [a, b])

    def test_row_normalize(self, rng):
        x = ad.Tensor(rng.normal(size=(4, 5)) + 1.0, requires_grad=True)
        w = ad.constant(rng.normal(size=(4, 5)))
        finite_difference_check(
            lambda: ad.tsum(ad.mul(ad.row_normalize(x), w)), [x])

    def test_gather_segment_concat(self, rng):
        x = ad.Tensor(rng.normal(size=(5, 3)), requires_grad=True)
        idx = np.array([0, 2, 2, 4, 1, 0])
        seg = np.array([1, 0, 3, 1, 2, 1])

        def loss():
            g = ad.gather_rows(x, idx)
            s = ad.segment_sum(g, seg, 4)
            c = ad.concat_cols(s, ad.power(s, 2.0))
            return ad.tsum(ad.concat_rows([c, ad.scale(c, 0.5)]))

        finite_difference_check(loss, [x])

    def test_rowvec_ops(self, rng):
        x = ad.Tensor(rng.normal(size=(4, 3)), requires_grad=True)
        v = ad.Tensor(rng.normal(size=3), requires_grad=True)
        finite_difference_check(
            lambda: ad.tsum(ad.power(ad.add_rowvec(x, v), 2.0)), [x, v])
        finite_difference_check(
            lambda: ad.tsum(ad.power(ad.mul_rowvec(x, v), 2.0)), [x, v])

    def test_scale_rows(self, rng):
        x = ad.Tensor(rng.normal(size=(4, 3)), requires_grad=True)
        coeff = rng.normal(size=4)
        finite_difference_check(
            lambda: ad.tsum(ad.power(ad.scale_rows(x, coeff), 2.0)), [x])

    def test_batch_norm(self, rng):
        x = ad.Tensor(rng.normal(size=(6, 3)), requires_grad=True)
        gamma = ad.Tensor(rng.uniform(0.5, 1.5, size=3), requires_grad=True)
        beta = ad.Tensor(rng.normal(size=3), requires_grad=True)
        w = ad.constant(rng.normal(size=(6, 3)))

        def loss():
            out, _, _ = ad.batch_norm_train(x, gamma, beta)
            return ad.tsum(ad.mul(out, w))

        finite_difference_check(loss, [x, gamma, beta], rtol=2e-5, atol=1e-6)

    def test_losses(self, rng):
        logits = ad.Tensor(rng.normal(size=(5, 3)), requires_grad=True)
        labels = rng.integers(0, 3, size=5)
        finite_difference_check(
            lambda: ad.softmax_cross_entropy(logits, labels), [logits])

        raw = ad.Tensor(rng.normal(size=7), requires_grad=True)
        targets = ad.constant((rng.random(7) < 0.5).astype(float))
        finite_difference_check(lambda: ad.bce_with_logits(raw, targets), [raw])

        pred = ad.Tensor(rng.normal(size=(4, 2)), requires_grad=True)
        target = ad.constant(rng.normal(size=(4, 2)))
        finite_difference_check(lambda: ad.mse(pred, target), [pred])


class TestGradientRouting:
    def test_stop_gradient_value_and_zero_grad(self, rng):
        x = ad.Tensor(rng.normal(size=(3, 2)), requires_grad=True)
        with ad.GradTape() as tape:
            out = ad.tsum(ad.stop_gradient(x))
        np.testing.assert_array_equal(out.data, np.sum(x.data))
        tape.backward(out)
        assert x.grad is None

    def test_stop_gradient_split_pull(self):
        # loss ||sg(z) - c||^2: gradient lands on c as 2(c - z), never on z
        z = ad.Tensor([[2.0, 0.0]], requires_grad=True)
        c = ad.Tensor([[1.0, 1.0]], requires_grad=True)
        with ad.GradTape() as tape:
            loss = ad.tsum(ad.power(ad.sub(ad.stop_gradient(z), c), 2.0))
        tape.backward(loss)
        np.testing.assert_allclose(c.grad, 2.0 * (c.data - z.data))
        assert z.grad is None

    def test_straight_through_forward_and_routing(self, rng):
        q = ad.Tensor(rng.normal(size=(3, 2)), requires_grad=True)
        z = ad.Tensor(rng.normal(size=(3, 2)), requires_grad=True)
        with ad.GradTape() as tape:
            st = ad.straight_through(q, z)
            loss = ad.tsum(st)
        np.testing.assert_array_equal(st.data, q.data)
        tape.backward(loss)
        np.testing.assert_array_equal(z.grad, np.ones((3, 2)))
        assert q.grad is None

    def test_straight_through_composite_hand_case(self):
        # loss = sum((2*ST(q, z))^2) with q fixed at forward: d/dz = 8*q
        q = ad.Tensor([[1.0, -2.0]], requires_grad=True)
        z = ad.Tensor([[5.0, 7.0]], requires_grad=True)
        with ad.GradTape() as tape:
            loss = ad.tsum(ad.power(ad.scale(ad.straight_through(q, z), 2.0), 2.0))
        tape.backward(loss)
        np.testing.assert_allclose(z.grad, 8.0 * q.data)
        assert q.grad is None

    def test_straight_through_shape_mismatch(self):
        with pytest.raises(ShapeError):
            ad.straight_through(ad.constant(np.ones((2, 2))),
                                ad.constant(np.ones((3, 2))))


class TestTapeContract:
    def test_second_backward_rejected(self):
        x = ad.Tensor([1.0], requires_grad=True)
        with ad.GradTape() as tape:
            loss = ad.tsum(ad.power(x, 2.0))
        tape.backward(loss)
        with pytest.raises(RuntimeError, match="already ran"):
            tape.backward(loss)

    def test_grad_accumulates_within_one_tape(self):
        x = ad.Tensor([2.0], requires_grad=True)
        with ad.GradTape() as tape:
            loss = ad.add(ad.tsum(ad.power(x, 2.0)), ad.tsum(ad.scale(x, 3.0)))
        tape.backward(loss)
        np.testing.assert_allclose(x.grad, [2.0 * 2.0 + 3.0])

    def test_no_recording_without_tape(self):
        x = ad.Tensor([1.0], requires_grad=True)
        out = ad.power(x, 2.0)
        assert out.tape_id is None and not out.requires_grad

    def test_nested_tape_rejected(self):
        with ad.GradTape():
            with pytest.raises(RuntimeError, match="already active"):
                with ad.GradTape():
                    pass

    def test_backward_needs_scalar(self):
        x = ad.Tensor([1.0, 2.0], requires_grad=True)
        with ad.GradTape() as tape:
            y = ad.scale(x, 2.0)
        with pytest.raises(ShapeError):
            tape.backward(y)


class TestSoftmaxShiftInvariance:
    def test_shift_invariance(self, rng):
        logits = rng.normal(size=(6, 4))
        labels = rng.integers(0, 4, size=6)
        base = ad.softmax_cross_entropy(ad.constant(logits), labels).item()
        for shift in (-50.0, 3.5, 200.0):
            shifted = ad.softmax_cross_entropy(
                ad.constant(logits + shift), labels).item()
            assert abs(shifted - base) <= 1e-10
