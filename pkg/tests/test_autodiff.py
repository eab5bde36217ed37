import math

import numpy as np
import pytest

from eegnet import autodiff as ad
from eegnet.autodiff import Tensor, backward, softmax_cross_entropy
from eegnet.gradcheck import finite_diff_check


def t64(data, grad=True):
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=grad)


class TestTensor:
    def test_rejects_nan_and_inf(self):
        with pytest.raises(ValueError):
            Tensor([1.0, np.nan])
        with pytest.raises(ValueError):
            Tensor([np.inf])

    def test_integer_input_promoted_to_float(self):
        t = Tensor([1, 2, 3])
        assert t.dtype == np.float32


class TestMatmul:
    def test_identity(self):
        out = ad.matmul(t64(np.eye(2)), t64([[3.0, 4.0], [5.0, 6.0]]))
        np.testing.assert_array_equal(out.data, [[3.0, 4.0], [5.0, 6.0]])

    def test_hand_arithmetic(self):
        out = ad.matmul(t64([[1.0, 2.0]]), t64([[3.0], [4.0]]))
        np.testing.assert_array_equal(out.data, [[11.0]])

    def test_matches_triple_loop_oracle(self):
        rng = np.random.default_rng(1)
        a = rng.standard_normal((7, 5))
        b = rng.standard_normal((5, 3))
        expected = np.zeros((7, 3))
        for i in range(7):
            for j in range(3):
                for k in range(5):
                    expected[i, j] += a[i, k] * b[k, j]
        out = ad.matmul(t64(a), t64(b))
        assert np.abs(out.data - expected).max() <= 1e-12

    def test_shape_mismatch_reports_both_shapes(self):
        with pytest.raises(ValueError, match=r"\(2, 3\).*\(2, 3\)"):
            ad.matmul(t64(np.ones((2, 3))), t64(np.ones((2, 3))))


class TestActivations:
    def test_values_at_zero(self):
        zero = t64([0.0])
        assert ad.elu(zero).data[0] == 0.0
        assert ad.sigmoid(zero).data[0] == 0.5
        assert ad.tanh(zero).data[0] == 0.0

    def test_elu_asymptote(self):
        assert abs(ad.elu(t64([-30.0])).data[0] - (-1.0)) <= 1e-9

    def test_elu_negative_branch(self):
        x = t64([-1.5])
        assert np.isclose(ad.elu(x).data[0], math.expm1(-1.5))

    @pytest.mark.parametrize("op", [ad.elu, ad.sigmoid, ad.tanh])
    def test_gradients_match_finite_differences(self, op):
        rng = np.random.default_rng(3)
        x = t64(rng.standard_normal(20))
        c = rng.standard_normal(20)
        err = finite_diff_check(
            lambda x: ad.tensor_sum(ad.mul(op(x), Tensor.constant(c))), [x]
        )
        assert err <= 1e-6


class TestSoftmaxCrossEntropy:
    def test_uniform_case(self):
        loss, probs = softmax_cross_entropy(t64(np.zeros(5)), 3)
        np.testing.assert_allclose(probs, 0.2)
        assert abs(loss.item() - math.log(5)) <= 1e-12

    def test_saturated_case(self):
        loss, _ = softmax_cross_entropy(t64([10.0, -10.0]), 0)
        assert loss.item() < 1e-4

    def test_probabilities_are_a_distribution(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            _, probs = softmax_cross_entropy(t64(rng.standard_normal(5)), 0)
            assert abs(probs.sum() - 1.0) <= 1e-9
            assert np.all(probs > 0) and np.all(probs < 1)

    def test_gradient_is_probs_minus_onehot(self):
        rng = np.random.default_rng(6)
        logits = t64(rng.standard_normal(4))
        loss, probs = softmax_cross_entropy(logits, 2)
        backward(loss)
        expected = probs.copy()
        expected[2] -= 1.0
        np.testing.assert_allclose(logits.grad, expected, atol=1e-12)
        err = finite_diff_check(lambda x: softmax_cross_entropy(x, 2)[0],
                                [t64(rng.standard_normal(4))])
        assert err <= 1e-6

    def test_label_out_of_range_rejected(self):
        with pytest.raises(ValueError, match="out of range"):
            softmax_cross_entropy(t64(np.zeros(3)), 3)
        with pytest.raises(ValueError, match="out of range"):
            softmax_cross_entropy(t64(np.zeros(3)), -1)

    def test_batched_matches_single(self):
        rng = np.random.default_rng(7)
        z = rng.standard_normal((6, 4))
        labels = np.array([0, 1, 2, 3, 1, 0])
        loss_b, probs_b = ad.softmax_cross_entropy_batch(t64(z), labels)
        singles = [softmax_cross_entropy(t64(z[i]), labels[i]) for i in range(6)]
        np.testing.assert_allclose(loss_b.item(), np.mean([s[0].item() for s in singles]),
                                   atol=1e-12)
        np.testing.assert_allclose(probs_b, np.stack([s[1] for s in singles]), atol=1e-12)

    def test_batched_label_validation(self):
        with pytest.raises(ValueError):
            ad.softmax_cross_entropy_batch(t64(np.zeros((2, 3))), np.array([0, 3]))


class TestBackward:
    def test_sum_gradient_is_ones(self):
        x = t64([1.0, 2.0, 3.0])
        backward(ad.tensor_sum(x))
        np.testing.assert_array_equal(x.grad, np.ones(3))

    def test_fanout_accumulation(self):
        x = t64([1.5])
        backward(ad.tensor_sum(ad.add(x, x)))
        np.testing.assert_array_equal(x.grad, [2.0])

    def test_shared_subexpression_matches_symbolic(self):
        # loss = (x*x) + (x*x) = 2x^2 -> d/dx = 4x
        x = t64([3.0])
        y = ad.mul(x, x)
        backward(ad.tensor_sum(ad.add(y, y)))
        np.testing.assert_allclose(x.grad, [12.0])
        # loss = x * (x + y) -> d/dx = 2x + y, d/dy = x
        x, y = t64([2.0]), t64([5.0])
        backward(ad.tensor_sum(ad.mul(x, ad.add(x, y))))
        np.testing.assert_allclose(x.grad, [9.0])
        np.testing.assert_allclose(y.grad, [2.0])

    def test_non_scalar_root_rejected(self):
        with pytest.raises(ValueError, match="scalar"):
            backward(t64([1.0, 2.0]))

    def test_repeated_backward_resets_gradients(self):
        x = t64([1.0, 1.0])
        loss = ad.tensor_sum(x)
        backward(loss)
        backward(loss)
        np.testing.assert_array_equal(x.grad, np.ones(2))

    def test_linear_function_near_exact(self):
        rng = np.random.default_rng(8)
        x = t64(rng.standard_normal(6))
        c = rng.standard_normal(6)
        err = finite_diff_check(lambda x: ad.tensor_sum(ad.mul(x, Tensor.constant(c))), [x])
        assert err <= 1e-9


class TestShapeOps:
    def test_broadcast_add_and_mul_gradients(self):
        rng = np.random.default_rng(9)
        a = t64(rng.standard_normal((3, 4)))
        b = t64(rng.standard_normal(4))
        c = rng.standard_normal((3, 4))
        weighted = Tensor.constant(c)
        err = finite_diff_check(
            lambda a, b: ad.tensor_sum(ad.mul(ad.add(a, b), weighted)), [a, b]
        )
        assert err <= 1e-8

    def test_reshape_transpose_getitem_concat_gradients(self):
        rng = np.random.default_rng(10)
        x = t64(rng.standard_normal((2, 6)))
        y = t64(rng.standard_normal((2, 3)))
        c = rng.standard_normal((2, 7))
        weighted = Tensor.constant(c)

        def fn(x, y):
            xr = ad.reshape(x, (3, 4))
            xt = ad.transpose(xr, (1, 0))      # (4, 3)
            part = xt[0:2, :]                   # (2, 3)
            joined = ad.concat([part, y, part[:, 0:1]], axis=1)  # (2, 7)
            return ad.tensor_sum(ad.mul(joined, weighted))

        assert finite_diff_check(fn, [x, y]) <= 1e-8

    def test_sum_axis_gradients(self):
        rng = np.random.default_rng(11)
        x = t64(rng.standard_normal((4, 3)))
        c = rng.standard_normal(3)
        weighted = Tensor.constant(c)
        err = finite_diff_check(
            lambda x: ad.tensor_sum(ad.mul(ad.tensor_sum(x, axis=0), weighted)), [x]
        )
        assert err <= 1e-8


class TestDropout:
    def test_keep_one_is_identity(self):
        x = t64([1.0, 2.0])
        assert ad.dropout(x, 1.0, np.random.default_rng(0)) is x

    def test_invalid_keep_rejected(self):
        for bad in (0.0, -0.1, 1.5):
            with pytest.raises(ValueError):
                ad.dropout(t64([1.0]), bad, np.random.default_rng(0))

    def test_expectation_matches_identity(self):
        # inverted dropout: E[mask * x] == x; 10,000 masks, 2% band
        rng = np.random.default_rng(12)
        x = Tensor(np.full(8, 3.0))
        total = np.zeros(8)
        n = 10_000
        for _ in range(n):
            total += ad.dropout(x, 0.5, rng).data
        np.testing.assert_allclose(total / n, x.data, rtol=0.02)

    def test_mask_values_are_zero_or_scaled(self):
        rng = np.random.default_rng(13)
        out = ad.dropout(Tensor(np.ones(1000)), 0.5, rng).data
        assert set(np.unique(out)) <= {0.0, 2.0}
