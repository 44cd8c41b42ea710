import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from motvla import tensor as te
from motvla.tensor import AdamW, DimensionError, MaskError, NumericalError, OptimizerState, Tensor, adamw_step, backward

from oracles import finite_difference_check


def leaf(x):
    return Tensor(np.array(x, dtype=float), requires_grad=True)


class TestMatmul:
    def test_identity(self):
        b = np.array([[5.0, 6], [7, 8]])
        np.testing.assert_array_equal(te.matmul(Tensor(np.eye(2)), Tensor(b)).data, b)

    def test_dot_product_oracle(self):
        a, b = np.array([[1.0, 2], [3, 4]]), np.array([[5.0, 6], [7, 8]])
        expected = [[sum(a[i, k] * b[k, j] for k in range(2)) for j in range(2)] for i in range(2)]
        assert expected == [[19, 22], [43, 50]]
        np.testing.assert_array_equal(te.matmul(Tensor(a), Tensor(b)).data, expected)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        a, b = leaf(rng.standard_normal((3, 3))), leaf(rng.standard_normal((3, 3)))
        assert finite_difference_check(lambda: te.total(te.matmul(a, b)), [a]) < 1e-6

    def test_gradient_rules(self):
        rng = np.random.default_rng(1)
        a, b = leaf(rng.standard_normal((2, 3))), leaf(rng.standard_normal((3, 4)))
        g = rng.standard_normal((2, 4))
        backward(te.total(te.mul(te.matmul(a, b), Tensor(g))))
        np.testing.assert_allclose(a.grad, g @ b.data.T)
        np.testing.assert_allclose(b.grad, a.data.T @ g)

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 2\)"):
            te.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 2))))


class TestMaskedSoftmax:
    def test_symmetric(self):
        np.testing.assert_allclose(te.masked_softmax(Tensor([0.0, 0.0]), [True, True]).data, [0.5, 0.5])

    def test_single_allowed(self):
        out = te.masked_softmax(Tensor([9.0, 3.0]), [False, True]).data
        assert out[0] == 0.0 and out[1] == 1.0

    def test_exponentiation_oracle(self):
        e = np.exp([1.0, 2.0, 3.0])
        out = te.masked_softmax(Tensor([1.0, 2.0, 3.0]), [True] * 3).data
        np.testing.assert_allclose(out, e / e.sum(), rtol=1e-14)
        np.testing.assert_allclose(out, [0.09003, 0.24473, 0.66524], atol=1e-5)

    def test_fully_masked_row_is_an_error(self):
        with pytest.raises(MaskError):
            te.masked_softmax(Tensor(np.zeros((2, 2))), np.array([[True, False], [False, False]]))

    def test_stable_for_large_logits(self):
        out = te.masked_softmax(Tensor([1000.0, 1001.0]), [True, True]).data
        assert np.all(np.isfinite(out))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**31 - 1))
    def test_probability_distribution(self, q, k, seed):
        rng = np.random.default_rng(seed)
        mask = rng.random((q, k)) < 0.6
        mask[np.arange(q), rng.integers(0, k, q)] = True
        p = te.masked_softmax(Tensor(rng.standard_normal((q, k)) * 5), mask).data
        assert np.all(p >= 0)
        assert np.all(p[~mask] == 0.0)
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)

    def test_gradient(self):
        rng = np.random.default_rng(2)
        x = leaf(rng.standard_normal((3, 4)))
        mask = np.array([[1, 1, 0, 1], [1, 0, 0, 0], [1, 1, 1, 1]], dtype=bool)
        w = Tensor(rng.standard_normal((3, 4)))
        assert finite_difference_check(lambda: te.total(te.mul(te.masked_softmax(x, mask), w)), [x]) < 1e-6


class TestRmsNorm:
    def test_constant_vector(self):
        np.testing.assert_allclose(te.rms_norm(Tensor([2.0, 2.0]), Tensor([1.0, 1.0]), 1e-300).data, [1, 1])

    def test_rms_oracle(self):
        out = te.rms_norm(Tensor([3.0, 4.0]), Tensor([1.0, 1.0]), 1e-300).data
        np.testing.assert_allclose(out, np.array([3, 4]) / np.sqrt(12.5))
        np.testing.assert_allclose(out, [0.84853, 1.13137], atol=1e-5)

    def test_zero_input(self):
        np.testing.assert_array_equal(te.rms_norm(Tensor([0.0, 0.0]), Tensor([1.0, 1.0]), 1e-6).data, [0, 0])

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            te.rms_norm(Tensor([1.0, 2.0]), Tensor([1.0, 1.0, 1.0]))

    def test_gradient(self):
        rng = np.random.default_rng(3)
        x, g = leaf(rng.standard_normal((2, 5))), leaf(rng.standard_normal(5))
        w = Tensor(rng.standard_normal((2, 5)))
        assert finite_difference_check(lambda: te.total(te.mul(te.rms_norm(x, g), w)), [x, g]) < 1e-6


class TestSilu:
    def test_values(self):
        out = te.silu(Tensor([0.0, 1.0, -20.0])).data
        assert out[0] == 0.0
        assert out[1] == pytest.approx(1 / (1 + np.exp(-1)), rel=1e-14)
        assert out[1] == pytest.approx(0.73106, abs=1e-5)
        assert out[2] == pytest.approx(-20 / (1 + np.exp(20)), rel=1e-12)
        assert out[2] == pytest.approx(-4.12e-8, rel=1e-2)

    def test_extreme_inputs_stay_finite(self):
        assert np.all(np.isfinite(te.silu(Tensor([-800.0, 800.0])).data))

    def test_gradient(self):
        x = leaf(np.linspace(-4, 4, 9))
        assert finite_difference_check(lambda: te.total(te.silu(x)), [x]) < 1e-6


class TestLosses:
    def test_equal_is_zero(self):
        x = Tensor([1.0, -2.0, 3.0])
        assert te.mse_loss(x, x).item() == 0.0 and te.l1_loss(x, x).item() == 0.0

    def test_unit_offset(self):
        t = np.random.default_rng(0).standard_normal((3, 2))
        assert te.mse_loss(Tensor(t + 1), Tensor(t)).item() == pytest.approx(1.0)
        assert te.l1_loss(Tensor(t + 1), Tensor(t)).item() == pytest.approx(1.0)

    def test_hand_arithmetic(self):
        assert te.mse_loss(Tensor([1.0, 2.0]), Tensor([0.0, 0.0])).item() == 2.5
        assert te.l1_loss(Tensor([1.0, 2.0]), Tensor([0.0, 0.0])).item() == 1.5

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            te.mse_loss(Tensor([1.0]), Tensor([1.0, 2.0]))
        with pytest.raises(DimensionError):
            te.l1_loss(Tensor([1.0]), Tensor([1.0, 2.0]))


class TestBackward:
    def test_sum_gives_ones(self):
        x = leaf(np.zeros((2, 3, 4)))
        backward(te.total(x))
        np.testing.assert_array_equal(x.grad, np.ones((2, 3, 4)))

    def test_hand_chain_rule(self):
        w = leaf([[2.0]])
        backward(te.mse_loss(te.matmul(w, Tensor([[3.0]])), Tensor([[0.0]])))
        assert w.grad[0, 0] == 36.0

    def test_non_scalar_loss_rejected(self):
        with pytest.raises(ValueError, match="scalar"):
            backward(leaf([1.0, 2.0]))

    def test_unreachable_param_gets_zero(self):
        x, y = leaf([1.0, 2.0]), leaf([[5.0]])
        backward(te.total(x), [x, y])
        np.testing.assert_array_equal(y.grad, [[0.0]])

    def test_shared_parameter_accumulates(self):
        x = leaf([1.0, 2.0, 3.0])
        backward(te.total(te.add(te.mul(x, x), te.scale(x, 3.0))))
        np.testing.assert_allclose(x.grad, 2 * x.data + 3)

    def test_overwrites_instead_of_accumulating_across_calls(self):
        x = leaf([1.0])
        for _ in range(2):
            backward(te.total(te.scale(x, 2.0)), [x])
        np.testing.assert_array_equal(x.grad, [2.0])

    def test_no_grad_records_nothing(self):
        x = leaf([1.0])
        with te.no_grad():
            y = te.scale(x, 2.0)
        assert not y.requires_grad

    def test_forward_is_deterministic(self):
        rng = np.random.default_rng(4)
        a, b = rng.standard_normal((4, 4)), rng.standard_normal((4, 4))
        run = lambda: te.silu(te.rms_norm(te.matmul(Tensor(a), Tensor(b)), Tensor(np.ones(4)))).data  # noqa: E731
        assert run().tobytes() == run().tobytes()


class TestOpGradients:
    @pytest.mark.parametrize("seed", range(3))
    def test_structural_ops(self, seed):
        rng = np.random.default_rng(seed)
        a, b = leaf(rng.standard_normal((2, 3))), leaf(rng.standard_normal((2, 2)))
        table = leaf(rng.standard_normal((4, 3)))
        w = Tensor(rng.standard_normal((2, 5)))

        def loss():
            cat = te.concat([a, b], axis=1)
            part = te.slice_axis(cat, 1, 1, 4)
            emb = te.embedding(table, np.array([[0, 3], [3, 1]]))
            mixed = te.add(te.matmul(part, te.transpose(te.slice_axis(table, 0, 0, 3))), te.mean(emb))
            spread = te.total(te.mul(te.broadcast(a, (2, 2, 3)), te.broadcast(a, (2, 2, 3))))
            return te.add(te.add(te.total(te.mul(cat, w)), te.total(te.sub(mixed, a))), spread)

        assert finite_difference_check(loss, [a, b, table]) < 1e-6

    def test_embedding_out_of_range(self):
        with pytest.raises(IndexError):
            te.embedding(Tensor(np.zeros((3, 2))), np.array([3]))


class TestAdamW:
    def test_zero_grad_no_decay_is_identity(self):
        p = np.array([1.0, -2.0])
        adamw_step([p], [np.zeros(2)], OptimizerState(lr=0.1))
        np.testing.assert_array_equal(p, [1.0, -2.0])

    def test_first_step_bias_correction(self):
        p = np.array([1.0])
        state = OptimizerState(lr=0.1, beta1=0.9, beta2=0.999, eps=1e-8)
        adamw_step([p], [np.array([1.0])], state)
        # m_hat = 1, v_hat = 1, so the step is lr / (1 + eps)
        assert p[0] == pytest.approx(1.0 - 0.1 / (1 + 1e-8), abs=1e-15)
        assert p[0] == pytest.approx(0.9, abs=1e-7)
        assert state.step == 1

    def test_decoupled_decay_only(self):
        p = np.array([2.0, -4.0])
        adamw_step([p], [np.zeros(2)], OptimizerState(lr=0.1, weight_decay=0.01))
        np.testing.assert_array_equal(p, np.array([2.0, -4.0]) * 0.999)

    def test_nan_gradient_aborts_with_name(self):
        with pytest.raises(NumericalError, match="layer.w"):
            adamw_step([np.zeros(1)], [np.array([np.nan])], OptimizerState(), names=["layer.w"])

    def test_step_counter_increases(self):
        x = leaf([1.0, 2.0])
        opt = AdamW([x], lr=0.01)
        steps = []
        for _ in range(3):
            backward(te.total(te.mul(x, x)), [x])
            opt.step()
            steps.append(opt.state.step)
        assert steps == [1, 2, 3]
        assert all(m.shape == x.shape for m in opt.state.m + opt.state.v)
