import numpy as np
import pytest

from eegnet import autodiff as ad
from eegnet.autodiff import Tensor, backward
from eegnet.optim import adam_step, init_adam


def params_of(**arrays):
    return {k: Tensor.parameter(np.asarray(v, dtype=np.float64)) for k, v in arrays.items()}


class TestAdam:
    def test_zero_gradient_is_noop(self):
        params = params_of(w=[1.0, -2.0], b=[[0.5]])
        state = init_adam(params, learning_rate=1e-2)
        # warm the state with a non-zero step first, then feed zeros
        grads = {"w": np.array([0.3, -0.1]), "b": np.array([[1.0]])}
        params, state = adam_step(params, grads, state)
        snapshot = {k: p.data.copy() for k, p in params.items()}
        zeros = {k: np.zeros_like(p.data) for k, p in params.items()}
        params, state = adam_step(params, zeros, state)
        for k in params:
            np.testing.assert_array_equal(params[k].data, snapshot[k])

    def test_first_step_magnitude_closed_form(self):
        # m_hat = v_hat = 1 after one unit-gradient step, so the update is
        # lr * 1 / (1 + eps)
        lr = 1e-4
        params = params_of(w=[0.0])
        state = init_adam(params, learning_rate=lr)
        params, state = adam_step(params, {"w": np.array([1.0])}, state)
        expected = lr * 1.0 / (1.0 + state.epsilon)
        assert abs(abs(params["w"].data[0]) - expected) <= 1e-18
        assert params["w"].data[0] == -expected

    def test_ten_steps_on_quadratic_strictly_decrease(self):
        params = params_of(w=[1.0])
        state = init_adam(params, learning_rate=1e-4)
        values = []
        for _ in range(10):
            w = params["w"]
            loss = ad.tensor_sum(ad.mul(w, w))
            values.append(loss.item())
            backward(loss)
            params, state = adam_step(params, {"w": w.grad}, state)
        final = ad.tensor_sum(ad.mul(params["w"], params["w"])).item()
        values.append(final)
        assert all(b < a for a, b in zip(values, values[1:]))

    def test_step_count_increments(self):
        params = params_of(w=[1.0])
        state = init_adam(params)
        for expected in (1, 2, 3):
            params, state = adam_step(params, {"w": np.zeros(1)}, state)
            assert state.step == expected

    def test_shape_mismatch_rejected(self):
        params = params_of(w=[1.0, 2.0])
        state = init_adam(params)
        with pytest.raises(ValueError, match="shape mismatch"):
            adam_step(params, {"w": np.zeros(3)}, state)

    def test_name_mismatch_rejected(self):
        params = params_of(w=[1.0])
        state = init_adam(params)
        with pytest.raises(ValueError, match="name mismatch"):
            adam_step(params, {"v": np.zeros(1)}, state)

    def test_moment_shapes_match_parameters(self):
        params = params_of(w=np.ones((2, 3)), b=np.ones(4))
        state = init_adam(params)
        for k, p in params.items():
            assert state.first_moment[k].shape == p.data.shape
            assert state.second_moment[k].shape == p.data.shape
