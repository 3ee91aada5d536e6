import numpy as np
import pytest

from crosscap import autodiff as ad
from crosscap.errors import ContractError
from crosscap.optim import Adam, Sgd, adam_state, adam_step, clip_grad_norm, sgd_step


def _param(value, name="p"):
    t = ad.Tensor(np.asarray(value, dtype=float), requires_grad=True, name=name)
    return t


def test_zero_gradient_leaves_parameters_unchanged():
    p = _param([[1.0, -2.0]])
    p.grad = np.zeros_like(p.data)
    state = adam_state([p])
    adam_step([p], state, lr=0.1)
    assert np.array_equal(p.data, [[1.0, -2.0]])


def test_single_scalar_step_matches_hand_computed_adam():
    # g=1, lr=0.1: m_hat = 1, v_hat = 1, delta = 0.1 / (1 + 1e-8)
    p = _param([[0.0]])
    p.grad = np.array([[1.0]])
    state = adam_state([p])
    adam_step([p], state, lr=0.1)
    expected = -0.1 * 1.0 / (np.sqrt(1.0) + 1e-8)
    assert p.data[0, 0] == pytest.approx(expected, rel=1e-12)
    assert p.data[0, 0] == pytest.approx(-0.1, rel=1e-6)


def test_adam_deterministic_trajectories():
    def run():
        rng = np.random.default_rng(5)
        p = _param(rng.normal(size=(3, 3)))
        state = adam_state([p])
        for step in range(20):
            p.grad = np.sin(p.data + step)
            adam_step([p], state, lr=0.01)
        return p.data.tobytes()

    assert run() == run()


def test_missing_grad_is_contract_error():
    p = _param([[1.0]])
    with pytest.raises(ContractError, match="no grad"):
        adam_step([p], adam_state([p]))
    with pytest.raises(ContractError, match="no grad"):
        sgd_step([p], lr=0.1)


def test_sgd_step():
    p = _param([[2.0]])
    p.grad = np.array([[0.5]])
    sgd_step([p], lr=0.2)
    assert p.data[0, 0] == pytest.approx(1.9)


def test_clip_grad_norm():
    p = _param([[3.0, 4.0]])
    p.grad = np.array([[3.0, 4.0]])
    norm = clip_grad_norm([p], max_norm=1.0)
    assert norm == pytest.approx(5.0)
    assert np.allclose(p.grad, [[0.6, 0.8]])
    # under the cap: untouched
    p.grad = np.array([[0.3, 0.4]])
    clip_grad_norm([p], max_norm=1.0)
    assert np.allclose(p.grad, [[0.3, 0.4]])


def test_adam_class_wrapper():
    p = _param([[1.0]])
    opt = Adam([p], lr=0.1)
    p.grad = np.array([[1.0]])
    opt.step()
    opt.zero_grad()
    assert p.grad is None
    assert p.data[0, 0] < 1.0


def test_sgd_class_wrapper():
    p = _param([[1.0]])
    opt = Sgd([p], lr=0.5)
    p.grad = np.array([[1.0]])
    opt.step()
    assert p.data[0, 0] == pytest.approx(0.5)
