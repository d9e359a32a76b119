import numpy as np
import pytest

from fedteach import kernels
from fedteach.kernels import _numpy
from fedteach.numerics import init_mlp

pytestmark = pytest.mark.skipif("numba" not in kernels.available_backends(),
                                reason="numba not installed")


def _problem(seed=0):
    rng = np.random.default_rng(seed)
    p = init_mlp((6, 8, 5, 4), rng, ["relu", "linear", "linear"])
    X = rng.normal(size=(23, 6))
    y = rng.integers(0, 4, 23)
    Q = rng.normal(size=(23, 4))
    orders = np.stack([rng.permutation(23) for _ in range(3)])
    return p, X, y, Q, orders


def _run(name, fn, *args):
    with kernels.use_backend(name):
        return fn(*args)


@pytest.mark.parametrize("beta", [0.0, 0.7])
def test_backends_agree_on_sgd(beta):
    p, X, y, Q, orders = _problem()
    results = {}
    for name in ("numpy", "numba"):
        flat = p.flat.copy()
        losses = _run(name, kernels.sgd_train, flat, p._sizes_arr, p._relu_arr, X, y, Q,
                      beta, orders, 0.1, 5)
        results[name] = (flat, losses)
    np.testing.assert_allclose(results["numba"][0], results["numpy"][0], rtol=1e-12, atol=1e-13)
    np.testing.assert_allclose(results["numba"][1], results["numpy"][1], rtol=1e-12)


def test_backends_agree_on_forward_backward():
    p, X, _, _, _ = _problem(1)
    d = np.random.default_rng(2).normal(size=(23, 4))
    out = {n: (_run(n, kernels.forward, p.flat, p._sizes_arr, p._relu_arr, X),
               *_run(n, kernels.backward, p.flat, p._sizes_arr, p._relu_arr, X, d))
           for n in ("numpy", "numba")}
    for a, b in zip(out["numpy"], out["numba"]):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-13)


def test_beta_zero_ignores_teacher_logits(backend):
    p, X, y, Q, orders = _problem(3)
    a = p.flat.copy()
    b = p.flat.copy()
    kernels.sgd_train(a, p._sizes_arr, p._relu_arr, X, y, Q, 0.0, orders, 0.1, 4)
    kernels.sgd_train(b, p._sizes_arr, p._relu_arr, X, y, Q * 0 + 99.0, 0.0, orders, 0.1, 4)
    assert a.tobytes() == b.tobytes()


def test_env_flag_selects_numpy(monkeypatch):
    monkeypatch.setenv(kernels.ENV_FLAG, "0")
    assert kernels._default_backend() is _numpy
    monkeypatch.setenv(kernels.ENV_FLAG, "1")
    assert kernels._default_backend().NAME == "numba"


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.set_backend("cuda")
