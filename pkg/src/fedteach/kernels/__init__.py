"""Backend dispatch for the hot MLP kernels.

The numba path is used when numba imports and ``FEDTEACH_NUMBA`` is not set
to a false value (``0``, ``false``, ``off``, ``no``); otherwise the pure-numpy
path runs. Both honour the same contracts; results agree to rounding, and
each path is deterministic on its own.
"""
import contextlib
import os

from . import _numpy

try:
    from . import _numba
except ImportError:  # pragma: no cover - numba is optional
    _numba = None

ENV_FLAG = "FEDTEACH_NUMBA"

_BACKENDS = {"numpy": _numpy}
if _numba is not None:
    _BACKENDS["numba"] = _numba


def _default_backend():
    flag = os.environ.get(ENV_FLAG, "1").strip().lower()
    if _numba is None or flag in ("0", "false", "off", "no"):
        return _numpy
    return _numba


_active = _default_backend()


def available_backends():
    return sorted(_BACKENDS)


def backend_name():
    return _active.NAME


def set_backend(name):
    global _active
    try:
        _active = _BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown or unavailable backend {name!r}") from None


@contextlib.contextmanager
def use_backend(name):
    previous = _active.NAME
    set_backend(name)
    try:
        yield
    finally:
        set_backend(previous)


def forward(flat, sizes, relu, X):
    return _active.forward(flat, sizes, relu, X)


def backward(flat, sizes, relu, X, dout):
    return _active.backward(flat, sizes, relu, X, dout)


def sgd_train(flat, sizes, relu, X, y, Q, beta, orders, lr, batch_size):
    return _active.sgd_train(flat, sizes, relu, X, y, Q, beta, orders, lr, batch_size)
