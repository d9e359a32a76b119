"""numba-compiled MLP kernels; same contracts as the numpy path.

The whole SGD loop runs compiled, so a mini-batch costs no Python dispatch.
Matrix products go through ``np.dot`` (BLAS); activations for a batch live
in one flat buffer with a contiguous (B, width) view per layer.
"""
import numpy as np
from numba import njit

NAME = "numba"


@njit(cache=True)
def _col_offsets(sizes):
    off = np.zeros(sizes.shape[0] + 1, dtype=np.int64)
    for i in range(sizes.shape[0]):
        off[i + 1] = off[i] + sizes[i]
    return off


@njit(cache=True)
def _param_offsets(sizes):
    # start of W for each layer, then of b
    L = sizes.shape[0] - 1
    wo = np.empty(L, dtype=np.int64)
    bo = np.empty(L, dtype=np.int64)
    off = 0
    for l in range(L):
        wo[l] = off
        bo[l] = off + sizes[l + 1] * sizes[l]
        off = bo[l] + sizes[l + 1]
    return wo, bo


@njit(cache=True)
def _act(buf, coloff, sizes, B, l):
    return buf[B * coloff[l]:B * coloff[l + 1]].reshape((B, sizes[l]))


@njit(cache=True)
def _forward_into(flat, sizes, relu, Xb, buf, coloff, wo, bo):
    B = Xb.shape[0]
    _act(buf, coloff, sizes, B, 0)[:, :] = Xb
    for l in range(sizes.shape[0] - 1):
        nin = sizes[l]
        nout = sizes[l + 1]
        W = flat[wo[l]:bo[l]].reshape((nout, nin))
        z = np.dot(_act(buf, coloff, sizes, B, l), W.T)
        out = _act(buf, coloff, sizes, B, l + 1)
        for n in range(B):
            for o in range(nout):
                v = z[n, o] + flat[bo[l] + o]
                if relu[l] and v < 0.0:
                    v = 0.0
                out[n, o] = v


@njit(cache=True)
def _backward_from(flat, sizes, relu, buf, coloff, wo, bo, dout, grad):
    """Fill ``grad`` from the activations in ``buf``; returns dL/dX."""
    L = sizes.shape[0] - 1
    B = dout.shape[0]
    delta = dout.copy()
    for l in range(L - 1, -1, -1):
        nin = sizes[l]
        nout = sizes[l + 1]
        if relu[l]:
            out = _act(buf, coloff, sizes, B, l + 1)
            for n in range(B):
                for o in range(nout):
                    if out[n, o] <= 0.0:
                        delta[n, o] = 0.0
        g = grad[wo[l]:bo[l]].reshape((nout, nin))
        g[:, :] = np.dot(delta.T, _act(buf, coloff, sizes, B, l))
        for o in range(nout):
            s = 0.0
            for n in range(B):
                s += delta[n, o]
            grad[bo[l] + o] = s
        W = flat[wo[l]:bo[l]].reshape((nout, nin))
        delta = np.dot(delta, W)
    return delta


@njit(cache=True)
def _forward(flat, sizes, relu, X):
    B = X.shape[0]
    coloff = _col_offsets(sizes)
    wo, bo = _param_offsets(sizes)
    buf = np.empty(B * coloff[-1])
    _forward_into(flat, sizes, relu, X, buf, coloff, wo, bo)
    return _act(buf, coloff, sizes, B, sizes.shape[0] - 1).copy()


@njit(cache=True)
def _backward(flat, sizes, relu, X, dout):
    B = X.shape[0]
    coloff = _col_offsets(sizes)
    wo, bo = _param_offsets(sizes)
    buf = np.empty(B * coloff[-1])
    _forward_into(flat, sizes, relu, X, buf, coloff, wo, bo)
    grad = np.empty(flat.shape[0])
    dX = _backward_from(flat, sizes, relu, buf, coloff, wo, bo, dout, grad)
    return grad, dX


@njit(cache=True)
def _log_softmax_row(z, out):
    m = z[0]
    for k in range(1, z.shape[0]):
        if z[k] > m:
            m = z[k]
    s = 0.0
    for k in range(z.shape[0]):
        s += np.exp(z[k] - m)
    ls = np.log(s)
    for k in range(z.shape[0]):
        out[k] = z[k] - m - ls


@njit(cache=True)
def _sgd_train(flat, sizes, relu, X, y, Q, beta, orders, lr, batch_size):
    n_epochs = orders.shape[0]
    n = orders.shape[1]
    n_batches = (n + batch_size - 1) // batch_size
    losses = np.empty((n_epochs, n_batches))
    coloff = _col_offsets(sizes)
    wo, bo = _param_offsets(sizes)
    L = sizes.shape[0] - 1
    K = sizes[L]
    buf = np.empty(batch_size * coloff[-1])
    grad = np.empty(flat.shape[0])
    logp = np.empty(K)
    logq = np.empty(K)
    for e in range(n_epochs):
        for bi in range(n_batches):
            start = bi * batch_size
            stop = min(start + batch_size, n)
            B = stop - start
            idx = orders[e, start:stop]
            Xb = np.empty((B, X.shape[1]))
            for r in range(B):
                Xb[r, :] = X[idx[r]]
            _forward_into(flat, sizes, relu, Xb, buf, coloff, wo, bo)
            logits = _act(buf, coloff, sizes, B, L)
            delta = np.empty((B, K))
            total = 0.0
            for r in range(B):
                row = idx[r]
                _log_softmax_row(logits[r], logp)
                label = y[row]
                ex = -logp[label]
                for k in range(K):
                    delta[r, k] = np.exp(logp[k])
                delta[r, label] -= 1.0
                if beta != 0.0:
                    _log_softmax_row(Q[row], logq)
                    kl = 0.0
                    for k in range(K):
                        qk = np.exp(logq[k])
                        kl += qk * (logq[k] - logp[k])
                        delta[r, k] += beta * (np.exp(logp[k]) - qk)
                    ex = ex + beta * kl
                total += ex
                for k in range(K):
                    delta[r, k] /= B
            losses[e, bi] = total / B
            _backward_from(flat, sizes, relu, buf, coloff, wo, bo, delta, grad)
            for j in range(flat.shape[0]):
                flat[j] -= lr * grad[j]
    return losses


def forward(flat, sizes, relu, X):
    return _forward(flat, sizes, relu, np.ascontiguousarray(X, dtype=np.float64))


def backward(flat, sizes, relu, X, dout):
    return _backward(
        flat, sizes, relu,
        np.ascontiguousarray(X, dtype=np.float64),
        np.ascontiguousarray(dout, dtype=np.float64),
    )


def sgd_train(flat, sizes, relu, X, y, Q, beta, orders, lr, batch_size):
    return _sgd_train(
        flat, sizes, relu,
        np.ascontiguousarray(X, dtype=np.float64),
        np.ascontiguousarray(y, dtype=np.int64),
        np.ascontiguousarray(Q, dtype=np.float64),
        float(beta),
        np.ascontiguousarray(orders, dtype=np.int64),
        float(lr),
        int(batch_size),
    )
