"""Pure-numpy MLP kernels.

Parameters live in one flat float64 buffer. Layer ``l`` stores its weight
matrix (``sizes[l+1]`` rows by ``sizes[l]`` columns, row-major) followed by
its bias. ``relu[l]`` says whether layer ``l`` output passes through ReLU.
"""
import numpy as np

NAME = "numpy"


def layer_views(flat, sizes):
    views = []
    off = 0
    for l in range(len(sizes) - 1):
        n_in, n_out = int(sizes[l]), int(sizes[l + 1])
        W = flat[off:off + n_out * n_in].reshape(n_out, n_in)
        off += n_out * n_in
        b = flat[off:off + n_out]
        off += n_out
        views.append((W, b))
    return views


def _forward_acts(flat, sizes, relu, X):
    acts = [X]
    a = X
    for (W, b), r in zip(layer_views(flat, sizes), relu):
        z = a @ W.T + b
        a = np.maximum(z, 0.0) if r else z
        acts.append(a)
    return acts


def forward(flat, sizes, relu, X):
    return _forward_acts(flat, sizes, relu, X)[-1]


def backward(flat, sizes, relu, X, dout):
    """Gradient of ``sum(dout * forward(X))`` w.r.t. the flat params and X."""
    acts = _forward_acts(flat, sizes, relu, X)
    views = layer_views(flat, sizes)
    grad = np.empty_like(flat)
    gviews = layer_views(grad, sizes)
    delta = dout
    for l in range(len(views) - 1, -1, -1):
        if relu[l]:
            delta = delta * (acts[l + 1] > 0.0)
        gW, gb = gviews[l]
        gW[...] = delta.T @ acts[l]
        gb[...] = delta.sum(axis=0)
        delta = delta @ views[l][0]
    return grad, delta


def log_softmax(z):
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def loss_grad(logits, y, Q, beta):
    """Mean of CE(y, p) + beta * KL(softmax(Q) || softmax(p)) and its logit gradient."""
    B = logits.shape[0]
    rows = np.arange(B)
    logp = log_softmax(logits)
    s = np.exp(logp)
    g = s.copy()
    g[rows, y] -= 1.0
    per_example = -logp[rows, y]
    if beta != 0.0:
        logq = log_softmax(Q)
        q = np.exp(logq)
        per_example = per_example + beta * (q * (logq - logp)).sum(axis=1)
        g += beta * (s - q)
    return per_example.sum() / B, g / B


def sgd_train(flat, sizes, relu, X, y, Q, beta, orders, lr, batch_size):
    """Mini-batch SGD in place on ``flat``; returns the (epochs, batches) loss table.

    ``orders`` holds one permutation of example indices per epoch.
    """
    n_epochs, n = orders.shape
    n_batches = (n + batch_size - 1) // batch_size
    losses = np.empty((n_epochs, n_batches))
    # a diverging run shows up as a non-finite loss; the caller reports it
    with np.errstate(over="ignore", invalid="ignore"):
        for e in range(n_epochs):
            for bi in range(n_batches):
                idx = orders[e, bi * batch_size:(bi + 1) * batch_size]
                xb = X[idx]
                logits = forward(flat, sizes, relu, xb)
                loss, dlogits = loss_grad(logits, y[idx], Q[idx], beta)
                losses[e, bi] = loss
                grad, _ = backward(flat, sizes, relu, xb, dlogits)
                flat -= lr * grad
    return losses
