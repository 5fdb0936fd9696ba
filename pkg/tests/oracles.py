"""Independent reference computations used as test oracles."""
import numpy as np

from vidrel.core import no_grad


def rel_error(a, b):
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    denom = max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def numeric_grad(loss_fn, arrays, eps=1e-5):
    """Central differences of scalar ``loss_fn()`` w.r.t. each array (mutated in place)."""
    grads = []
    with no_grad():
        for arr in arrays:
            g = np.zeros_like(arr, dtype=np.float64)
            flat = arr.reshape(-1)
            gflat = g.reshape(-1)
            for i in range(flat.size):
                old = flat[i]
                flat[i] = old + eps
                hi = float(loss_fn().data)
                flat[i] = old - eps
                lo = float(loss_fn().data)
                flat[i] = old
                gflat[i] = (hi - lo) / (2 * eps)
            grads.append(g)
    return grads


def check_tensors(loss_fn, tensors, eps=1e-5):
    """Relative error between tape gradients and finite differences.

    Measured over all tensors jointly, so parameters whose true gradient is
    zero (e.g. key biases under softmax) do not divide noise by noise.
    """
    for t in tensors:
        t.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = [t.grad.copy() for t in tensors]
    numeric = numeric_grad(loss_fn, [t.data for t in tensors], eps)
    return rel_error(np.concatenate([a.ravel() for a in analytic]),
                     np.concatenate([n.ravel() for n in numeric]))


def np_softmax(x, axis=-1):
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def reference_mha(q, k, v, p, n_heads):
    """Loop-over-heads attention, written without the tensor engine."""
    d = q.shape[-1]
    dh = d // n_heads
    Q = q @ p["wq"] + p["bq"]
    K = k @ p["wk"] + p["bk"]
    V = v @ p["wv"] + p["bv"]
    heads, weights = [], []
    for h in range(n_heads):
        sl = slice(h * dh, (h + 1) * dh)
        s = Q[:, sl] @ K[:, sl].T / np.sqrt(dh)
        w = np_softmax(s, -1)
        weights.append(w)
        heads.append(w @ V[:, sl])
    return np.concatenate(heads, -1) @ p["wo"] + p["bo"], np.stack(weights)
