"""Shared test oracles: finite differences and small brute-force references.

Everything here evaluates forward passes only, so gradient checks stay
independent of the backward implementation they verify.
"""

import numpy as np

from handmesh.autodiff import Tape, Tensor, backward


def fd_grad(f, x, h=1e-5):
    """Central-difference gradient of scalar f at array x."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return g


def rel_err(a, b, floor=1e-6):
    """Worst-case elementwise relative error with a floor for near-zero pairs."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


def analytic_grads(build_loss, arrays):
    """Run build_loss over Tensor-wrapped arrays on a fresh tape, return grads.

    ``build_loss`` receives the tensors and must return a scalar Tensor.
    """
    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    with Tape() as tape:
        loss = build_loss(*tensors)
    backward(loss, tape)
    return [t.grad if t.grad is not None else np.zeros_like(t.data) for t in tensors]


def check_op_gradients(build_loss, arrays, h=1e-5, tol=1e-4):
    """Compare analytic grads of build_loss against central differences."""
    grads = analytic_grads(build_loss, arrays)
    worst = 0.0
    for i, base in enumerate(arrays):

        def f(x, _i=i):
            vals = [np.array(a, dtype=np.float64) for a in arrays]
            vals[_i] = x
            tensors = [Tensor(v) for v in vals]
            return build_loss(*tensors).item()

        num = fd_grad(f, np.array(base, dtype=np.float64), h=h)
        worst = max(worst, rel_err(grads[i], num))
    assert worst <= tol, f"gradient mismatch: rel err {worst:.3e} > {tol}"
    return worst


def conv2d_loops(x, w, b=None, stride=1, padding=0):
    """Direct nested-loop 2-D cross-correlation reference."""
    o, c, k, _ = w.shape
    xp = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    oh = (x.shape[1] + 2 * padding - k) // stride + 1
    ow = (x.shape[2] + 2 * padding - k) // stride + 1
    out = np.zeros((o, oh, ow))
    for oc in range(o):
        for i in range(oh):
            for j in range(ow):
                acc = 0.0
                for cc in range(c):
                    for a in range(k):
                        for bb in range(k):
                            acc += xp[cc, i * stride + a, j * stride + bb] * w[oc, cc, a, bb]
                out[oc, i, j] = acc + (b[oc] if b is not None else 0.0)
    return out


def matmul_loops(a, b):
    m, k = a.shape
    k2, n = b.shape
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            for t in range(k):
                out[i, j] += a[i, t] * b[t, j]
    return out
