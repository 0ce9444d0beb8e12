"""Shared test helpers: finite differences and scalar-loop oracles."""

import numpy as np

from statten.autograd import Tensor


def central_diff(f, x, h=1e-5):
    """Central finite-difference gradient of scalar f at array x."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        xp = x.copy()
        xm = x.copy()
        xp[idx] += h
        xm[idx] -= h
        g[idx] = (f(xp) - f(xm)) / (2 * h)
    return g


def check_grad(op, *arrays, h=1e-5, tol=1e-4):
    """Compare analytic gradients of sum(op(*inputs)) against central
    differences for every input; returns the max relative error."""
    worst = 0.0
    for i in range(len(arrays)):

        def scalar(xi):
            args = [Tensor(a.copy()) for a in arrays]
            args[i] = Tensor(xi)
            return float(op(*args).sum().data)

        tensors = [Tensor(a.copy(), requires_grad=True) for a in arrays]
        out = op(*tensors).sum()
        out.backward()
        num = central_diff(scalar, arrays[i], h=h)
        ana = tensors[i].grad
        denom = max(np.abs(num).max(), np.abs(ana).max(), 1e-8)
        err = np.abs(ana - num).max() / denom
        worst = max(worst, err)
        assert err < tol, f"input {i}: max rel err {err:.2e} >= {tol}"
    return worst


def matmul_oracle(a, b):
    """Scalar triple-loop matrix product."""
    a, b = np.asarray(a), np.asarray(b)
    m, k = a.shape
    k2, n = b.shape
    assert k == k2
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            s = 0.0
            for t in range(k):
                s += a[i, t] * b[t, j]
            out[i, j] = s
    return out


def softmax_attention_oracle(q, k, v):
    """Scalar-loop softmax attention for [N, D] inputs."""
    q, k, v = (np.asarray(x, dtype=np.float64) for x in (q, k, v))
    n, d = q.shape
    out = np.zeros_like(v)
    for i in range(n):
        logits = np.array([np.dot(q[i], k[j]) / np.sqrt(d) for j in range(n)])
        e = np.exp(logits - logits.max())
        w = e / e.sum()
        for j in range(n):
            out[i] += w[j] * v[j]
    return out


def lif_trace_oracle(inputs, tau, v_th):
    """Step-by-step scalar LIF simulation over a 1-D input trace."""
    u = 0.0
    spikes = []
    for x in inputs:
        u = tau * u + x
        if u > v_th:
            spikes.append(1.0)
            u = 0.0
        else:
            spikes.append(0.0)
    return np.array(spikes)
