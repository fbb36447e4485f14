"""Independent reference implementations used only by the tests.

Everything here is written from the textbook definitions with dense
Kronecker products and matrix exponentials, so it shares no code path with
the package's bit-indexed kernels.
"""
import itertools
import math
from functools import reduce

import numpy as np
from scipy.linalg import expm

I2 = np.eye(2)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.diag([1.0, -1.0]).astype(complex)


def op_on(n, ops):
    """Dense operator with ``ops[i]`` on qubit i; qubit 0 is the least significant bit."""
    mats = [ops.get(i, I2) for i in reversed(range(n))]
    return reduce(np.kron, mats)


def maxcut_matrix(n, edges):
    H = np.zeros((1 << n, 1 << n), dtype=complex)
    for u, v, w in edges:
        H += 0.5 * w * (np.eye(1 << n) - op_on(n, {u: Z, v: Z}))
    return H


def po_matrix(n, mu, sigma, q):
    """Spin form: x_i -> (I - Z_i)/2 substituted into q x^T S x - mu^T x."""
    xs = [0.5 * (np.eye(1 << n) - op_on(n, {i: Z})) for i in range(n)]
    H = np.zeros((1 << n, 1 << n), dtype=complex)
    for i in range(n):
        H -= mu[i] * xs[i]
        for j in range(n):
            H += q * sigma[i][j] * (xs[i] @ xs[j])
    return H


def x_mixer_unitary(n, beta):
    gen = sum(op_on(n, {i: X}) for i in range(n))
    return expm(-1j * beta * gen)


def xy_pair_unitary(n, i, j, angle):
    gen = op_on(n, {i: X, j: X}) + op_on(n, {i: Y, j: Y})
    return expm(-1j * angle * gen)


def ring(n):
    return [(0, 1)] if n == 2 else [(i, (i + 1) % n) for i in range(n)]


def dense_qaoa_state(n, H, gammas, betas, mixer="x", K=None, reps=1):
    if mixer == "x":
        psi = np.ones(1 << n, dtype=complex) / math.sqrt(1 << n)
    else:
        psi = np.zeros(1 << n, dtype=complex)
        for x in range(1 << n):
            if bin(x).count("1") == K:
                psi[x] = 1.0
        psi /= np.linalg.norm(psi)
    for g, b in zip(gammas, betas):
        psi = expm(-1j * g * H) @ psi
        if mixer == "x":
            psi = x_mixer_unitary(n, b) @ psi
        else:
            for _ in range(reps):
                for i, j in ring(n):
                    psi = xy_pair_unitary(n, i, j, b / reps) @ psi
    return psi


def dense_expectation(psi, H):
    return float(np.real(np.vdot(psi, H @ psi)))


def brute_force_cut(n, edges, x):
    """Cut value by explicit spin assignment."""
    s = [1 if (x >> i) & 1 == 0 else -1 for i in range(n)]
    return sum(w / 2 * (1 - s[u] * s[v]) for u, v, w in edges)


def brute_force_po(n, mu, sigma, q, x):
    bits = [(x >> i) & 1 for i in range(n)]
    risk = sum(sigma[i][j] * bits[i] * bits[j] for i in range(n) for j in range(n))
    ret = sum(mu[i] * bits[i] for i in range(n))
    return q * risk - ret


def brute_force_extremes(values):
    lo = min(range(len(values)), key=lambda k: (values[k], k))
    hi = min(range(len(values)), key=lambda k: (-values[k], k))
    return values[lo], values[hi], lo, hi


def enumerate_strings(n):
    return list(itertools.product((0, 1), repeat=n))
