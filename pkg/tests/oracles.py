"""Independent reference computations used as test oracles.

Nothing here calls the package's transforms or closed forms: operators are
dense matrices, integrals are brute-force quadratures and searches are
plain loops.
"""

import numpy as np


def cosine_matrix(n):
    """Orthonormal DCT-II matrix ``C[k, i]`` built from its definition."""
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    C = np.sqrt(2.0 / n) * np.cos(np.pi * k * (i + 0.5) / n)
    C[0] /= np.sqrt(2.0)
    return C


def laplacian_matrix_1d(n, variant="exact"):
    C = cosine_matrix(n)
    k = np.arange(n, dtype=float)
    lam = (np.pi * k) ** 2 if variant == "exact" else (2 * n * np.sin(np.pi * k / (2 * n))) ** 2
    return -C.T @ np.diag(lam) @ C


def laplacian_dense(v, variant="exact"):
    """Neumann Laplacian of a 2-D array via Kronecker sums of dense 1-D matrices."""
    n = v.shape[0]
    L = laplacian_matrix_1d(n, variant)
    return L @ v + v @ L.T


def hat_1d(x, node, h):
    return np.maximum(0.0, 1.0 - np.abs(x - node) / h)


def hat_integrals_quadrature(m, d, fine=4000):
    """``(phi_l, 1)`` and ``||phi_l||^2`` per axis by fine midpoint quadrature."""
    h = 1.0 / (m - 1)
    x = (np.arange(fine) + 0.5) / fine
    vals = np.array([hat_1d(x, l * h, h) for l in range(m)])
    ints = vals.mean(axis=1)
    mass = vals @ vals.T / fine
    return ints, mass


def expected_corrected_norm_sq(m, d, tau, fine=4000):
    """``E||dW - mean||^2`` from quadrature integrals and the trace formula."""
    ints, mass = hat_integrals_quadrature(m, d, fine)
    c = ints
    n2 = np.diag(mass)
    C, N2 = c, n2
    for _ in range(d - 1):
        C = np.multiply.outer(C, c)
        N2 = np.multiply.outer(N2, n2)
    s2 = (d + 1) / C
    return tau * float(np.sum(N2 * s2) - np.sum(C**2 * s2))


def stopping_index_scan(l3_norms, eps, tau, sigma0):
    acc = 0.0
    for j, z in enumerate(l3_norms, start=1):
        acc += tau / eps * z**3
        if acc > eps**sigma0:
            return j
    return len(l3_norms)


def hausdorff_bruteforce(a, b):
    D = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(-1))
    return max(D.min(axis=1).max(), D.min(axis=0).max())


def energy_quadrature(u_func, du_func, eps, fine):
    """Energy of ``u(x1, x2) = u_func(x1)`` by midpoint quadrature on ``fine`` cells."""
    x = (np.arange(fine) + 0.5) / fine
    u = u_func(x)
    return 0.5 * eps * np.mean(du_func(x) ** 2) + np.mean(0.25 * (u**2 - 1) ** 2) / eps
