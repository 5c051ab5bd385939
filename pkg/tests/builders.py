"""Instance builders shared by the test modules."""
import numpy as np

from soprbt.prbt import ReducedStructured
from soprbt.so_model import SecondOrderSystem


def spd(rng, n, shift=None):
    X = rng.standard_normal((n, n))
    return X @ X.T + (n if shift is None else shift) * np.eye(n)


def random_system(rng, n, m=1, damping="pd"):
    """Random validated system; ``damping='pd'`` keeps D positive definite."""
    M = spd(rng, n)
    K = spd(rng, n)
    if damping == "pd":
        D = spd(rng, n, shift=0.5)
    else:
        X = rng.standard_normal((n, max(1, n // 2)))
        D = X @ X.T
    B = rng.standard_normal((n, m))
    return SecondOrderSystem(M, D, K, B)


def overdamped_from_poles(rng, n, m=1):
    """Overdamped system with prescribed real pole pairs ``(a_i, b_i)``.

    In congruence coordinates ``D = diag(-(a+b))`` and ``K = diag(a b)``, so
    the scalar discriminants are ``(a-b)^2 > 0``.
    """
    a = -rng.uniform(0.1, 1, n)
    b = -rng.uniform(5, 20, n)
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    Mh = spd(rng, n)
    H = np.linalg.cholesky(Mh)
    D = H @ Q @ np.diag(-(a + b)) @ Q.T @ H.T
    K = H @ Q @ np.diag(a * b) @ Q.T @ H.T
    return SecondOrderSystem(Mh, D, K, rng.standard_normal((n, m)))


def absorber_system():
    """Damped mass with an undamped absorber: one imaginary zero pair."""
    k1, k2, d = 2.0, 3.0, 0.5
    K = np.array([[k1 + k2, -k2], [-k2, k2]])
    return SecondOrderSystem(np.eye(2), np.diag([d, 0.0]), K, np.array([[1.0], [0.0]]))


def balanced_instance(mu_plus, mu_minus, m=1, seed=0):
    """Reduced structured system in balanced block form with prescribed real zeros.

    Coordinates ``[N1 | neg-mid | pos-mid | P1]``; the zero-dynamics block is
    ``diag(mu_plus, mu_minus)`` so the typed zeros are known by construction.
    """
    rng = np.random.default_rng(seed)
    mu_plus = np.asarray(mu_plus, dtype=float)
    mu_minus = np.asarray(mu_minus, dtype=float)
    k = len(mu_plus)
    r = m + k
    N = 2 * r
    A = np.zeros((N, N))
    neg = np.arange(m, m + k)
    pos = np.arange(r, r + k)
    last = np.arange(N - m, N)
    A[np.ix_(range(m), last)] = np.eye(m) + 0.1 * rng.standard_normal((m, m))
    A[neg, neg] = mu_plus
    A[pos, pos] = mu_minus
    a36 = rng.standard_normal((k, m))
    a46 = 0.1 * rng.standard_normal((k, m))
    A[np.ix_(neg, last)] = a36
    A[np.ix_(pos, last)] = a46
    A[np.ix_(last, range(m))] = -A[np.ix_(range(m), last)].T
    A[np.ix_(last, neg)] = -a36.T
    A[np.ix_(last, pos)] = a46.T
    A[np.ix_(last, last)] = -10 * np.eye(m)
    B = np.zeros((N, m))
    B[last] = np.eye(m)
    sig = np.concatenate([np.ones(m), 0.5 * np.ones(k), 0.5 * np.ones(k), np.ones(m)])
    return ReducedStructured(A, B, sig, W=None, V=None)


def rel_err(G1, G2):
    """Largest pointwise relative spectral-norm error between two response stacks."""
    num = np.linalg.norm(G1 - G2, 2, axis=(1, 2))
    den = np.maximum(np.linalg.norm(G1, 2, axis=(1, 2)), 1e-300)
    return float(np.max(num / den))
