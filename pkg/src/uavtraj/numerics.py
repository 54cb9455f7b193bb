"""Small dense linear algebra and seeded randomness.

Matrices are plain ``float64`` numpy arrays. Only what the 3x3 statistics
and the GRU layers need lives here.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .errors import InvalidRange, NotPositiveDefinite, SingularFactor

SYMMETRY_TOL = 1e-9
SINGULAR_DIAG = 1e-15


def as_matrix(a) -> np.ndarray:
    m = np.array(a, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {m.shape}")
    return m


def cholesky(sigma) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T == sigma`` (left-looking, no pivoting).

    Raises ``NotPositiveDefinite`` when a pivot is not strictly positive.
    """
    a = as_matrix(sigma)
    n, m = a.shape
    if n != m:
        raise ValueError(f"cholesky needs a square matrix, got {a.shape}")
    scale = max(np.max(np.abs(a)), 1.0)
    if np.max(np.abs(a - a.T)) > SYMMETRY_TOL * scale:
        raise ValueError("cholesky input is not symmetric")
    L = np.zeros_like(a)
    for j in range(n):
        pivot = a[j, j] - np.dot(L[j, :j], L[j, :j])
        if not pivot > 0.0:
            raise NotPositiveDefinite(f"pivot {j} is {pivot!r}; covariance is degenerate")
        L[j, j] = np.sqrt(pivot)
        for i in range(j + 1, n):
            L[i, j] = (a[i, j] - np.dot(L[i, :j], L[j, :j])) / L[j, j]
    return L


def _check_diag(L: np.ndarray) -> None:
    if np.any(np.abs(np.diag(L)) < SINGULAR_DIAG):
        raise SingularFactor("triangular factor has a (near-)zero diagonal entry")


def solve_lower(L, b) -> np.ndarray:
    """Forward substitution for ``L x = b``.

    ``b`` may be a vector or a 2-D array whose columns are right-hand sides.
    """
    L = as_matrix(L)
    _check_diag(L)
    b = np.asarray(b, dtype=np.float64)
    x = np.array(b, dtype=np.float64, copy=True)
    for i in range(L.shape[0]):
        x[i] = (b[i] - L[i, :i] @ x[:i]) / L[i, i]
    return x


def solve_upper(U, b) -> np.ndarray:
    """Back substitution for ``U x = b`` (used to finish ``A^-1 b`` from a Cholesky factor)."""
    U = as_matrix(U)
    _check_diag(U)
    b = np.asarray(b, dtype=np.float64)
    x = np.array(b, dtype=np.float64, copy=True)
    n = U.shape[0]
    for i in range(n - 1, -1, -1):
        x[i] = (b[i] - U[i, i + 1:] @ x[i + 1:]) / U[i, i]
    return x


def cho_solve(L, b) -> np.ndarray:
    return solve_upper(as_matrix(L).T, solve_lower(L, b))


# Randomness: numpy's PCG64 bit generator. Streams are reproducible for a
# given seed across platforms and numpy versions that keep the PCG64 and
# Generator.random() contracts.

def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))


def child_seed(seed: int, *path: int | str) -> int:
    """Derive an independent 63-bit seed from ``seed`` and a label path.

    String labels are hashed to integers so call sites can read
    ``child_seed(seed, "init")`` instead of juggling magic numbers.
    """
    words = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    for part in path:
        if isinstance(part, str):
            digest = hashlib.blake2b(part.encode("utf-8"), digest_size=8).digest()
            words.append(int.from_bytes(digest, "little"))
        else:
            words.append(int(part) & 0xFFFFFFFFFFFFFFFF)
    ss = np.random.SeedSequence(words)
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def rng_uniform(rng: np.random.Generator, lo: float, hi: float) -> float:
    if not lo < hi:
        raise InvalidRange(f"need lo < hi, got [{lo}, {hi})")
    value = lo + (hi - lo) * rng.random()
    # lo + (hi-lo)*u can round up to hi for u close to 1
    return value if value < hi else float(np.nextafter(hi, lo))
