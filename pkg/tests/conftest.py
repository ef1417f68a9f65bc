"""Shared test helpers: generators and exact-arithmetic oracles."""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from dadda.linalg import StructuredSquare, matmul
from dadda.problem import MareProblem


def naive_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Literal ascending triple loop; the bitwise reference for matmul."""
    m, k = a.shape
    k2, n = b.shape
    assert k == k2
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for t in range(k):
                acc = acc + a[i, t] * b[t, j]
            out[i, j] = acc
    return out


def random_triplet(rng, order, v_scale=1.0, density=1.0):
    """Random valid M-matrix triplet (N, u, v) of the given order."""
    N = rng.uniform(size=(order, order))
    if density < 1.0:
        N *= rng.uniform(size=(order, order)) < density
    np.fill_diagonal(N, 0.0)
    u = rng.uniform(0.5, 1.5, size=order)
    v = v_scale * rng.uniform(0.1, 1.0, size=order)
    return N, u, v


def fraction_solve(N, u, v, b):
    """Solve M x = b exactly, M implied by the triplet, via Fractions.

    Every float converts to an exact rational, so this is an
    infinite-precision oracle for the GTH solver.
    """
    order = len(u)
    Nf = [[Fraction(N[i, j]) for j in range(order)] for i in range(order)]
    uf = [Fraction(x) for x in u]
    vf = [Fraction(x) for x in v]
    M = [[None] * order for _ in range(order)]
    for i in range(order):
        row_dot = sum(Nf[i][j] * uf[j] for j in range(order))
        for j in range(order):
            M[i][j] = -Nf[i][j]
        M[i][i] = (vf[i] + row_dot) / uf[i]
    rhs = [Fraction(x) for x in np.asarray(b, dtype=np.float64)]
    # exact Gaussian elimination, no pivoting needed (M-matrix)
    for k in range(order):
        piv = M[k][k]
        assert piv > 0
        for i in range(k + 1, order):
            f = M[i][k] / piv
            if f == 0:
                continue
            for j in range(k, order):
                M[i][j] -= f * M[k][j]
            rhs[i] -= f * rhs[k]
    x = [Fraction(0)] * order
    for k in range(order - 1, -1, -1):
        acc = rhs[k]
        for j in range(k + 1, order):
            acc -= M[k][j] * x[j]
        x[k] = acc / M[k][k]
    return np.array([float(t) for t in x])


def random_mare(
    seed,
    m=None,
    n=None,
    p=None,
    q=None,
    critical=False,
    kind="dense",
):
    """Random valid MARE with u1 = u2 = 1 (diagonally dominant A, D).

    Off-diagonals and factors are drawn nonnegative; the diagonals of A
    and D are then derived from the triplet identity, so W [1; 1] =
    [v1; v2] holds by construction.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    m = m if m is not None else int(rng.integers(2, 31))
    n = n if n is not None else int(rng.integers(2, 31))
    p = p if p is not None else min(int(rng.integers(1, 4)), m, n)
    q = q if q is not None else min(int(rng.integers(1, 4)), m, n)
    Bl = rng.uniform(size=(m, p))
    Br = rng.uniform(size=(n, p))
    Cl = rng.uniform(size=(n, q))
    Cr = rng.uniform(size=(m, q))
    u1 = np.ones(n)
    u2 = np.ones(m)
    v1 = np.zeros(n) if critical else rng.uniform(0.1, 1.0, size=n)
    v2 = np.zeros(m) if critical else rng.uniform(0.1, 1.0, size=m)
    bu1 = matmul(Bl, matmul(Br.T, u1[:, None]))[:, 0]
    cu2 = matmul(Cl, matmul(Cr.T, u2[:, None]))[:, 0]
    if kind == "lowrank":
        Pa = rng.uniform(size=(m, 2))
        Ra = rng.uniform(size=(m, 2))
        Pd = rng.uniform(size=(n, 2))
        Rd = rng.uniform(size=(n, 2))
        da = v2 + bu1 + matmul(Pa, matmul(Ra.T, u2[:, None]))[:, 0]
        dd = v1 + cu2 + matmul(Pd, matmul(Rd.T, u1[:, None]))[:, 0]
        A = StructuredSquare.diag_plus_lowrank(da, Pa, Ra, sign=-1)
        D = StructuredSquare.diag_plus_lowrank(dd, Pd, Rd, sign=-1)
    elif kind == "banded":
        Na = np.triu(np.tril(rng.uniform(size=(m, m)), 1), -2)
        Nd = np.triu(np.tril(rng.uniform(size=(n, n)), 2), -1)
        np.fill_diagonal(Na, 0.0)
        np.fill_diagonal(Nd, 0.0)
        A = _banded_from_dense(
            np.diag(v2 + bu1 + matmul(Na, u2[:, None])[:, 0]) - Na, 2, 1
        )
        D = _banded_from_dense(
            np.diag(v1 + cu2 + matmul(Nd, u1[:, None])[:, 0]) - Nd, 1, 2
        )
    else:
        Na = rng.uniform(size=(m, m))
        Nd = rng.uniform(size=(n, n))
        np.fill_diagonal(Na, 0.0)
        np.fill_diagonal(Nd, 0.0)
        A = StructuredSquare.dense(
            np.diag(v2 + bu1 + matmul(Na, u2[:, None])[:, 0]) - Na
        )
        D = StructuredSquare.dense(
            np.diag(v1 + cu2 + matmul(Nd, u1[:, None])[:, 0]) - Nd
        )
    return MareProblem(
        A=A, D=D, Bl=Bl, Br=Br, Cl=Cl, Cr=Cr, u1=u1, u2=u2, v1=v1, v2=v2
    )


def _banded_from_dense(a, lower, upper):
    order = a.shape[0]
    bands = {}
    for off in range(-lower, upper + 1):
        idx = np.arange(order - abs(off))
        if off >= 0:
            bands[off] = a[idx, idx + off]
        else:
            bands[off] = a[idx - off, idx]
    return StructuredSquare.banded(order, lower, upper, bands)
