"""Decoupled doubling iteration for minimal MARE solutions.

With shifted coefficients A_beta = beta A + I, D_alpha = alpha D + I the
doubling iterates H_k admit the factored form

    H_k = gamma * Ucheck_k (I - Y_k Z_k)^{-1} Qcheck_k^T,   gamma = alpha + beta,

where the four block families obey one-term linear recursions

    U_j = A_neg (A_beta^{-1} U_{j-1}),   V_j = A_neg^T (A_beta^{-T} V_{j-1}),
    W_j = D_neg (D_alpha^{-1} W_{j-1}),  Q_j = D_neg^T (D_alpha^{-T} Q_{j-1}),

(A_neg = I - alpha A, D_neg = I - beta D, both entrywise nonnegative for
admissible shifts), Ucheck_k stacks U_0..U_{2^k - 1}, and the small
coupling matrices double by

    Y_{k+1} = [[0, Y_k], [Y_k, gamma * Qcheck_k^T Wcheck_k]],
    Z_{k+1} = [[0, Z_k], [Z_k, gamma * Vcheck_k^T Ucheck_k]].

Everything on the right-hand side above is entrywise nonnegative, so the
whole iteration is free of subtractive cancellation; the m x n iterate is
only materialized when a stopping criterion or the caller asks for it.

The kernels I - Y_k Z_k are themselves nonsingular M-matrices.  Their GTH
triplet is assembled additively: with u-side B_r^T u1 tiled 2^k times,

    v1k block i = alpha * Q_0^T v1 + Q_i^T u1
                  + gamma * (sum_{j<i} Q_j)^T (D_alpha^{-1} v1),

(v2k symmetrically with beta, V-blocks, and A_beta^{-T}... A_beta^{-1} v2),
and the kernel image is v1k + Y_k v2k.  The partial sums are accumulated
in ascending block order and never by differencing, so the image stays
exactly nonnegative even in the critical case.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .gth import TripletRepresentation, build_solver, gth_factorize
from .linalg import frobenius_norm, matmul, max_entrywise_ratio
from .problem import (
    MareProblem,
    ShiftPair,
    default_shifts,
    shifted_parts,
)

__all__ = [
    "DaddaState",
    "IterationRecord",
    "SolveReport",
    "StopCriteria",
    "advance",
    "dual_kernel_triplet",
    "erres",
    "ererr",
    "initialize",
    "kernel_triplet",
    "normalized_residual",
    "rank_of_iterate",
    "relative_change",
    "solve",
]

CRITERIA = ("nres", "rchange", "erres", "ererr")


@dataclass(frozen=True)
class StopCriteria:
    """Stopping rule: criterion kind, tolerance, and iteration caps."""

    criterion: str = "erres"
    tolerance: float = 1e-14
    max_iterations: int = 30
    kernel_row_cap: int = 4096

    def __post_init__(self):
        if self.criterion not in CRITERIA:
            raise ValueError(f"criterion must be one of {CRITERIA}")
        if not (0.0 < self.tolerance < 1.0):
            raise ValueError("tolerance must lie in (0, 1)")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")
        if self.kernel_row_cap < 1:
            raise ValueError("kernel_row_cap must be positive")


@dataclass
class IterationRecord:
    k: int
    value: float
    kernel_order: int
    seconds: float


@dataclass
class SolveReport:
    termination: str
    iterations: int
    criterion: str
    tolerance: float
    alpha: float
    beta: float
    records: list[IterationRecord]
    H: np.ndarray
    erres_final: float
    frob_h: float
    rank_h: int
    seconds: float
    G: np.ndarray | None = None


@dataclass(eq=False)
class DaddaState:
    """Mutable iteration state; index k counts doubling steps taken."""

    prob: MareProblem
    shifts: ShiftPair
    solver_a: object
    solver_d: object
    a_neg: object
    d_neg: object
    k: int
    u_blocks: list[np.ndarray]
    v_blocks: list[np.ndarray]
    w_blocks: list[np.ndarray]
    q_blocks: list[np.ndarray]
    Y: np.ndarray
    Z: np.ndarray
    v1k: np.ndarray
    v2k: np.ndarray
    q0v1: np.ndarray
    v0v2: np.ndarray
    dinv_v1: np.ndarray
    ainv_v2: np.ndarray
    prefix_q: np.ndarray
    prefix_v: np.ndarray
    bru1: np.ndarray
    cru2: np.ndarray
    kernel: object = None
    X: np.ndarray | None = None
    _H: np.ndarray | None = field(default=None, repr=False)

    @property
    def kernel_order(self) -> int:
        return (2**self.k) * self.prob.p

    @property
    def Ucheck(self) -> np.ndarray:
        return np.concatenate(self.u_blocks, axis=1)

    @property
    def Vcheck(self) -> np.ndarray:
        return np.concatenate(self.v_blocks, axis=1)

    @property
    def Wcheck(self) -> np.ndarray:
        return np.concatenate(self.w_blocks, axis=1)

    @property
    def Qcheck(self) -> np.ndarray:
        return np.concatenate(self.q_blocks, axis=1)

    @property
    def H(self) -> np.ndarray:
        """Dense current iterate, materialized lazily."""
        if self._H is None:
            self._H = self.shifts.gamma * _gram(self.Ucheck, self.X)
            assert np.all(self._H >= 0.0)
        return self._H


_GRAM_DOT_MIN = 192


def _gram(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Product of two nonnegative kernel-order matrices.

    All three dimensions double with k, so this is the solve's only cubic
    cost.  Once they are large the platform product takes over: with every
    operand entry nonnegative, any summation order adds nonnegative terms,
    so the result stays exactly nonnegative and cancellation-free; it can
    differ from the fixed-order product by rounding only.
    """
    assert np.all(a >= 0.0) and np.all(b >= 0.0)
    if min(a.shape[0], b.shape[1]) >= _GRAM_DOT_MIN:
        return np.dot(a, b)
    return matmul(a, b)


def _refresh_kernel(state: DaddaState) -> None:
    reps = 2**state.k
    yz = _gram(state.Y, state.Z)
    N = yz.copy()
    np.fill_diagonal(N, 0.0)
    u = np.tile(state.bru1, reps)
    v = state.v1k + matmul(state.Y, state.v2k[:, None])[:, 0]
    trip = TripletRepresentation.from_parts(N, u, v)
    state.kernel = gth_factorize(trip)
    state.X = state.kernel.solve(state.Qcheck.T)
    assert np.all(state.X >= 0.0)
    state._H = None


def kernel_triplet(state: DaddaState) -> TripletRepresentation:
    """Triplet of I - Y_k Z_k (assembled additively, never by subtraction)."""
    yz = _gram(state.Y, state.Z)
    N = yz.copy()
    np.fill_diagonal(N, 0.0)
    u = np.tile(state.bru1, 2**state.k)
    v = state.v1k + matmul(state.Y, state.v2k[:, None])[:, 0]
    return TripletRepresentation.from_parts(N, u, v)


def dual_kernel_triplet(state: DaddaState) -> TripletRepresentation:
    """Triplet of I - Z_k Y_k, for the dual iterate G_k."""
    if np.any(state.cru2 <= 0.0):
        raise ValueError("dual kernel requires Cr^T u2 > 0 strictly")
    zy = _gram(state.Z, state.Y)
    N = zy.copy()
    np.fill_diagonal(N, 0.0)
    u = np.tile(state.cru2, 2**state.k)
    v = state.v2k + matmul(state.Z, state.v1k[:, None])[:, 0]
    return TripletRepresentation.from_parts(N, u, v)


def initialize(prob: MareProblem, shifts: ShiftPair | None = None) -> DaddaState:
    """Build the k = 0 state (one block per family, kernel factorized)."""
    if shifts is None:
        shifts = default_shifts(prob)
    parts = shifted_parts(prob, shifts)
    solver_a = build_solver(parts.A_beta, prob.u2, parts.image_a_beta)
    solver_d = build_solver(parts.D_alpha, prob.u1, parts.image_d_alpha)
    alpha, beta = shifts.alpha, shifts.beta

    u0 = solver_a.solve(prob.Bl)
    v0 = solver_a.solve(prob.Cr, transpose=True)
    w0 = solver_d.solve(prob.Cl)
    q0 = solver_d.solve(prob.Br, transpose=True)
    for blk in (u0, v0, w0, q0):
        assert np.all(blk >= 0.0)

    bru1 = matmul(prob.Br.T, prob.u1[:, None])[:, 0]
    cru2 = matmul(prob.Cr.T, prob.u2[:, None])[:, 0]
    if np.any(bru1 <= 0.0):
        raise ValueError("Br^T u1 must be strictly positive (kernel u-side)")

    dinv_v1 = solver_d.solve(prob.v1)
    ainv_v2 = solver_a.solve(prob.v2)
    q0v1 = matmul(q0.T, prob.v1[:, None])[:, 0]
    v0v2 = matmul(v0.T, prob.v2[:, None])[:, 0]

    v1k = alpha * q0v1 + matmul(q0.T, prob.u1[:, None])[:, 0]
    v2k = beta * v0v2 + matmul(v0.T, prob.u2[:, None])[:, 0]

    state = DaddaState(
        prob=prob,
        shifts=shifts,
        solver_a=solver_a,
        solver_d=solver_d,
        a_neg=parts.A_neg_alpha,
        d_neg=parts.D_neg_beta,
        k=0,
        u_blocks=[u0],
        v_blocks=[v0],
        w_blocks=[w0],
        q_blocks=[q0],
        Y=alpha * matmul(q0.T, prob.Cl),
        Z=beta * matmul(prob.Cr.T, u0),
        v1k=v1k,
        v2k=v2k,
        q0v1=q0v1,
        v0v2=v0v2,
        dinv_v1=dinv_v1,
        ainv_v2=ainv_v2,
        prefix_q=matmul(q0.T, dinv_v1[:, None])[:, 0],
        prefix_v=matmul(v0.T, ainv_v2[:, None])[:, 0],
        bru1=bru1,
        cru2=cru2,
    )
    _refresh_kernel(state)
    return state


def advance(state: DaddaState) -> DaddaState:
    """One doubling step: k -> k + 1."""
    gamma = state.shifts.gamma
    alpha, beta = state.shifts.alpha, state.shifts.beta
    prob = state.prob

    t_k = _gram(state.Qcheck.T, state.Wcheck)
    s_k = _gram(state.Vcheck.T, state.Ucheck)
    rows_y, cols_y = state.Y.shape
    y_next = np.zeros((2 * rows_y, 2 * cols_y))
    y_next[:rows_y, cols_y:] = state.Y
    y_next[rows_y:, :cols_y] = state.Y
    y_next[rows_y:, cols_y:] = gamma * t_k
    z_next = np.zeros((2 * cols_y, 2 * rows_y))
    z_next[:cols_y, rows_y:] = state.Z
    z_next[cols_y:, :rows_y] = state.Z
    z_next[cols_y:, rows_y:] = gamma * s_k
    state.Y = y_next
    state.Z = z_next

    new_count = len(state.u_blocks)
    v1_new = np.empty(new_count * prob.p)
    v2_new = np.empty(new_count * prob.q)
    for i in range(new_count):
        u_new = state.a_neg.apply(state.solver_a.solve(state.u_blocks[-1]))
        v_new = state.a_neg.apply(
            state.solver_a.solve(state.v_blocks[-1], transpose=True), transpose=True
        )
        w_new = state.d_neg.apply(state.solver_d.solve(state.w_blocks[-1]))
        q_new = state.d_neg.apply(
            state.solver_d.solve(state.q_blocks[-1], transpose=True), transpose=True
        )
        for blk in (u_new, v_new, w_new, q_new):
            assert np.all(blk >= 0.0)
        state.u_blocks.append(u_new)
        state.v_blocks.append(v_new)
        state.w_blocks.append(w_new)
        state.q_blocks.append(q_new)
        v1_new[i * prob.p : (i + 1) * prob.p] = (
            alpha * state.q0v1
            + matmul(q_new.T, prob.u1[:, None])[:, 0]
            + gamma * state.prefix_q
        )
        v2_new[i * prob.q : (i + 1) * prob.q] = (
            beta * state.v0v2
            + matmul(v_new.T, prob.u2[:, None])[:, 0]
            + gamma * state.prefix_v
        )
        state.prefix_q = state.prefix_q + matmul(q_new.T, state.dinv_v1[:, None])[:, 0]
        state.prefix_v = state.prefix_v + matmul(v_new.T, state.ainv_v2[:, None])[:, 0]
    state.v1k = np.concatenate([state.v1k, v1_new])
    state.v2k = np.concatenate([state.v2k, v2_new])
    assert np.all(state.v1k >= 0.0) and np.all(state.v2k >= 0.0)

    state.k += 1
    _refresh_kernel(state)
    return state


# -- residuals and stopping criteria ----------------------------------------


def erres(prob: MareProblem, H: np.ndarray) -> float:
    """Entrywise relative residual.

    Numerator and denominator are grouped so each is a sum of nonnegative
    terms: |(HCH + N_A H + H N_D + B) - (diag(A) H + H diag(D))| over
    diag(A) H + H diag(D), maximized entrywise with 0/0 -> 0 and
    x/0 -> +inf.
    """
    hcl = matmul(H, prob.Cl)
    crth = matmul(prob.Cr.T, H)
    group1 = matmul(hcl, crth)
    group1 += prob.A.offdiag_abs_apply(H, side="left")
    group1 += prob.D.offdiag_abs_apply(H, side="right")
    group1 += matmul(prob.Bl, prob.Br.T)
    group2 = prob.A.diagonal()[:, None] * H + H * prob.D.diagonal()[None, :]
    return max_entrywise_ratio(np.abs(group1 - group2), group2)


def normalized_residual(prob: MareProblem, H: np.ndarray) -> float:
    """Frobenius residual of H C H - H D - A H + B over the term norms."""
    hch = matmul(matmul(H, prob.Cl), matmul(prob.Cr.T, H))
    hd = prob.D.apply(H.T, transpose=True).T
    ah = prob.A.apply(H)
    b = matmul(prob.Bl, prob.Br.T)
    denom = (
        frobenius_norm(hch)
        + frobenius_norm(hd)
        + frobenius_norm(ah)
        + frobenius_norm(b)
    )
    res = frobenius_norm(hch - hd - ah + b)
    if denom == 0.0:
        return 0.0 if res == 0.0 else float("inf")
    return res / denom


def relative_change(h_new: np.ndarray, h_prev: np.ndarray) -> float:
    """max |H_new - H_prev| / H_new entrywise (0/0 -> 0, x/0 -> +inf)."""
    return max_entrywise_ratio(np.abs(h_new - h_prev), np.abs(h_new))


def ererr(H: np.ndarray, x_true: np.ndarray) -> float:
    """max entrywise relative error against a known solution.

    Entries where x_true = 0 demand |H| <= 1e-300 (anything larger counts
    as +inf); elsewhere the ratio |H - x_true| / x_true applies.
    """
    if H.shape != x_true.shape:
        raise ValueError("shape mismatch against the reference solution")
    zero = x_true == 0.0
    num = np.abs(H - x_true)
    if np.any(zero):
        if np.any(np.abs(H[zero]) > 1e-300):
            return float("inf")
        num = np.where(zero, 0.0, num)
    return max_entrywise_ratio(num, x_true)


def rank_of_iterate(state: DaddaState) -> int:
    """Numerical rank of H_k from its skinny factors (threshold 1e-10)."""
    ru = scipy.linalg.qr(state.Ucheck, mode="economic")[1]
    core = state.shifts.gamma * matmul(ru, state.X)
    sv = np.linalg.svd(core, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    return int(np.sum(sv > 1e-10 * sv[0]))


def _criterion_value(
    prob: MareProblem,
    state: DaddaState,
    criteria: StopCriteria,
    h_prev: np.ndarray | None,
    x_true: np.ndarray | None,
) -> float:
    kind = criteria.criterion
    if kind == "erres":
        return erres(prob, state.H)
    if kind == "nres":
        return normalized_residual(prob, state.H)
    if kind == "rchange":
        if h_prev is None:
            return float("inf")
        return relative_change(state.H, h_prev)
    if x_true is None:
        raise ValueError("criterion 'ererr' needs the true solution")
    return ererr(state.H, x_true)


def solve(
    prob: MareProblem,
    shifts: ShiftPair | None = None,
    criteria: StopCriteria | None = None,
    x_true: np.ndarray | None = None,
    compute_dual: bool = False,
) -> SolveReport:
    """Run the doubling iteration under a stopping rule."""
    if criteria is None:
        criteria = StopCriteria()
    if shifts is None:
        shifts = default_shifts(prob)
    if criteria.kernel_row_cap < prob.p + prob.q:
        raise ValueError("kernel_row_cap must be at least p + q")
    t0 = time.perf_counter()
    state = initialize(prob, shifts)
    records: list[IterationRecord] = []
    h_prev: np.ndarray | None = None
    termination = "max_iterations"
    t_mark = t0
    while True:
        value = _criterion_value(prob, state, criteria, h_prev, x_true)
        now = time.perf_counter()
        records.append(
            IterationRecord(
                k=state.k,
                value=value,
                kernel_order=state.kernel_order,
                seconds=now - t_mark,
            )
        )
        t_mark = now
        if value <= criteria.tolerance:
            termination = "converged"
            break
        if state.k >= criteria.max_iterations:
            termination = "max_iterations"
            break
        next_rows = 2 ** (state.k + 1) * max(prob.p, prob.q)
        if next_rows > criteria.kernel_row_cap:
            termination = "kernel_cap_exceeded"
            break
        if criteria.criterion == "rchange":
            h_prev = state.H
        advance(state)

    h_final = state.H
    if criteria.criterion == "erres":
        erres_final = records[-1].value
    else:
        erres_final = erres(prob, h_final)
    dual = None
    if compute_dual:
        trip = dual_kernel_triplet(state)
        fact = gth_factorize(trip)
        xg = fact.solve(state.Vcheck.T)
        dual = state.shifts.gamma * matmul(state.Wcheck, xg)
    return SolveReport(
        termination=termination,
        iterations=state.k,
        criterion=criteria.criterion,
        tolerance=criteria.tolerance,
        alpha=shifts.alpha,
        beta=shifts.beta,
        records=records,
        H=h_final,
        erres_final=erres_final,
        frob_h=frobenius_norm(h_final),
        rank_h=rank_of_iterate(state),
        seconds=time.perf_counter() - t0,
        G=dual,
    )
