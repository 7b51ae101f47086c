"""Discrete-time linear stochastic systems x+ = A x + B u + q + w.

Also provides step grouping (merging g consecutive steps into one so an
under-actuated system becomes fully actuated) and the target-point
feedback law u = B^+ (d - q - A x).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

RANK_TOL = 1e-10


def _as_matrix(a, name):
    a = np.array(a, dtype=float)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    if a.ndim != 2:
        raise ValueError(f"{name} must be a matrix, got shape {a.shape}")
    return a


def numerical_rank(M, rank_tol=RANK_TOL):
    """Rank of M counting singular values >= rank_tol * largest one."""
    s = np.linalg.svd(np.atleast_2d(M), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s >= rank_tol * s[0]))


def pinv_svd(M, rank_tol=RANK_TOL):
    """Moore-Penrose pseudoinverse via SVD with a relative cutoff."""
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    cutoff = rank_tol * (s[0] if s.size else 0.0)
    s_inv = np.where(s >= cutoff, 1.0 / np.where(s == 0, 1.0, s), 0.0)
    return (Vt.T * s_inv) @ U.T


@dataclass(frozen=True)
class LinearSystem:
    """x_{k+1} = A x_k + B u_k + q + w_k with u_k in [u_low, u_high]."""

    A: np.ndarray
    B: np.ndarray
    q: np.ndarray = None
    u_low: np.ndarray = None
    u_high: np.ndarray = None

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        B = _as_matrix(self.B, "B")
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError(f"A must be square, got {A.shape}")
        if B.shape[0] != n:
            raise ValueError(f"B must have {n} rows, got {B.shape[0]}")
        p = B.shape[1]
        q = np.zeros(n) if self.q is None else np.array(self.q, dtype=float).reshape(n)
        lo = np.full(p, -np.inf) if self.u_low is None else np.array(self.u_low, dtype=float).reshape(p)
        hi = np.full(p, np.inf) if self.u_high is None else np.array(self.u_high, dtype=float).reshape(p)
        if np.any(lo > hi):
            raise ValueError("input box lower bound exceeds upper bound")
        for name, val in (("A", A), ("B", B), ("q", q), ("u_low", lo), ("u_high", hi)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def p(self):
        return self.B.shape[1]


@dataclass(frozen=True)
class GroupedSystem:
    """g steps of a base system merged into one step.

    x_{k+g} = A_bar x_k + B_bar (u_k, ..., u_{k+g-1}) + q_bar + w_bar with
    w_bar = sum_i A^(g-1-i) w_{k+i}; see combine_noise.
    """

    base: LinearSystem
    group: int
    A_bar: np.ndarray = field(repr=False)
    B_bar: np.ndarray = field(repr=False)
    q_bar: np.ndarray = field(repr=False)
    u_low: np.ndarray = field(repr=False)
    u_high: np.ndarray = field(repr=False)

    @property
    def n(self):
        return self.A_bar.shape[0]

    @property
    def m(self):
        return self.B_bar.shape[1]

    def full_row_rank(self, rank_tol=RANK_TOL):
        return numerical_rank(self.B_bar, rank_tol) == self.n


def controllability_matrix(sys: LinearSystem):
    blocks = [sys.B]
    for _ in range(sys.n - 1):
        blocks.append(sys.A @ blocks[-1])
    return np.hstack(blocks)


def is_controllable(sys: LinearSystem, rank_tol=RANK_TOL):
    return numerical_rank(controllability_matrix(sys), rank_tol) == sys.n


def group_steps(sys: LinearSystem, g: int) -> GroupedSystem:
    if int(g) != g or g < 1:
        raise ValueError(f"group factor must be a positive integer, got {g}")
    g = int(g)
    powers = [np.eye(sys.n)]
    for _ in range(g):
        powers.append(sys.A @ powers[-1])
    A_bar = powers[g]
    # input of step i is propagated by A^(g-1-i)
    B_bar = np.hstack([powers[g - 1 - i] @ sys.B for i in range(g)])
    q_bar = sum(powers[i] @ sys.q for i in range(g))
    u_low = np.tile(sys.u_low, g)
    u_high = np.tile(sys.u_high, g)
    for a in (A_bar, B_bar, q_bar, u_low, u_high):
        a.setflags(write=False)
    return GroupedSystem(sys, g, A_bar, B_bar, q_bar, u_low, u_high)


def combine_noise(A, w):
    """Grouped noise sum_i A^(g-1-i) w[..., i, :] for base draws w of shape (..., g, n)."""
    w = np.asarray(w, dtype=float)
    g = w.shape[-2]
    out = np.zeros(w.shape[:-2] + (w.shape[-1],))
    for i in range(g):
        out = out @ A.T + w[..., i, :]
    return out


def control_input(gsys: GroupedSystem, x, d, rank_tol=RANK_TOL):
    """Minimum-norm input steering the noiseless successor of x onto d."""
    if not gsys.full_row_rank(rank_tol):
        raise np.linalg.LinAlgError("B_bar is rank deficient; grouped system is not fully actuated")
    x = np.asarray(x, dtype=float)
    d = np.asarray(d, dtype=float)
    rhs = d - gsys.q_bar - x @ gsys.A_bar.T
    return rhs @ pinv_svd(gsys.B_bar, rank_tol).T


def successor(gsys: GroupedSystem, x, u, w, atol=1e-9):
    u = np.asarray(u, dtype=float)
    if np.any(u < gsys.u_low - atol) or np.any(u > gsys.u_high + atol):
        warnings.warn("control input outside the admissible input box", RuntimeWarning, stacklevel=2)
    x = np.asarray(x, dtype=float)
    return x @ gsys.A_bar.T + u @ gsys.B_bar.T + gsys.q_bar + np.asarray(w, dtype=float)
