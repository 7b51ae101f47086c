"""PAC probability intervals from sample counts.

Given N i.i.d. noise samples of which N_out fall outside a region, the
interval [p_low, p_up] contains the true probability of the region with
confidence at least 1 - beta.  Both bounds are roots of binomial tail
equations, solved here by bisection with the tails evaluated in log space.
"""
from __future__ import annotations

import math
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.special import gammaln

DEFAULT_TOL = 1e-9


class ProbInterval(NamedTuple):
    low: float
    up: float


def _check(N, beta, n_out):
    if int(N) != N or N < 1:
        raise ValueError(f"N must be a positive integer, got {N}")
    if not 0.0 < beta < 1.0:
        raise ValueError(f"beta must lie in (0, 1), got {beta}")
    if int(n_out) != n_out or not 0 <= n_out <= N:
        raise ValueError(f"n_out must lie in 0..{N}, got {n_out}")


@lru_cache(maxsize=64)
def _log_binom(N):
    i = np.arange(N + 1)
    out = gammaln(N + 1) - gammaln(i + 1) - gammaln(N - i + 1)
    out.setflags(write=False)
    return out


_CHUNK = 1 << 21


_MAX_ITER = 200


def log_tails(N, p, ks, lower):
    """Log binomial tails for each (p[j], ks[j]).

    lower: log sum_{i=0}^{k} C(N,i) (1-p)^i p^(N-i)
    upper: log sum_{i=k}^{N} C(N,i) (1-p)^i p^(N-i)
    Terms are shifted by their maximum before summation to avoid underflow.
    """
    p = np.asarray(p, dtype=float)
    ks = np.asarray(ks, dtype=np.int64)
    i = np.arange(N + 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = _log_binom(N)[None, :] + np.outer(np.log1p(-p), i) + np.outer(np.log(p), N - i)
    t = np.where(np.isnan(t), -np.inf, t)  # 0 * log(0) terms
    keep = (i[None, :] <= ks[:, None]) if lower else (i[None, :] >= ks[:, None])
    t = np.where(keep, t, -np.inf)
    m = t.max(axis=1)
    safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        return safe + np.log(np.sum(np.exp(t - safe[:, None]), axis=1))


def _solve(N, beta, ks, lower, tol):
    """Bisection for all ks at once; returns the conservative bracket end.

    An entry stops once its bracket is narrower than tol and the log tail at
    the returned end is within tol of log(beta / 2N), i.e. the tail matches
    beta / 2N to relative accuracy tol.  Entries whose bracket can no longer
    shrink in floating point stop as well.
    """
    ks = np.asarray(ks, dtype=np.int64)
    target = math.log(beta / (2 * N))
    out = np.empty(ks.size)
    step = max(1, _CHUNK // (N + 1))
    for s in range(0, ks.size, step):
        k = ks[s:s + step]
        lo = np.zeros(k.size)
        hi = np.ones(k.size)
        v_end = np.full(k.size, np.inf)
        active = np.ones(k.size, dtype=bool)
        for _ in range(_MAX_ITER):
            idx = np.flatnonzero(active)
            if idx.size == 0:
                break
            a, b = lo[idx], hi[idx]
            mid = 0.5 * (a + b)
            stuck = (mid <= a) | (mid >= b)
            v = log_tails(N, mid, k[idx], lower) - target
            # lower tail increases in p, upper tail decreases
            right = (v < 0) if lower else (v >= 0)
            lo[idx] = np.where(right, mid, a)
            hi[idx] = np.where(right, b, mid)
            if lower:
                v_end[idx] = np.where(right, v, v_end[idx])
            else:
                v_end[idx] = np.where(right, v_end[idx], v)
            done = ((hi[idx] - lo[idx]) <= tol) & (np.abs(v_end[idx]) <= tol) | stuck
            active[idx[done]] = False
        out[s:s + step] = lo[:k.size] if lower else hi[:k.size]
    return out


def p_lows(N, beta, n_outs, tol=DEFAULT_TOL):
    n_outs = np.asarray(n_outs, dtype=np.int64)
    out = np.zeros(n_outs.size)
    todo = n_outs < N
    if todo.any():
        out[todo] = _solve(N, beta, n_outs[todo], True, tol)
    return out


def p_ups(N, beta, n_outs, tol=DEFAULT_TOL):
    n_outs = np.asarray(n_outs, dtype=np.int64)
    out = np.ones(n_outs.size)
    todo = n_outs > 0
    if todo.any():
        out[todo] = _solve(N, beta, n_outs[todo], False, tol)
    return out


def p_low(N, beta, n_out, tol=DEFAULT_TOL):
    """Lower bound; 0 when every sample lies outside the region.

    Root of beta/(2N) = sum_{i=0}^{n_out} C(N,i) (1-p)^i p^(N-i).  The lower
    end of the final bisection bracket is returned, so the bound errs low.
    """
    _check(N, beta, n_out)
    return float(p_lows(N, beta, [n_out], tol)[0])


def p_up(N, beta, n_out, tol=DEFAULT_TOL):
    """Upper bound; 1 when no sample lies outside the region.

    Root of beta/(2N) = 1 - sum_{i=0}^{n_out-1} C(N,i) (1-p)^i p^(N-i), i.e.
    of the upper tail sum_{i=n_out}^{N}.  Errs high.
    """
    _check(N, beta, n_out)
    return float(p_ups(N, beta, [n_out], tol)[0])


def interval(N, beta, n_out, tol=DEFAULT_TOL, table=None) -> ProbInterval:
    if table is not None and table.N == N and table.beta == beta:
        return table[n_out]
    return ProbInterval(p_low(N, beta, n_out, tol), p_up(N, beta, n_out, tol))


class IntervalTable:
    """Intervals for all n_out at fixed (N, beta); rows are filled on demand."""

    def __init__(self, N, beta, tol=DEFAULT_TOL):
        _check(N, beta, 0)
        self.N = int(N)
        self.beta = float(beta)
        self.tol = tol
        self._low = np.full(self.N + 1, np.nan)
        self._up = np.full(self.N + 1, np.nan)

    def _fill(self, n_outs):
        ks = np.unique(np.asarray(n_outs, dtype=np.int64))
        ks = ks[np.isnan(self._low[ks])]
        if ks.size:
            self._low[ks] = p_lows(self.N, self.beta, ks, self.tol)
            self._up[ks] = p_ups(self.N, self.beta, ks, self.tol)

    def __getitem__(self, n_out):
        _check(self.N, self.beta, n_out)
        self._fill([int(n_out)])
        return ProbInterval(float(self._low[n_out]), float(self._up[n_out]))

    def __len__(self):
        return self.N + 1

    def lookup(self, n_outs):
        """Vectorized (low, up) arrays for an integer array of n_out values."""
        n_outs = np.asarray(n_outs, dtype=np.int64)
        if n_outs.size and (n_outs.min() < 0 or n_outs.max() > self.N):
            raise ValueError("n_out outside table range")
        self._fill(n_outs)
        return self._low[n_outs], self._up[n_outs]

    @property
    def complete(self):
        return not np.isnan(self._low).any()

    @property
    def low(self):
        self._fill(np.arange(self.N + 1))
        return self._low.copy()

    @property
    def up(self):
        self._fill(np.arange(self.N + 1))
        return self._up.copy()

    def save(self, path):
        self._fill(np.arange(self.N + 1))
        with open(path, "w") as fh:
            fh.write(f"{self.N} {self.beta:.12g}\n")
            for k in range(self.N + 1):
                fh.write(f"{k} {self._low[k]:.12g} {self._up[k]:.12g}\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            head = fh.readline().split()
            table = cls(int(head[0]), float(head[1]))
            for line in fh:
                k, lo, up = line.split()
                table._low[int(k)] = float(lo)
                table._up[int(k)] = float(up)
        if not table.complete:
            raise ValueError(f"{path}: table is missing rows")
        return table


def build_table(N, beta, tol=DEFAULT_TOL) -> IntervalTable:
    table = IntervalTable(N, beta, tol)
    table._fill(np.arange(table.N + 1))
    return table


_TABLES = {}


def cached_table(N, beta, tol=DEFAULT_TOL) -> IntervalTable:
    """Shared lazily filled table per (N, beta, tol)."""
    key = (int(N), float(beta), float(tol))
    if key not in _TABLES:
        _TABLES[key] = IntervalTable(N, beta, tol)
    return _TABLES[key]


def frequentist(N, n_in):
    if N <= 0:
        raise ValueError("frequentist estimate needs N >= 1")
    if not 0 <= n_in <= N:
        raise ValueError(f"n_in must lie in 0..{N}")
    return n_in / N


def hoeffding_eps(N, beta):
    return math.sqrt(math.log(2.0 / beta) / (2.0 * N))


def hoeffding_interval(N, beta, n_in) -> ProbInterval:
    p = frequentist(N, n_in)
    eps = hoeffding_eps(N, beta)
    return ProbInterval(max(0.0, p - eps), min(1.0, p + eps))
