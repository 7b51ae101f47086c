"""Rectangular partitions, H-polytopes and backward reachable sets.

Cells of a partition are addressed either by a multi-index tuple or by a
flat (C-order) integer id.  Points outside the partitioned domain map to
ABSORBING (flat id -1 in the vectorized routines).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .linsys import GroupedSystem, RANK_TOL, numerical_rank


class _Absorbing:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "Absorbing"

    def __reduce__(self):
        return (_Absorbing, ())


ABSORBING = _Absorbing()

CONTAIN_TOL = 1e-9


@dataclass(frozen=True)
class Region:
    """Polytope {x | M x <= b}."""

    M: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        M = np.atleast_2d(np.array(self.M, dtype=float))
        b = np.array(self.b, dtype=float).reshape(M.shape[0])
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "b", b)

    @property
    def dim(self):
        return self.M.shape[1]

    def contains(self, x, tol=CONTAIN_TOL):
        x = np.atleast_2d(x)
        return np.all(x @ self.M.T <= self.b + tol, axis=1)

    def as_box(self):
        """(low, high) if every row is +-e_i, with both sides present, else None."""
        n = self.dim
        low = np.full(n, -np.inf)
        high = np.full(n, np.inf)
        for row, rhs in zip(self.M, self.b):
            nz = np.flatnonzero(row)
            if len(nz) != 1:
                return None
            i = nz[0]
            c = row[i]
            if c > 0:
                high[i] = min(high[i], rhs / c)
            else:
                low[i] = max(low[i], rhs / c)
        if not (np.all(np.isfinite(low)) and np.all(np.isfinite(high))):
            return None
        return low, high


def box_region(low, high) -> Region:
    low = np.asarray(low, dtype=float)
    high = np.asarray(high, dtype=float)
    n = low.size
    M = np.vstack([np.eye(n), -np.eye(n)])
    return Region(M, np.concatenate([high, -low]))


def box_vertices(low, high):
    return np.array(list(itertools.product(*zip(low, high))), dtype=float)


def _lp(c, A_ub, b_ub, A_eq=None, b_eq=None, bounds=None):
    return linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")


def chebyshev_center(reg: Region):
    """Center of a largest inscribed ball.

    Ties are broken deterministically: after fixing the optimal radius, the
    coordinates are minimized one after another, so the lexicographically
    smallest center is returned.
    """
    M, b = reg.M, reg.b
    n = reg.dim
    norms = np.linalg.norm(M, axis=1)
    A_ub = np.hstack([M, norms[:, None]])
    c = np.zeros(n + 1)
    c[-1] = -1.0
    bounds = [(None, None)] * n + [(0, None)]
    res = _lp(c, A_ub, b, bounds=bounds)
    if res.status != 0:
        raise ValueError(f"Chebyshev center LP failed: {res.message}")
    r = res.x[-1]
    # fix the radius (slightly relaxed for solver tolerance), then go lexicographic
    fixed = [(None, None)] * n + [(r * (1 - 1e-9) - 1e-12, None)]
    x = res.x[:n]
    for i in range(n):
        ci = np.zeros(n + 1)
        ci[i] = 1.0
        sub = _lp(ci, A_ub, b, bounds=fixed)
        if sub.status != 0:
            break
        x = sub.x[:n]
        fixed[i] = (x[i], x[i])
    return x


def scale_polytope(reg: Region, center, lam) -> Region:
    """Scale reg about center by lam: M x <= lam b + (1 - lam) M c."""
    if lam < 0:
        raise ValueError("scaling factor must be non-negative")
    center = np.asarray(center, dtype=float)
    return Region(reg.M, lam * reg.b + (1.0 - lam) * (reg.M @ center))


@dataclass(frozen=True)
class Partition:
    """Uniform rectangular grid over the box [origin, origin + widths * counts]."""

    origin: np.ndarray
    widths: np.ndarray
    counts: tuple
    goal_cells: frozenset = frozenset()
    critical_cells: frozenset = frozenset()
    _strides: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        origin = np.array(self.origin, dtype=float).reshape(-1)
        widths = np.array(self.widths, dtype=float).reshape(-1)
        counts = tuple(int(c) for c in np.atleast_1d(self.counts))
        if not (origin.size == widths.size == len(counts)):
            raise ValueError("origin, widths and counts must have equal length")
        if np.any(widths <= 0) or any(c < 1 for c in counts):
            raise ValueError("widths must be positive and counts at least 1")
        goal = frozenset(self._norm(c, counts) for c in self.goal_cells)
        crit = frozenset(self._norm(c, counts) for c in self.critical_cells)
        if goal & crit:
            raise ValueError("goal and critical cells overlap")
        for name, val in (("origin", origin), ("widths", widths)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "goal_cells", goal)
        object.__setattr__(self, "critical_cells", crit)
        strides = np.ones(len(counts), dtype=np.int64)
        for i in range(len(counts) - 2, -1, -1):
            strides[i] = strides[i + 1] * counts[i + 1]
        object.__setattr__(self, "_strides", strides)

    @staticmethod
    def _norm(cell, counts):
        if isinstance(cell, (int, np.integer)):
            cell = np.unravel_index(int(cell), counts)
        cell = tuple(int(i) for i in cell)
        if len(cell) != len(counts) or any(not 0 <= i < c for i, c in zip(cell, counts)):
            raise ValueError(f"cell index {cell} outside grid {counts}")
        return cell

    @property
    def dim(self):
        return len(self.counts)

    @property
    def n_cells(self):
        return int(np.prod(self.counts))

    @property
    def low(self):
        return self.origin

    @property
    def high(self):
        return self.origin + self.widths * np.array(self.counts)

    def flat(self, cell):
        return int(np.dot(self._norm(cell, self.counts), self._strides))

    def cell(self, flat_id):
        return tuple(int(i) for i in np.unravel_index(int(flat_id), self.counts))

    def locate(self, x):
        idx = self.locate_many(np.atleast_1d(np.asarray(x, dtype=float))[None, :])[0]
        return ABSORBING if idx < 0 else self.cell(idx)

    def locate_many(self, X):
        """Flat cell ids of the rows of X; -1 for points outside the domain.

        Cells are half-open [low, high) except the last cell per dimension,
        which also contains its upper face.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        counts = np.array(self.counts)
        rel = (X - self.origin) / self.widths
        idx = np.floor(rel).astype(np.int64)
        # points on (or rounded onto) the upper face belong to the last cell
        on_top = (X <= self.high) & (idx == counts)
        idx[on_top] -= 1
        inside = np.all((idx >= 0) & (idx < counts), axis=1)
        out = np.full(X.shape[0], -1, dtype=np.int64)
        out[inside] = idx[inside] @ self._strides
        return out

    def cell_bounds(self, cell):
        cell = np.array(self._norm(cell, self.counts))
        low = self.origin + cell * self.widths
        return low, low + self.widths

    def cell_region(self, cell) -> Region:
        return box_region(*self.cell_bounds(cell))

    def cell_center(self, cell):
        low, high = self.cell_bounds(cell)
        return (low + high) / 2.0

    def centers(self):
        """Centers of all cells as an (n_cells, n) array in flat-id order."""
        grids = np.meshgrid(*[np.arange(c) for c in self.counts], indexing="ij")
        idx = np.stack([g.reshape(-1) for g in grids], axis=1)
        return self.origin + (idx + 0.5) * self.widths

    def label_arrays(self):
        goal = np.zeros(self.n_cells, dtype=bool)
        crit = np.zeros(self.n_cells, dtype=bool)
        for c in self.goal_cells:
            goal[self.flat(c)] = True
        for c in self.critical_cells:
            crit[self.flat(c)] = True
        return goal, crit

    def cells_in_box(self, low, high, tol=1e-9):
        """Cells whose union is exactly the box [low, high] (clipped to the domain)."""
        low = np.maximum(np.asarray(low, dtype=float), self.low)
        high = np.minimum(np.asarray(high, dtype=float), self.high)
        lo_i = (low - self.origin) / self.widths
        hi_i = (high - self.origin) / self.widths
        if np.any(np.abs(lo_i - np.round(lo_i)) > tol) or np.any(np.abs(hi_i - np.round(hi_i)) > tol):
            raise ValueError(f"box [{low}, {high}] is not aligned with the grid")
        ranges = [range(int(round(a)), int(round(b))) for a, b in zip(lo_i, hi_i)]
        return [tuple(c) for c in itertools.product(*ranges)]

    def with_labels(self, goal_cells=(), critical_cells=()):
        return Partition(self.origin, self.widths, self.counts, frozenset(goal_cells), frozenset(critical_cells))


def backward_reachable_set(gsys: GroupedSystem, d) -> Region:
    """{x | exists u in U_bar: A_bar x + B_bar u + q_bar = d} as an H-polytope."""
    n = gsys.n
    if numerical_rank(gsys.A_bar) < n:
        raise np.linalg.LinAlgError("A_bar is singular; backward reachable set not representable")
    d = np.asarray(d, dtype=float)
    B = gsys.B_bar
    if B.shape[1] == n and numerical_rank(B) == n:
        # u = Binv (d - q - A x) in [lo, hi]
        Binv = np.linalg.inv(B)
        K = Binv @ gsys.A_bar
        c = Binv @ (d - gsys.q_bar)
        M = np.vstack([-K, K])
        b = np.concatenate([gsys.u_high - c, c - gsys.u_low])
        return Region(M, b)
    # general case: x = Ainv (d - q) - Ainv B u is a zonotope
    Ainv = np.linalg.inv(gsys.A_bar)
    mid = (gsys.u_low + gsys.u_high) / 2.0
    half = (gsys.u_high - gsys.u_low) / 2.0
    center = Ainv @ (d - gsys.q_bar - B @ mid)
    gens = -(Ainv @ B) * half
    M, off = _zonotope_hrep(gens)
    return Region(M, M @ center + off)


def _zonotope_hrep(G, tol=RANK_TOL):
    """Facet normals and offsets of the zero-centered zonotope with generators G (columns)."""
    n, m = G.shape
    if n == 1:
        normals = np.array([[1.0], [-1.0]])
    else:
        normals = []
        for combo in itertools.combinations(range(m), n - 1):
            sub = G[:, combo]
            if numerical_rank(sub, tol) < n - 1:
                continue
            _, _, Vt = np.linalg.svd(sub.T)
            nv = Vt[-1]
            nv = nv / np.linalg.norm(nv)
            normals.extend([nv, -nv])
        normals = np.unique(np.round(np.array(normals), 12), axis=0)
    off = np.abs(normals @ G).sum(axis=1)
    return normals, off


def region_in_brs(gsys: GroupedSystem, reg: Region, d, tol=CONTAIN_TOL):
    """True iff every vertex of the box reg can be steered exactly onto d."""
    box = reg.as_box()
    if box is None:
        raise ValueError("containment test requires an axis-aligned box region")
    verts = box_vertices(*box)
    d = np.asarray(d, dtype=float)
    rhs = d - gsys.q_bar - verts @ gsys.A_bar.T
    B = gsys.B_bar
    if B.shape[1] == gsys.n and numerical_rank(B) == gsys.n:
        U = np.linalg.solve(B, rhs.T).T
        return bool(np.all(U >= gsys.u_low - tol) and np.all(U <= gsys.u_high + tol))
    bounds = list(zip(gsys.u_low, gsys.u_high))
    for r in rhs:
        res = _lp(np.zeros(B.shape[1]), None, None, A_eq=B, b_eq=r, bounds=bounds)
        if res.status != 0:
            return False
    return True


def enabled_matrix(gsys: GroupedSystem, part: Partition, targets, tol=CONTAIN_TOL):
    """Boolean (n_targets, n_cells) array: cell s lies in the backward reachable set of target a."""
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    out = np.zeros((targets.shape[0], part.n_cells), dtype=bool)
    for start, block in _enabled_blocks(gsys, part, targets, tol=tol):
        out[start:start + block.shape[0]] = block
    return out


def enabled_pairs(gsys: GroupedSystem, part: Partition, targets, tol=CONTAIN_TOL):
    """(target_ids, cell_ids) of all pairs where the cell lies in the target's backward reachable set."""
    a_ids, s_ids = [], []
    for start, block in _enabled_blocks(gsys, part, targets, tol=tol):
        a, s = np.nonzero(block)
        a_ids.append(a + start)
        s_ids.append(s)
    if not a_ids:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    return np.concatenate(a_ids).astype(np.int64), np.concatenate(s_ids).astype(np.int64)


def _enabled_blocks(gsys, part, targets, chunk=None, tol=CONTAIN_TOL):
    """Containment of every cell in the backward reachable set of every target, in blocks of targets.

    Equivalent to region_in_brs for every pair, but evaluated in closed form:
    for an affine map over a box the extreme values sit at vertices, so the
    vertex test reduces to a center value plus a radius per constraint.
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    centers = part.centers()
    half = part.widths / 2.0
    n = gsys.n
    B = gsys.B_bar
    if B.shape[1] == n and numerical_rank(B) == n:
        Binv = np.linalg.inv(B)
        K = Binv @ gsys.A_bar
        lo, hi = gsys.u_low, gsys.u_high
        c_targets = (targets - gsys.q_bar) @ Binv.T
        c_cells = centers @ K.T
    else:
        # H-representation of G(d) = G(0) shifted by Ainv d; constraints M x <= off + M Ainv (d - q - B mid)
        Ainv = np.linalg.inv(gsys.A_bar)
        mid = (gsys.u_low + gsys.u_high) / 2.0
        halfu = (gsys.u_high - gsys.u_low) / 2.0
        M, off = _zonotope_hrep(-(Ainv @ B) * halfu)
        K = M
        c_targets = (targets - gsys.q_bar - B @ mid) @ Ainv.T @ M.T
        c_cells = centers @ M.T
        lo = np.full(M.shape[0], -np.inf)
        hi = off
        # constraint is M x - M center_d <= off, written as -(c_t - M x) <= off
        c_targets = -c_targets
        c_cells = -c_cells
    radius = np.abs(K) @ half
    if chunk is None:
        chunk = max(1, (1 << 22) // max(1, centers.shape[0] * K.shape[0]))
    for s in range(0, targets.shape[0], chunk):
        val = c_targets[s:s + chunk, None, :] - c_cells[None, :, :]
        ok = np.all(val - radius >= lo - tol, axis=2) & np.all(val + radius <= hi + tol, axis=2)
        yield s, ok
