"""Built-in benchmark problems.

Every full model has a "-desk" variant with a coarser grid and a shorter
horizon so that it runs in seconds.
"""
from __future__ import annotations

import itertools
import math

import numpy as np

from ..geometry import Partition
from ..linsys import LinearSystem
from .problem import ProblemSpec
from .samplers import NoiseSampler


def centered_partition(center, widths, counts):
    center = np.asarray(center, dtype=float)
    widths = np.asarray(widths, dtype=float)
    return Partition(center - widths * np.asarray(counts) / 2.0, widths, counts)


def _labelled(part, goal_boxes=(), critical_boxes=()):
    goal = set()
    for lo, hi in goal_boxes:
        goal.update(part.cells_in_box(lo, hi))
    crit = set()
    for lo, hi in critical_boxes:
        crit.update(part.cells_in_box(lo, hi))
    return part.with_labels(goal, crit - goal)


def bas1(desk=False):
    """One-zone building: zone and radiator temperature, 15 minute steps."""
    sys = LinearSystem(
        A=[[0.8820, 0.0058], [0.0134, 0.9625]],
        B=[[0.0584, 0.0], [0.0, 0.0241]],
        q=[0.9604, 1.3269],
        u_low=[14.0, -10.0],
        u_high=[28.0, 10.0],
    )
    # the grid is already small, so the desk variant only shortens the horizon; wider
    # cells leave too little input authority to steer between them
    part = centered_partition([21.0, 38.0], [0.2, 0.2], (19, 20))
    part = _labelled(part, goal_boxes=[([20.9, -np.inf], [21.1, np.inf])])
    noise = NoiseSampler("gaussian", {"cov": np.diag([0.02, 0.1])})
    return ProblemSpec(
        name="bas1-desk" if desk else "bas1", system=sys, group=1, partition=part,
        K=16 if desk else 64, eta=0.5, x0=[20.0, 38.1], alpha=0.01,
        N0=25 if not desk else 100, gamma=2.0, N_max=12800 if not desk else 3200, noise=noise,
    )


def bas2(desk=False):
    """Two-zone building: two zone and two radiator temperatures."""
    sys = LinearSystem(
        A=[[0.8425, 0.0537, -0.0084, 0.0000],
           [0.0515, 0.8435, 0.0000, -0.0064],
           [0.0668, 0.0000, 0.8971, 0.0000],
           [0.0000, 0.0668, 0.0000, 0.8971]],
        B=np.diag([0.0584, 0.0599, 0.0362, 0.0362]),
        q=[1.2291, 1.0749, 0.0, 0.0],
        u_low=[14.0, 14.0, 65.0, 65.0],
        u_high=[26.0, 26.0, 85.0, 85.0],
    )
    counts = (11, 11, 7, 7) if desk else (21, 21, 9, 9)
    part = centered_partition([20.0, 20.0, 38.3, 38.3], [0.2] * 4, counts)
    part = _labelled(part, goal_boxes=[([19.9, 19.9, -np.inf, -np.inf], [20.1, 20.1, np.inf, np.inf])])
    noise = NoiseSampler("gaussian", {"cov": 0.01 * np.eye(4)})
    return ProblemSpec(
        name="bas2-desk" if desk else "bas2", system=sys, group=1, partition=part,
        K=8 if desk else 32, eta=0.3 if desk else 0.5, x0=[19.6, 20.4, 38.3, 38.3], alpha=0.01,
        N0=25 if not desk else 100, gamma=2.0, N_max=12800 if not desk else 800,
        symmetric=True, noise=noise,
    )


# obstacle blocks of the 3-D UAV layout, as lists of cell-center positions (x, y, z)
UAV_OBSTACLES = [
    ([-10, -8, -6], [0, 2, 6, 8], [-6, -4, -2, 0, 2]),
    ([-10, -8, -6], [6, 8], [2, 4]),
    ([-10, -8, -6], [4], [-6]),
    ([0, 2], [2, 4, 6, 8], [-6, -4, -2, 4]),
    ([0, 2], [2, 8], [0, 2]),
    ([0, 2], [-2, 0], [-6, -4, -2, 0, 2, 4, 6]),
    ([4, 6, 8], [-2, 0], [-6, -4, -2]),
    ([-10, -8], [-4, -2], [-6, -4, -2, 0]),
    ([0, 2], [-8, -6, -4], [-6]),
    ([0, 2], [-8, -6, -4], [4, 6]),
    ([12, 14], [-8, -6], [-6]),
    ([10, 12, 14], [6, 8], [-6, -4, -2, 0]),
]


def _uav_system(dims):
    A = np.kron(np.eye(dims), [[1.0, 1.0], [0.0, 1.0]])
    B = np.kron(np.eye(dims), [[0.5], [1.0]])
    return LinearSystem(A, B, None, [-4.0] * dims, [4.0] * dims)


def uav_noise(dims, scale=1.0):
    """Heavy-tailed stand-in for gust turbulence: skewed two-component Gaussian mixture."""
    pos, vel = 0.05 * scale, 0.02 * scale
    base = np.diag([pos, vel] * dims)
    shift = np.array([0.15, 0.05] * dims) * math.sqrt(scale)
    return NoiseSampler("mixture", {
        "weights": [0.8, 0.2],
        "means": [-0.25 * shift, shift],
        "covs": [base, 4.0 * base],
    })


def uav(desk=False):
    """UAV as three double integrators (x, vx, y, vy, z, vz), two steps grouped.

    The desk variant keeps the horizontal plane (x, vx, y, vy) at altitude
    z = 0 with the obstacles crossing it and the horizontal extent of the
    goal; at the start altitude z = -6 the obstacles close off the plane.
    """
    if desk:
        sys = _uav_system(2)
        part = centered_partition(np.zeros(4), [2, 1.5, 2, 1.5], (15, 3, 9, 3))
        goal = [([11, -np.inf, 1, -np.inf], [15, np.inf, 5, np.inf])]
        crit = []
        for xs, ys, zs in UAV_OBSTACLES:
            if 0 in zs:
                for x, y in itertools.product(xs, ys):
                    crit.append(([x - 1, -np.inf, y - 1, -np.inf], [x + 1, np.inf, y + 1, np.inf]))
        x0 = [-14, 0, 6, 0]
    else:
        sys = _uav_system(3)
        part = centered_partition(np.zeros(6), [2, 1.5, 2, 1.5, 2, 1.5], (15, 3, 9, 3, 7, 3))
        goal = [([11, -np.inf, 1, -np.inf, -7, -np.inf], [15, np.inf, 5, np.inf, -3, np.inf])]
        crit = []
        for xs, ys, zs in UAV_OBSTACLES:
            for x, y, z in itertools.product(xs, ys, zs):
                crit.append(([x - 1, -np.inf, y - 1, -np.inf, z - 1, -np.inf],
                             [x + 1, np.inf, y + 1, np.inf, z + 1, np.inf]))
        x0 = [-14, 0, 6, 0, -6, 0]
    part = _labelled(part, goal, crit)
    dims = 2 if desk else 3
    return ProblemSpec(
        name="uav-desk" if desk else "uav", system=sys, group=2, partition=part,
        K=8 if desk else 32, eta=0.75 if not desk else 0.5, x0=x0, alpha=0.01,
        N0=25 if not desk else 100, gamma=2.0, N_max=12800 if not desk else 1600,
        symmetric=True, noise=uav_noise(dims),
    )


def cwh_matrices(n=0.1, tau=1.0):
    """Discrete-time relative orbital dynamics, state (x, y, z, vx, vy, vz), input (ux, uy, uz)."""
    c, s, nt = math.cos(n * tau), math.sin(n * tau), n * tau
    A = np.array([
        [4 - 3 * c, 0, 0, s / n, 2 / n * (1 - c), 0],
        [6 * (s - nt), 1, 0, -2 / n * (1 - c), 4 / n * s - 3 * nt, 0],
        [0, 0, c, 0, 0, s / n],
        [3 * n * s, 0, 0, c, 2 * s, 0],
        [-6 * n * (1 - c), 0, 0, -2 * s, 4 * c - 3, 0],
        [0, 0, -n * s, 0, 0, c],
    ])
    B = np.array([
        [s / n, 2 / n * (1 - c), 0],
        [-2 / n * (1 - c), (4 * s - 3 * nt) / n, 0],
        [0, 0, s / n],
        [c, 2 * s, 0],
        [-2 * s, 4 * c - 3, 0],
        [0, 0, c],
    ])
    return A, B


def satellite(desk=False, n=0.1, tau=1.0):
    """Chaser satellite docking with a target at the origin while avoiding a third one.

    Units are normalized; n * tau is the orbital angle per step.  The desk
    variant keeps the in-plane motion (x, y, vx, vy).
    """
    A, B = cwh_matrices(n, tau)
    if desk:
        keep, ukeep = [0, 1, 3, 4], [0, 1]
        A, B = A[np.ix_(keep, keep)], B[np.ix_(keep, ukeep)]
        counts, widths = (11, 23, 5, 5), [2.0, 2.0, 0.4, 0.4]
        goal = [([-1, -1, -np.inf, -np.inf], [1, 1, np.inf, np.inf])]
        crit = [([-1, 9, -np.inf, -np.inf], [1, 13, np.inf, np.inf])]
        x0 = [0.0, 20.0, 0.0, 0.0]
    else:
        counts, widths = (11, 23, 5, 5, 5, 5), [2.0, 2.0, 2.0, 0.4, 0.4, 0.4]
        goal = [([-1, -1, -1, -np.inf, -np.inf, -np.inf], [1, 1, 1, np.inf, np.inf, np.inf])]
        crit = [([-1, 9, -1, -np.inf, -np.inf, -np.inf], [1, 13, 1, np.inf, np.inf, np.inf])]
        x0 = [0.0, 20.0, 0.0, 0.0, 0.0, 0.0]
    p = B.shape[1]
    sys = LinearSystem(A, B, None, [-2.0] * p, [2.0] * p)
    part = _labelled(centered_partition(np.zeros(len(counts)), widths, counts), goal, crit)
    var = np.array([0.1, 0.1, 0.01, 0.01, 0.01, 0.01])
    if desk:
        var = var[[0, 1, 3, 4]]
    noise = NoiseSampler("gaussian", {"cov": np.diag(var)})
    return ProblemSpec(
        name="satellite-desk" if desk else "satellite", system=sys, group=2, partition=part,
        K=4 if desk else 8, eta=0.3 if desk else 0.5, x0=x0, alpha=0.05,
        N0=200 if desk else 3200, gamma=2.0, N_max=800 if desk else 20000,
        symmetric=True, rho=None if desk else 100, noise=noise,
    )


def double_integrator(sigma=0.15):
    """2-D double integrator (position, velocity), two steps grouped, on an 11 x 11 grid."""
    sys = LinearSystem([[1.0, 1.0], [0.0, 1.0]], [[0.5], [1.0]], None, [-4.0], [4.0])
    part = Partition([-11.0, -5.5], [2.0, 1.0], (11, 11))
    part = _labelled(part, goal_boxes=[([5, -1.5], [9, 1.5])], critical_boxes=[([-1, -5.5], [1, -2.5])])
    noise = NoiseSampler("gaussian", {"cov": np.diag([sigma, sigma])})
    return ProblemSpec(
        name="di2", system=sys, group=2, partition=part, K=8, eta=0.5, x0=[-8.0, 0.0],
        alpha=0.05, N0=100, gamma=2.0, N_max=1600, symmetric=True, noise=noise,
    )


MODELS = {
    "bas1": lambda: bas1(False),
    "bas1-desk": lambda: bas1(True),
    "bas2": lambda: bas2(False),
    "bas2-desk": lambda: bas2(True),
    "uav": lambda: uav(False),
    "uav-desk": lambda: uav(True),
    "satellite": lambda: satellite(False),
    "satellite-desk": lambda: satellite(True),
    "di2": double_integrator,
}


def builtin_model(name) -> ProblemSpec:
    try:
        return MODELS[name]()
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(MODELS)}") from None
