"""Noise samplers for the base system and their grouped combination."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from ..linsys import combine_noise


def make_rng(seed):
    """Counter-based generator (Philox) so that streams are reproducible per seed."""
    return np.random.Generator(np.random.Philox(seed))


def load_samples_csv(path):
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if not rec:
                continue
            try:
                rows.append([float(v) for v in rec])
            except ValueError:
                if rows:
                    raise
                continue  # header line
    if not rows:
        raise ValueError(f"{path}: no samples")
    return np.array(rows, dtype=float)


@dataclass
class NoiseSampler:
    """i.i.d. base-step noise.

    kind: "gaussian" (mean, cov), "uniform" (low, high), "mixture"
    (weights, means, covs), "zero" (dim) or "file" (path, grouped).  File
    samples are drawn without replacement inside one batch; a file marked
    grouped already holds grouped-system noise.
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        p = self.params
        if self.kind == "gaussian":
            p["mean"] = np.atleast_1d(np.asarray(p.get("mean", np.zeros(len(p["cov"]))), dtype=float))
            p["cov"] = np.atleast_2d(np.asarray(p["cov"], dtype=float))
        elif self.kind == "uniform":
            p["low"] = np.atleast_1d(np.asarray(p["low"], dtype=float))
            p["high"] = np.atleast_1d(np.asarray(p["high"], dtype=float))
        elif self.kind == "mixture":
            w = np.asarray(p["weights"], dtype=float)
            p["weights"] = w / w.sum()
            p["means"] = np.atleast_2d(np.asarray(p["means"], dtype=float))
            p["covs"] = np.asarray(p["covs"], dtype=float)
        elif self.kind == "file":
            p["data"] = load_samples_csv(p["path"])
            p.setdefault("grouped", False)
        elif self.kind == "zero":
            p["dim"] = int(p["dim"])
        else:
            raise ValueError(f"unknown noise kind {self.kind!r}")

    @property
    def dim(self):
        p = self.params
        return {
            "gaussian": lambda: p["mean"].size,
            "uniform": lambda: p["low"].size,
            "mixture": lambda: p["means"].shape[1],
            "file": lambda: p["data"].shape[1],
            "zero": lambda: p["dim"],
        }[self.kind]()

    @property
    def pregrouped(self):
        return self.kind == "file" and bool(self.params["grouped"])

    def draw(self, rng, N, batch=True):
        """N base-noise vectors (N, n)."""
        p = self.params
        if self.kind == "gaussian":
            return rng.multivariate_normal(p["mean"], p["cov"], size=N, method="cholesky")
        if self.kind == "uniform":
            return rng.uniform(p["low"], p["high"], size=(N, p["low"].size))
        if self.kind == "mixture":
            comp = rng.choice(p["weights"].size, size=N, p=p["weights"])
            out = np.empty((N, p["means"].shape[1]))
            for c in range(p["weights"].size):
                idx = np.flatnonzero(comp == c)
                out[idx] = rng.multivariate_normal(p["means"][c], p["covs"][c], size=idx.size, method="cholesky")
            return out
        if self.kind == "zero":
            return np.zeros((N, p["dim"]))
        data = p["data"]
        if batch:
            if N > data.shape[0]:
                raise ValueError(f"sample file holds {data.shape[0]} samples, batch needs {N}")
            return data[rng.choice(data.shape[0], size=N, replace=False)]
        return data[rng.integers(0, data.shape[0], size=N)]

    def draw_grouped(self, rng, N, A, g, batch=True):
        """N samples of the grouped noise sum_i A^(g-1-i) w_i."""
        if self.pregrouped or g == 1:
            return self.draw(rng, N, batch)
        base = self.draw(rng, N * g, batch)
        return combine_noise(np.asarray(A), base.reshape(N, g, -1))


def sampler_from_dict(d):
    d = dict(d)
    kind = d.pop("kind")
    return NoiseSampler(kind, d)
