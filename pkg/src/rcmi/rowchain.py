"""Exact bulk row process of the Ising grid at small widths.

For a width-W grid, successive rows form a Markov chain whose transfer
matrix over the 2^W row configurations is
T(a, b) = exp(theta * (h(a)/2 + v(a, b) + h(b)/2)), with h the within-row and
v the between-row agreement sums (the symmetric split leaves the chain
unchanged and keeps the eigenproblem symmetric).  The top Perron pair gives
the stationary row distribution and the row-to-row transition kernel deep
inside a tall image, from which entropy rates, row informations, and
divergence terms follow exactly.  Practical only for W <= 8 or so; used as
the reference oracle for the corpus-scale estimators.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

LN2 = np.log(2.0)


class RowChain:
    def __init__(self, width, theta):
        if width < 1 or width > 12:
            raise ValueError("row-chain width must be in [1, 12]")
        self.width = int(width)
        self.theta = float(theta)
        n = 1 << self.width
        states = np.arange(n, dtype=np.uint32)
        bits = (states[:, None] >> np.arange(self.width, dtype=np.uint32)[None, :]) & 1
        spins = bits.astype(np.int8) * 2 - 1
        self.spins = spins
        self.h = np.sum(spins[:, :-1] * spins[:, 1:], axis=1, dtype=np.int32) \
            if self.width > 1 else np.zeros(n, dtype=np.int32)
        pop = np.zeros(n, dtype=np.int32)
        for b in range(self.width):
            pop += ((states >> np.uint32(b)) & 1).astype(np.int32)
        self.v = self.width - 2 * (pop[states[:, None] ^ states[None, :]])

        log_t = self.theta * (0.5 * self.h[:, None] + self.v + 0.5 * self.h[None, :])
        t = np.exp(log_t - log_t.max())
        w_eig, vecs = np.linalg.eigh(t)
        phi = vecs[:, -1]
        if phi.sum() < 0:
            phi = -phi
        if np.any(phi <= 0):
            raise FloatingPointError("Perron vector not strictly positive")
        lam = w_eig[-1]
        self.P = t * phi[None, :] / (lam * phi[:, None])
        self.P /= self.P.sum(axis=1, keepdims=True)  # remove rounding residue
        self.pi = phi * phi
        self.pi /= self.pi.sum()

    # -- entropies (bits per ROW; divide by width for per-pixel figures) --

    def row_entropy(self):
        return float(-(self.pi * np.log2(self.pi)).sum())

    def step_kernel(self, gap=1):
        p = np.linalg.matrix_power(self.P, gap)
        return p / p.sum(axis=1, keepdims=True)

    def conditional_entropy(self, gap=1):
        """H(row_{k+gap} | row_k), bits per row."""
        p = self.step_kernel(gap)
        logp = np.log2(np.where(p > 0, p, 1.0))
        return float(-np.sum(self.pi[:, None] * p * logp))

    def mutual_information(self, gap=1):
        """I(row_k ; row_{k+gap}), bits per row."""
        return self.row_entropy() - self.conditional_entropy(gap)

    def entropy_rate(self):
        """H_inf = H(row | previous row) / width, bits per pixel."""
        return self.conditional_entropy(1) / self.width

    # -- moments of the sufficient statistics, per row / per row pair --

    def horizontal_moment(self):
        """E[sum of within-row agreements] for one bulk row."""
        return float(self.pi @ self.h)

    def vertical_moment(self):
        """E[sum of between-row agreements] for one bulk adjacent row pair."""
        return float(np.sum(self.pi[:, None] * self.P * self.v))

    # -- reference quantities for single-row (N_b = 1) coding --

    def row_model_distribution(self, theta_star):
        """1-row 0-sided block model: p(row) proportional to exp(theta* h(row))."""
        e = theta_star * self.h
        p = np.exp(e - e.max())
        return p / p.sum()

    def divergence_from_row_model(self, theta_star):
        """D(true bulk row distribution || 1-row model), bits per row."""
        q = self.row_model_distribution(theta_star)
        return float(np.sum(self.pi * (np.log2(self.pi) - np.log2(q))))


@lru_cache(maxsize=16)
def get_row_chain(width, theta):
    return RowChain(width, theta)
