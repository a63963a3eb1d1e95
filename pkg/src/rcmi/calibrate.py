"""Moment-matching calibration of block-model parameters.

The 0-/1-sided block models form exponential families in theta*, so the
divergence-minimizing parameter is the one matching the expectation of the
sufficient statistic: the in-block edge agreement sum, plus (for sided
models) the agreement of the conditioned boundary rows with the adjacent
block rows.  Targets come from the true model, either Monte Carlo over a
Gibbs corpus or exactly from the bulk row process at small widths; the model
side is evaluated by chain BP, and theta* is solved by bisection on the
strictly increasing moment map.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .chain import build_block_model, block_moment, site_mean_spins
from .grid import validate_image
from .rowchain import get_row_chain
from .schemes import block_spans

BRACKET_HIGH = 4.0
MAX_ITERATIONS = 200


class BracketError(RuntimeError):
    """Calibration target lies outside the moment range achievable on [0, 4]."""


class InsufficientSamplesError(RuntimeError):
    """Monte-Carlo target standard error exceeds a third of the solve tolerance."""


class MissingCalibrationError(KeyError):
    """No calibrated parameter cached for the requested (sidedness, n_rows)."""


def statistic_size(n_rows, width, sidedness):
    """Number of agreement terms in the matched statistic."""
    n_edges = n_rows * (width - 1) + (n_rows - 1) * width
    return n_edges + (width if sidedness >= 1 else 0) + (width if sidedness == 2 else 0)


def default_tolerance(n_rows, width, sidedness):
    return 1e-4 * statistic_size(n_rows, width, sidedness)


@dataclass
class CalibrationResult:
    sidedness: int
    n_rows: int
    theta_star: float
    target_moment: float
    achieved_moment: float
    iterations: int
    target_stderr: float = 0.0


def _block_statistic(pixels, start, h, sidedness):
    blk = pixels[start:start + h]
    stat = np.sum(blk[:, :-1] * blk[:, 1:], dtype=np.int64) \
        + np.sum(blk[:-1, :] * blk[1:, :], dtype=np.int64)
    if sidedness >= 1:
        stat += np.sum(pixels[start - 1] * blk[0], dtype=np.int64)
    if sidedness == 2:
        stat += np.sum(pixels[start + h] * blk[-1], dtype=np.int64)
    return float(stat)


def _qualifying_spans(height, n_rows, sidedness):
    spans = []
    for start, h in block_spans(height, n_rows):
        if h != n_rows:
            continue  # tails get their own height's calibration
        if sidedness >= 1 and start == 0:
            continue
        if sidedness == 2 and start + h >= height:
            continue
        spans.append((start, h))
    return spans


def estimate_target_moment(corpus, n_rows, sidedness, tolerance=None):
    """Monte-Carlo expectation, under the true model, of the block statistic.

    Averages over all qualifying block positions of every corpus image and
    returns (target, stderr) with the standard error taken across images.
    With ``tolerance`` given, raises InsufficientSamplesError when
    stderr > tolerance / 3.
    """
    if not corpus:
        raise ValueError("corpus is empty")
    per_image = []
    for img in corpus:
        img = validate_image(img)
        spans = _qualifying_spans(img.shape[0], n_rows, sidedness)
        if not spans:
            raise ValueError(
                f"no {sidedness}-sided blocks of {n_rows} rows fit in a "
                f"{img.shape[0]}-row image")
        per_image.append(np.mean([_block_statistic(img, s, h, sidedness)
                                  for s, h in spans]))
    per_image = np.asarray(per_image)
    target = float(per_image.mean())
    stderr = float(per_image.std(ddof=1) / np.sqrt(per_image.size)) \
        if per_image.size > 1 else 0.0
    if tolerance is not None and stderr > tolerance / 3.0:
        raise InsufficientSamplesError(
            f"target stderr {stderr:.4g} exceeds tolerance/3 = {tolerance / 3.0:.4g}")
    return target, stderr


def exact_target_moment(width, theta, n_rows, sidedness):
    """Bulk-exact target from the stationary row process (width <= 8 or so)."""
    rc = get_row_chain(width, theta)
    eh, ev = rc.horizontal_moment(), rc.vertical_moment()
    extra = {0: 0, 1: 1, 2: 2}[sidedness]
    return n_rows * eh + (n_rows - 1 + extra) * ev


def sample_boundary_rows(corpus, n_rows, sidedness, max_samples=32):
    """Deterministic, evenly spaced subsample of realized boundary contexts.

    Returns an (B, W) array of rows above qualifying blocks for 1-sided
    calibration, or (B, 2, W) of (above, below) pairs for 2-sided.
    """
    rows = []
    for img in corpus:
        img = validate_image(img)
        for start, h in _qualifying_spans(img.shape[0], n_rows, sidedness):
            if sidedness == 1:
                rows.append(img[start - 1])
            else:
                rows.append(np.stack([img[start - 1], img[start + h]]))
    rows = np.asarray(rows)
    if rows.shape[0] > max_samples:
        pick = np.linspace(0, rows.shape[0] - 1, max_samples).round().astype(int)
        rows = rows[pick]
    return rows


def model_moment(theta_star, n_rows, width, sidedness,
                 boundary_rows=None, boundary_weights=None):
    """Expected matched statistic under the block model at theta_star.

    For sided models the boundary agreement term is averaged over the given
    realized boundary rows (uniformly, or with explicit weights when the
    boundary distribution is known exactly).
    """
    if sidedness == 0:
        return block_moment(build_block_model(n_rows, theta_star, width=width))
    if boundary_rows is None or len(boundary_rows) == 0:
        raise ValueError(f"{sidedness}-sided calibration needs boundary rows")
    boundary_rows = np.asarray(boundary_rows)
    if boundary_weights is None:
        weights = np.full(boundary_rows.shape[0], 1.0 / boundary_rows.shape[0])
    else:
        weights = np.asarray(boundary_weights, dtype=np.float64)
        weights = weights / weights.sum()
    total = 0.0
    for w, rows in zip(weights, boundary_rows):
        if w == 0.0:
            continue
        if sidedness == 1:
            model = build_block_model(n_rows, theta_star, width=width, top_row=rows)
            means = site_mean_spins(model)
            boundary = float(rows.astype(np.float64) @ means[0])
        else:
            model = build_block_model(n_rows, theta_star, width=width,
                                      top_row=rows[0], bottom_row=rows[1])
            means = site_mean_spins(model)
            boundary = float(rows[0].astype(np.float64) @ means[0]
                             + rows[1].astype(np.float64) @ means[-1])
        total += w * (block_moment(model) + boundary)
    return total


def solve_theta_star(target, n_rows, width, sidedness, tolerance=None,
                     boundary_rows=None, boundary_weights=None, target_stderr=0.0):
    """Bisection on theta* in [0, 4] of the increasing moment map."""
    if tolerance is None:
        tolerance = default_tolerance(n_rows, width, sidedness)

    def f(ts):
        return model_moment(ts, n_rows, width, sidedness, boundary_rows, boundary_weights)

    def result(ts, achieved, iters):
        return CalibrationResult(sidedness, n_rows, float(ts), float(target),
                                 float(achieved), iters, float(target_stderr))

    if target <= tolerance:
        if target < -tolerance:
            raise BracketError(f"target {target:.4g} below the ferromagnetic range")
        return result(0.0, 0.0, 0)
    hi_val = f(BRACKET_HIGH)
    if hi_val < target - tolerance:
        raise BracketError(
            f"target {target:.4g} exceeds moment {hi_val:.4g} at theta* = {BRACKET_HIGH}")

    lo, hi = 0.0, BRACKET_HIGH
    achieved = hi_val
    mid = hi
    for it in range(1, MAX_ITERATIONS + 1):
        mid = 0.5 * (lo + hi)
        achieved = f(mid)
        if abs(achieved - target) <= tolerance:
            return result(mid, achieved, it)
        if achieved < target:
            lo = mid
        else:
            hi = mid
    return result(mid, achieved, MAX_ITERATIONS)


class CalibrationTable:
    """Cache of calibrated parameters keyed by (sidedness, n_rows)."""

    def __init__(self, results=()):
        self.results = {}
        for r in results:
            self.add(r)

    def add(self, result):
        self.results[(result.sidedness, result.n_rows)] = result

    def theta_star(self, sidedness, n_rows):
        try:
            return self.results[(sidedness, n_rows)].theta_star
        except KeyError:
            raise MissingCalibrationError(
                f"no calibrated theta* for sidedness {sidedness}, {n_rows} rows") from None

    def __contains__(self, key):
        return key in self.results

    def to_csv(self, path, echo=()):
        with open(path, "w", newline="") as fh:
            for line in echo:
                fh.write(f"# {line}\n")
            w = csv.writer(fh)
            w.writerow(["sidedness", "n_rows", "theta_star", "target_moment",
                        "achieved_moment", "target_stderr", "iterations"])
            for key in sorted(self.results):
                r = self.results[key]
                w.writerow([r.sidedness, r.n_rows, repr(r.theta_star),
                            repr(r.target_moment), repr(r.achieved_moment),
                            repr(r.target_stderr), r.iterations])

    @classmethod
    def from_csv(cls, path):
        table = cls()
        with open(path, newline="") as fh:
            body = io.StringIO("".join(ln for ln in fh if not ln.startswith("#")))
        for row in csv.DictReader(body):
            table.add(CalibrationResult(
                int(row["sidedness"]), int(row["n_rows"]), float(row["theta_star"]),
                float(row["target_moment"]), float(row["achieved_moment"]),
                int(row["iterations"]), float(row["target_stderr"])))
        return table


def calibrate_corpus(corpus, sidedness_list, n_rows_list, width=None,
                     boundary_samples=32):
    """Calibrate a grid of (sidedness, n_rows) pairs against a Gibbs corpus."""
    if width is None:
        width = validate_image(corpus[0]).shape[1]
    table = CalibrationTable()
    for sidedness in sidedness_list:
        for n_rows in n_rows_list:
            target, stderr = estimate_target_moment(corpus, n_rows, sidedness)
            boundary = None
            if sidedness >= 1:
                boundary = sample_boundary_rows(corpus, n_rows, sidedness,
                                                boundary_samples)
            table.add(solve_theta_star(target, n_rows, width, sidedness,
                                       boundary_rows=boundary, target_stderr=stderr))
    return table
