"""Weighted nonlinear least-squares position fixes from UWB ranges.

Two weightings of the range residuals are supported:

``residual``
    sum_i  beta_i * (d_i - ||x - X_i||)^2          (default)
``measurement``
    sum_i  (beta_i * d_i - ||x - X_i||)^2
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

RESIDUAL = "residual"
MEASUREMENT = "measurement"
MODES = (RESIDUAL, MEASUREMENT)
MAX_RESTARTS = 3


@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = 100
    gradient_tol: float = 1e-8
    step_tol: float = 1e-10
    initial_damping: float = 1e-3
    weight_floor: float = 0.05
    weighting_mode: str = RESIDUAL
    coarse_grid: int = 24               # cells per axis of the restart scan; 0 disables

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("solver.max_iterations: must be positive")
        for name in ("gradient_tol", "step_tol", "initial_damping"):
            if not getattr(self, name) > 0:
                raise ValueError(f"solver.{name}: must be > 0")
        if not 0 < self.weight_floor <= 1:
            raise ValueError("solver.weight_floor: must lie in (0, 1]")
        if self.coarse_grid < 0:
            raise ValueError("solver.coarse_grid: must be >= 0")
        if self.weighting_mode not in MODES:
            raise ValueError(f"solver.weighting_mode: expected one of {MODES}")


@dataclass
class WlsProblem:
    anchors: np.ndarray                 # (N, 2)
    ranges: np.ndarray                  # (N,)
    weights: np.ndarray                 # (N,)
    initial_guess: np.ndarray           # (2,)
    bounds: Optional[tuple] = None      # (xmin, ymin, xmax, ymax)
    anchor_ids: Optional[list] = None

    def __post_init__(self):
        self.anchors = np.asarray(self.anchors, dtype=float).reshape(-1, 2)
        self.ranges = np.asarray(self.ranges, dtype=float).reshape(-1)
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        self.initial_guess = np.asarray(self.initial_guess, dtype=float).reshape(2)
        n = len(self.anchors)
        if len(self.ranges) != n or len(self.weights) != n:
            raise ValueError("anchors, ranges and weights differ in length")
        for name in ("anchors", "ranges", "weights", "initial_guess"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"non-finite {name}")
        if np.any(self.ranges < 0):
            raise ValueError("negative range")
        if np.any(self.weights <= 0):
            raise ValueError("weights must be positive")


@dataclass
class PositionEstimate:
    position: np.ndarray
    cost: float
    iterations: int
    converged: bool
    cost_history: list = field(default_factory=list)


def _terms(x, p: WlsProblem, mode: str):
    diff = x - p.anchors
    dist = np.hypot(diff[:, 0], diff[:, 1])
    if mode == RESIDUAL:
        sw = np.sqrt(p.weights)
        r = sw * (p.ranges - dist)
    elif mode == MEASUREMENT:
        sw = np.ones(len(p.ranges))
        r = p.weights * p.ranges - dist
    else:
        raise ValueError(f"unknown weighting mode {mode!r}")
    return diff, dist, sw, r


def objective(x, p: WlsProblem, mode: str = RESIDUAL) -> float:
    """Weighted sum of squared range residuals at ``x``."""
    _, _, _, r = _terms(np.asarray(x, dtype=float), p, mode)
    return float(r @ r)


def residuals_and_jacobian(x, p: WlsProblem, mode: str = RESIDUAL):
    """Residual vector and its N x 2 Jacobian.

    At a point coinciding with an anchor that row's direction is taken as zero.
    """
    diff, dist, sw, r = _terms(np.asarray(x, dtype=float), p, mode)
    unit = np.zeros_like(diff)
    nz = dist > 0
    unit[nz] = diff[nz] / dist[nz, None]
    return r, -sw[:, None] * unit


def _project(x, bounds):
    if bounds is None:
        return x
    xmin, ymin, xmax, ymax = bounds
    return np.array([min(max(x[0], xmin), xmax), min(max(x[1], ymin), ymax)])


def _projected_gradient(x, g, bounds):
    if bounds is None:
        return g
    g = g.copy()
    lo = (bounds[0], bounds[1])
    hi = (bounds[2], bounds[3])
    for k in range(2):
        # descent direction is -g; drop components pushing past an active bound
        if (x[k] <= lo[k] and g[k] > 0) or (x[k] >= hi[k] and g[k] < 0):
            g[k] = 0.0
    return g


def _free_mask(x, g, bounds):
    """Coordinates not pinned at a bound by an outward-pointing descent direction."""
    if bounds is None:
        return np.ones(2, dtype=bool)
    lo = (bounds[0], bounds[1])
    hi = (bounds[2], bounds[3])
    return np.array([not ((x[k] <= lo[k] and g[k] > 0) or (x[k] >= hi[k] and g[k] < 0))
                     for k in range(2)])


def _lm(p: WlsProblem, x0, cfg: SolverConfig, wsum: float) -> PositionEstimate:
    mode = cfg.weighting_mode
    x = _project(np.array(x0, dtype=float), p.bounds)
    r, J = residuals_and_jacobian(x, p, mode)
    cost = float(r @ r)
    history = [cost]
    lam = cfg.initial_damping
    converged = False
    it = 0
    while it < cfg.max_iterations:
        g = J.T @ r
        if np.max(np.abs(_projected_gradient(x, g, p.bounds))) / wsum < cfg.gradient_tol:
            converged = True
            break
        it += 1
        free = _free_mask(x, g, p.bounds)
        H = J.T @ J
        # active coordinates are frozen: decouple them and zero their gradient
        H[~free, :] = 0.0
        H[:, ~free] = 0.0
        H[~free, ~free] = 1.0
        gf = np.where(free, g, 0.0)
        D = np.maximum(np.diag(H), 1e-12 * max(1.0, float(np.max(np.diag(H)))))
        accepted = False
        while lam < 1e16:
            try:
                step = np.linalg.solve(H + lam * np.diag(D), -gf)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            x_new = _project(x + step, p.bounds)
            r_new, J_new = residuals_and_jacobian(x_new, p, mode)
            cost_new = float(r_new @ r_new)
            if cost_new < cost:
                accepted = True
                lam = max(lam / 10.0, 1e-15)
                break
            lam *= 10.0
        if not accepted:
            break
        moved = float(np.linalg.norm(x_new - x))
        x, r, J, cost = x_new, r_new, J_new, cost_new
        history.append(cost)
        if moved < cfg.step_tol * (1.0 + float(np.linalg.norm(x))):
            break
    if not converged:
        g = J.T @ r
        converged = bool(np.max(np.abs(_projected_gradient(x, g, p.bounds))) / wsum < cfg.gradient_tol)
    return PositionEstimate(x, cost, it, converged, history)


def _grid_values(p: WlsProblem, xs, ys, mode: str) -> np.ndarray:
    if mode == RESIDUAL:
        w, d = p.weights, p.ranges
    else:
        w, d = np.ones(len(p.ranges)), p.weights * p.ranges
    total = np.zeros((len(xs), len(ys)))
    buf = np.empty_like(total)
    for (ax, ay), wi, di in zip(p.anchors, w, d):
        np.add(((xs - ax) ** 2)[:, None], ((ys - ay) ** 2)[None, :], out=buf)
        np.sqrt(buf, out=buf)
        np.subtract(di, buf, out=buf)
        np.square(buf, out=buf)
        buf *= wi
        total += buf
    return total


def solve(p: WlsProblem, cfg: SolverConfig = SolverConfig()) -> PositionEstimate:
    """Levenberg-Marquardt minimization of the weighted range objective.

    Damping uses Marquardt's diagonal scaling and the gradient test is applied
    to the gradient divided by the total residual weight, so multiplying all
    weights by a constant leaves the iterate sequence unchanged. With
    ``p.bounds`` steps are projected into the box, coordinates pinned at a
    bound are held fixed, and a coarse grid scan seeds a second descent
    that replaces the first only if it ends strictly lower, which guards
    against the local minima of range objectives.
    """
    n = len(p.ranges)
    if n < 3:
        raise ValueError(f"under-determined: {n} ranges, need at least 3")
    wsum = float(p.weights.sum()) if cfg.weighting_mode == RESIDUAL else float(n)
    est = _lm(p, p.initial_guess, cfg, wsum)
    if p.bounds is None or cfg.coarse_grid == 0:
        return est

    xmin, ymin, xmax, ymax = p.bounds
    xs = np.linspace(xmin, xmax, cfg.coarse_grid + 1)
    ys = np.linspace(ymin, ymax, cfg.coarse_grid + 1)
    cell = np.array([xs[1] - xs[0], ys[1] - ys[0]])
    best = est
    for seed in _coarse_seeds(_grid_values(p, xs, ys, cfg.weighting_mode), xs, ys, MAX_RESTARTS):
        if np.all(np.abs(seed - est.position) <= 1.5 * cell):
            continue  # same basin as the warm-started descent
        alt = _lm(p, seed, cfg, wsum)
        if alt.cost < best.cost * (1.0 - 1e-9):
            best = alt
    if best is est:
        return est
    return PositionEstimate(best.position, best.cost, est.iterations + best.iterations,
                            best.converged, est.cost_history + [best.cost])


def _coarse_seeds(vals: np.ndarray, xs, ys, count: int):
    """Lowest discrete local minima of a grid of objective values."""
    padded = np.pad(vals, 1, constant_values=np.inf)
    is_min = np.ones(vals.shape, dtype=bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di or dj:
                nb = padded[1 + di:1 + di + vals.shape[0], 1 + dj:1 + dj + vals.shape[1]]
                is_min &= vals <= nb
    idx = np.flatnonzero(is_min)
    idx = idx[np.argsort(vals.flat[idx], kind="stable")][:count]
    return [np.array([xs[k // len(ys)], ys[k % len(ys)]]) for k in idx]


def grid_search_oracle(p: WlsProblem, bounds, resolution: float, mode: str = RESIDUAL):
    """Exhaustive grid minimizer of the objective.

    Grid nodes are ``xmin + i * resolution`` (and likewise in y) up to the
    upper bound. Ties go to the smallest x, then the smallest y. Returns
    ``(point, objective_value)``.
    """
    if not resolution > 0:
        raise ValueError("resolution must be positive")
    xmin, ymin, xmax, ymax = bounds
    if not (np.isfinite([xmin, ymin, xmax, ymax]).all() and xmin <= xmax and ymin <= ymax):
        raise ValueError("empty or non-finite grid bounds")
    xs = xmin + resolution * np.arange(int(np.floor((xmax - xmin) / resolution + 1e-9)) + 1)
    ys = ymin + resolution * np.arange(int(np.floor((ymax - ymin) / resolution + 1e-9)) + 1)

    best_val, best = np.inf, None
    chunk = max(1, 65_536 // len(ys))
    for start in range(0, len(xs), chunk):
        xc = xs[start:start + chunk]
        total = _grid_values(p, xc, ys, mode)
        k = int(np.argmin(total))
        val = float(total.flat[k])
        if val < best_val:
            best_val = val
            best = np.array([xc[k // len(ys)], ys[k % len(ys)]])
    return best, best_val


def weights_from_probabilities(probabilities, weight_floor: float = 0.05) -> np.ndarray:
    """LOS probability used as weight, floored so no range is ever dropped."""
    return np.maximum(np.asarray(probabilities, dtype=float), weight_floor)


def solve_trajectory(problems: Sequence[Optional[WlsProblem]], start_position,
                     cfg: SolverConfig = SolverConfig()) -> list[PositionEstimate]:
    """Warm-started fixes: each solve starts from the previous estimate.

    A problem with fewer than three ranges (or ``None``) carries the
    previous estimate forward flagged as not converged.
    """
    if len(problems) == 0:
        raise ValueError("empty problem sequence")
    prev = np.asarray(start_position, dtype=float).reshape(2)
    out = []
    for p in problems:
        if p is None or len(p.ranges) < 3:
            est = PositionEstimate(prev.copy(), float("nan") if p is None else 0.0, 0, False)
            if p is not None and len(p.ranges):
                est.cost = objective(prev, p, cfg.weighting_mode)
        else:
            est = solve(replace(p, initial_guess=prev.copy()), cfg)
        out.append(est)
        prev = est.position
    return out
