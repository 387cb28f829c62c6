"""Backward solvers for the penalized equation.

One backward pass per penalty level: regression-based conditional
expectations in the Markov state, jump responses read off the fitted
continuation at shifted states, and an implicit-in-y penalty step that
stays stable for arbitrarily large penalty levels. A fixed-point wrapper
re-runs the pass with the driver's (z, u) arguments frozen at the
previous iterate until the weighted distance between iterates stalls
below tolerance.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from . import norms as _norms
from .model import ProblemSpec
from .simulate import PathBundle

Array = np.ndarray

BISECT_TOL = 1e-12
_AFFINE_RTOL = 1e-8


class RegressionRankError(RuntimeError):
    """Design matrix is rank deficient; a smaller degree will fit."""


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class RegressionBasis:
    """Polynomial-in-state basis with per-slice affine standardization."""

    degree: int
    standardize: bool = True
    kind: str = "polynomial"

    def __post_init__(self) -> None:
        if self.degree < 0:
            raise ValueError("degree must be nonnegative")
        if self.kind != "polynomial":
            raise ValueError(f"unsupported basis kind {self.kind!r}")


@dataclass(frozen=True)
class _FittedPoly:
    """Fitted conditional-expectation function for one time slice."""

    coeffs: Array
    lo: float
    span: float
    degenerate: bool

    def __call__(self, x: Array) -> Array:
        if self.degenerate:
            return np.full(np.shape(x), self.coeffs[0])
        s = (np.asarray(x, dtype=float) - self.lo) / self.span
        out = np.zeros(np.shape(x), dtype=float)
        for c in self.coeffs[::-1]:
            out = out * s + c
        return out


def _fit_slice(states: Array, targets: Array, basis: RegressionBasis) -> _FittedPoly:
    states = np.asarray(states, dtype=float)
    targets = np.asarray(targets, dtype=float)
    n = states.size
    lo, hi = float(np.min(states)), float(np.max(states))
    span = hi - lo
    if span <= 1e-12 * (1.0 + abs(hi)) or basis.degree == 0:
        coeffs = np.zeros(basis.degree + 1)
        coeffs[0] = float(np.mean(targets))
        return _FittedPoly(coeffs=coeffs, lo=lo, span=1.0, degenerate=True)
    cols = basis.degree + 1
    if n < cols:
        raise RegressionRankError(
            f"{n} paths cannot identify a degree-{basis.degree} basis; "
            "reduce the degree"
        )
    if basis.standardize:
        s = (states - lo) / span
    else:
        s, lo, span = states, 0.0, 1.0
    design = np.vander(s, cols, increasing=True)
    coeffs, _, rank, _ = np.linalg.lstsq(design, targets, rcond=None)
    if rank < cols:
        raise RegressionRankError(
            f"design matrix rank {rank} < {cols}; reduce the degree"
        )
    return _FittedPoly(coeffs=coeffs, lo=lo, span=span, degenerate=False)


def condexp_regression(
    targets: Array, states: Array, basis: RegressionBasis
) -> tuple[Array, Array]:
    """Least-squares projection of per-path targets on the state basis.

    Returns (coefficients, fitted values); the fitted values are the basis
    projection of the targets and estimate E[target | state]. A slice
    whose states carry no spread collapses to the constant fit (noise-free
    problems ride this path); genuine rank deficiency on a spread slice
    raises RegressionRankError.
    """
    fit = _fit_slice(states, targets, basis)
    return fit.coeffs, fit(np.asarray(states, dtype=float))


def truncate_qn(x, n: float):
    """Soft clamp x * n / (|x| v n): identity below level n, capped above."""
    if n <= 0.0:
        raise ValueError("truncation level must be positive")
    x = np.asarray(x, dtype=float)
    out = x * n / np.maximum(np.abs(x), n)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class RunRecord:
    """Solver metadata: penalty level, fixed-point iteration count and
    residuals (in iteration order), seed and timing. ``y0_stderr`` is the
    cross-path standard error of the step-0 target mean (the usual
    conditional standard error of a regression Monte Carlo value)."""

    n_penalty: float
    picard_iters: int
    residual_history: tuple[float, ...]
    seed: int
    wall_time: float
    y0_stderr: float = 0.0
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class BackwardSolution:
    """Discrete (Y, Z, U, Gamma, K) on the grid, per path.

    ``k_cum`` accumulates the solver's K increments with k_cum[:, 0] = 0;
    ``k_jump_T`` holds the mass classified as the predictable terminal
    jump (zero for raw penalized output, populated by the reflected
    extraction and by the dynamic-programming oracle).
    """

    y: Array
    z: Array
    u: Array
    gamma: Array
    k_cum: Array
    k_jump_T: Array
    run: RunRecord
    mark_weights: Array = None  # type: ignore[assignment]

    def y0_mean(self) -> float:
        return float(np.mean(self.y[:, 0]))

    def k_T(self) -> Array:
        return self.k_cum[:, -1] + self.k_jump_T


def obstacle_on_grid(spec: ProblemSpec, bundle: PathBundle) -> Array:
    """Obstacle sampled at every (path, node)."""
    X = bundle.forward_states
    nodes = bundle.grid.nodes
    L = np.empty_like(X)
    for i in range(nodes.size):
        L[:, i] = spec.obstacle_values(float(nodes[i]), X[:, i])
    return L


def _solve_implicit_step(
    fy: Callable[[Array], Array],
    c: Array,
    L: Array,
    dt: float,
    n_penalty: float,
    step_index: int,
) -> Array:
    """Root of y = c + dt f(y) + n dt (y - L)^- for every path at once.

    Closed two-branch form when the driver is affine in y on the step
    (probed at three spread points); vectorized bisection with bracket
    expansion otherwise.
    """
    h = 1.0 + np.abs(c)
    f0 = fy(c)
    f1 = fy(c + h)
    f2 = fy(c + 2.6 * h)
    s1 = (f1 - f0) / h
    s2 = (f2 - f1) / (1.6 * h)
    slope_scale = 1.0 + np.abs(s1) + np.abs(s2)
    affine = np.abs(s2 - s1) <= _AFFINE_RTOL * slope_scale

    if np.all(affine):
        b = s1
        f_at_0 = f0 - b * c
        denom_free = 1.0 - b * dt
        denom_pen = denom_free + n_penalty * dt
        bad = (denom_free <= 1e-12) | (denom_pen <= 1e-12)
        if np.any(bad):
            path = int(np.argmax(bad))
            slope = float(np.asarray(b).reshape(-1)[min(path, np.asarray(b).size - 1)])
            raise SolverError(
                f"implicit step unstable at step {step_index}, path {path}: "
                f"driver slope {slope!r} too large for dt={dt!r}"
            )
        y_free = (c + f_at_0 * dt) / denom_free
        y_pen = (c + f_at_0 * dt + n_penalty * dt * L) / denom_pen
        y = np.where(y_free >= L, y_free, y_pen)
        # monotone one-branch consistency; ties land on the obstacle
        return np.where((y_free < L) & (y_pen > L), L, y)

    def g(yv: Array) -> Array:
        return yv - c - dt * fy(yv) - n_penalty * dt * np.maximum(L - yv, 0.0)

    lo = np.minimum(c, L) - 1.0 - dt * np.abs(f0)
    hi = np.maximum(c, L) + 1.0 + dt * np.abs(f0)
    width = hi - lo
    for _ in range(60):
        glo, ghi = g(lo), g(hi)
        bad_lo, bad_hi = glo > 0.0, ghi < 0.0
        if not (bad_lo.any() or bad_hi.any()):
            break
        lo = np.where(bad_lo, lo - width, lo)
        hi = np.where(bad_hi, hi + width, hi)
        width = hi - lo
    else:
        path = int(np.argmax((g(lo) > 0.0) | (g(hi) < 0.0)))
        raise SolverError(
            f"no bracket for the implicit step at step {step_index}, path {path}"
        )
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        take_hi = gm > 0.0
        hi = np.where(take_hi, mid, hi)
        lo = np.where(take_hi, lo, mid)
        if float(np.max(hi - lo)) <= BISECT_TOL * (1.0 + float(np.max(np.abs(mid)))):
            break
    return 0.5 * (lo + hi)


def _check_bundle(spec: ProblemSpec, bundle: PathBundle) -> None:
    if bundle.flagged_paths.size:
        raise SolverError(
            f"bundle contains {bundle.flagged_paths.size} non-finite paths "
            f"(first: {int(bundle.flagged_paths[0])}); regenerate or repair"
        )
    if abs(bundle.grid.horizon - spec.horizon) > 1e-12 * (1.0 + spec.horizon):
        raise SolverError("bundle grid does not match the problem horizon")


def solve_penalized(
    spec: ProblemSpec,
    bundle: PathBundle,
    basis: RegressionBasis,
    n_penalty: float,
    frozen_zu: tuple[Array, Array] | None = None,
    u_estimator: str = "shifted",
) -> BackwardSolution:
    """One backward pass of the penalized scheme at level ``n_penalty``.

    Per step i (backward): fit the continuation of y_{i+1} on X_i; read
    jump responses off the fitted continuation at jump-shifted states;
    regress y_{i+1} dB_i / dt_i for z_i; then solve the implicit scalar
    equation y = c + f(t_i, X_i, y, z, u) dt + n dt (y - L_i)^- per path.
    The driver sees the pass's own (z_i, u_i) unless ``frozen_zu``
    supplies the fields of a previous iterate. The terminal row is exact:
    y_N = terminal(X_N).

    ``u_estimator`` selects how the jump responses are estimated:
    "shifted" (default) evaluates the fitted continuation at jump-shifted
    states; "compensated" regresses y_{i+1} times the compensated count
    increment, a higher-variance route kept for cross-scheme checks.
    """
    if u_estimator not in ("shifted", "compensated"):
        raise ValueError(f"unknown u_estimator {u_estimator!r}")
    _check_bundle(spec, bundle)
    t_start = time.perf_counter()
    grid = bundle.grid
    N = grid.n_steps
    steps = grid.steps
    X = bundle.forward_states
    n_paths = bundle.n_paths
    m = spec.marks.m
    marks = spec.marks.marks_array()
    lam = spec.marks.weights_array()

    if frozen_zu is not None:
        frozen_z, frozen_u = frozen_zu
        if frozen_z.shape != (n_paths, N + 1) or frozen_u.shape != (n_paths, N + 1, m):
            raise ValueError("frozen (z, u) fields do not match the bundle layout")

    y = np.empty((n_paths, N + 1))
    z = np.zeros((n_paths, N + 1))
    u = np.zeros((n_paths, N + 1, m))
    gamma = np.zeros((n_paths, N + 1))
    k_inc = np.zeros((n_paths, N))
    y[:, N] = spec.terminal_values(X[:, N])
    L_nodes = obstacle_on_grid(spec, bundle)
    y0_stderr = 0.0

    for i in range(N - 1, -1, -1):
        t = float(grid.nodes[i])
        dt = float(steps[i])
        xi = X[:, i]
        try:
            fit = _fit_slice(xi, y[:, i + 1], basis)
        except RegressionRankError as exc:
            raise RegressionRankError(f"step {i}: {exc}") from exc
        c = fit(xi)
        if u_estimator == "shifted":
            for j in range(m):
                shifted = xi + np.asarray(
                    spec.forward.jump_size(t, xi, float(marks[j])), dtype=float
                )
                u[:, i, j] = fit(shifted) - c
        else:
            for j in range(m):
                comp = bundle.jump_counts[:, i, j] - lam[j] * dt
                u[:, i, j] = _fit_slice(xi, y[:, i + 1] * comp / (lam[j] * dt), basis)(xi)
        if m:
            gamma[:, i] = u[:, i, :] @ lam
        zfit = _fit_slice(xi, y[:, i + 1] * bundle.brownian_increments[:, i] / dt, basis)
        z[:, i] = zfit(xi)

        zd = frozen_z[:, i] if frozen_zu is not None else z[:, i]
        ud = frozen_u[:, i, :] if frozen_zu is not None else u[:, i, :]

        def fy(yv: Array) -> Array:
            return spec.driver_values(t, xi, yv, zd, ud)

        Li = L_nodes[:, i]
        y[:, i] = _solve_implicit_step(fy, c, Li, dt, n_penalty, i)
        k_inc[:, i] = n_penalty * dt * np.maximum(Li - y[:, i], 0.0)
        if i == 0:
            targets = y[:, 1] + dt * fy(y[:, 0]) + k_inc[:, 0]
            y0_stderr = float(np.std(targets, ddof=1) / np.sqrt(n_paths)) if n_paths > 1 else 0.0

    k_cum = np.zeros((n_paths, N + 1))
    k_cum[:, 1:] = np.cumsum(k_inc, axis=1)
    run = RunRecord(
        n_penalty=float(n_penalty),
        picard_iters=0,
        residual_history=(),
        seed=bundle.seed,
        wall_time=time.perf_counter() - t_start,
        y0_stderr=y0_stderr,
    )
    return BackwardSolution(
        y=y, z=z, u=u, gamma=gamma,
        k_cum=k_cum, k_jump_T=np.zeros(n_paths),
        run=run, mark_weights=lam,
    )


def picard_solve(
    spec: ProblemSpec,
    bundle: PathBundle,
    basis: RegressionBasis,
    n_penalty: float,
    tol: float = 1e-6,
    max_iter: int = 25,
) -> BackwardSolution:
    """Fixed-point iteration on the driver's (z, u) arguments.

    Starting from zero (z, u) fields, each iterate re-solves the penalized
    pass with the driver frozen at the previous iterate's fields; the
    one-pass solution is the exact fixed point of this map, so the
    residuals (weighted distances between successive iterates: y in the
    dA-norm, z and u in their energy norms) measure convergence towards
    it. A driver that ignores (z, u) is detected up front and returns the
    single pass with residual history (0.0,). Three consecutive
    non-decreasing residuals raise a non-contraction warning into the run
    record.
    """
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    from .model import driver_uses_zu

    t_start = time.perf_counter()
    if not driver_uses_zu(spec):
        sol = solve_penalized(spec, bundle, basis, n_penalty)
        run = replace(
            sol.run,
            picard_iters=1,
            residual_history=(0.0,),
            wall_time=time.perf_counter() - t_start,
        )
        return replace(sol, run=run)

    N = bundle.grid.n_steps
    m = spec.marks.m
    prev_y = np.zeros((bundle.n_paths, N + 1))
    prev_z = np.zeros((bundle.n_paths, N + 1))
    prev_u = np.zeros((bundle.n_paths, N + 1, m))
    residuals: list[float] = []
    warnings_: list[str] = []
    sol: BackwardSolution | None = None
    iters = 0
    for k in range(1, max_iter + 1):
        sol = solve_penalized(spec, bundle, basis, n_penalty, frozen_zu=(prev_z, prev_u))
        d = _norms.weighted_distance(
            sol.y - prev_y, sol.z - prev_z, sol.u - prev_u,
            bundle, spec.exponents, spec.marks.weights_array(),
        )
        residuals.append(d)
        iters = k
        prev_y, prev_z, prev_u = sol.y, sol.z, sol.u
        if len(residuals) >= 4 and all(
            residuals[-j] >= residuals[-j - 1] for j in (1, 2, 3)
        ):
            warnings_.append(
                f"non-contraction: residuals failed to decrease for 3 "
                f"consecutive iterations at beta={spec.exponents.beta!r}"
            )
            break
        if d < tol:
            break
    else:
        warnings_.append(f"picard iteration hit max_iter={max_iter} above tol")
    assert sol is not None
    run = replace(
        sol.run,
        picard_iters=iters,
        residual_history=tuple(residuals),
        wall_time=time.perf_counter() - t_start,
        warnings=tuple(warnings_),
    )
    return replace(sol, run=run)
