"""Problem data for one-dimensional reflected backward SDEs with jumps.

Exponent bookkeeping, coefficient processes with the aggregate rate
a^2 = phi + eta^2 + delta^2 and its companion zeta^2 = (a^2)^{q/2},
finite mark-space jump measures, Markovian forward carriers, sampled
assumption probes, and the exponential change of variables that
normalizes the monotonicity rate of the driver.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

Array = np.ndarray

# Relative tolerance used by obstacle/terminal equality indicators.
EQUALITY_RTOL = 1e-8


class AssumptionError(ValueError):
    """A structural assumption on the problem data is violated."""


def default_beta(p: float) -> float:
    """Weight exponent used when none is given: the stability threshold
    2(p-1)/p plus one, plus a unit safety margin."""
    return 1.0 + 2.0 * (p - 1.0) / p + 1.0


def conjugate_exponent(p: float) -> float:
    """Return q with 1/p + 1/q = 1 for p strictly inside (1, 2)."""
    if not (1.0 < p < 2.0):
        raise ValueError(f"p must lie in the open interval (1, 2), got {p!r}")
    return p / (p - 1.0)


@dataclass(frozen=True)
class Exponents:
    """Integrability/weight exponents of one problem instance.

    p drives the solution norms, q is its conjugate, beta weights the
    exponential factors e^{beta A_t}, eps is the uniform lower bound on
    a^2, and cp = p(p-1)/2 is the curvature constant of |x|^p.
    """

    p: float
    q: float
    beta: float
    eps: float
    cp: float

    def __post_init__(self) -> None:
        if not (1.0 < self.p < 2.0):
            raise ValueError(f"p must lie in (1, 2), got {self.p!r}")
        if abs(1.0 / self.p + 1.0 / self.q - 1.0) > 1e-12:
            raise ValueError(f"q={self.q!r} is not conjugate to p={self.p!r}")
        if self.beta < 0.0:
            raise ValueError("beta must be nonnegative")
        if self.eps <= 0.0:
            raise ValueError("eps must be positive")
        if self.cp != self.p * (self.p - 1.0) / 2.0:
            raise ValueError("cp must equal p(p-1)/2 exactly as computed from p")

    @classmethod
    def from_p(cls, p: float, beta: float | None = None, eps: float = 0.01) -> "Exponents":
        q = conjugate_exponent(p)
        if beta is None:
            beta = default_beta(p)
        return cls(p=p, q=q, beta=beta, eps=eps, cp=p * (p - 1.0) / 2.0)

    def with_beta(self, beta: float) -> "Exponents":
        return replace(self, beta=beta)


# Coefficient functions map (t, state) -> scalar or array broadcastable
# against the state, so "stochastic" rates enter through the forward state.
CoeffFn = Callable[[float, Array], object]


def _eval(fn: CoeffFn, t: float, x: Array) -> Array:
    v = np.asarray(fn(t, x), dtype=float)
    if v.shape != np.shape(x):
        v = np.broadcast_to(v, np.shape(x)).copy()
    return v


@dataclass(frozen=True)
class CoefficientSpec:
    """Rate processes of the driver, evaluated at (time, forward state).

    alpha    monotonicity rate in y (may be negative), 1/time
    eta      Lipschitz rate in z, nonnegative
    delta    Lipschitz rate in the jump argument, nonnegative
    phi      growth slope in |y|, strictly positive; enters a^2
    varphi   inhomogeneity level (>= 1); enters the data norms only
    """

    alpha: CoeffFn
    eta: CoeffFn
    delta: CoeffFn
    phi: CoeffFn
    varphi: CoeffFn

    def rates(self, t: float, x: Array) -> dict[str, Array]:
        x = np.asarray(x, dtype=float)
        return {
            "alpha": _eval(self.alpha, t, x),
            "eta": _eval(self.eta, t, x),
            "delta": _eval(self.delta, t, x),
            "phi": _eval(self.phi, t, x),
            "varphi": _eval(self.varphi, t, x),
        }


def aggregate_coefficients(
    coeffs: CoefficientSpec, exponents: Exponents, t: float, state: Array
) -> tuple[Array, Array]:
    """Aggregate rate a^2 = phi + eta^2 + delta^2 and zeta^2 = (a^2)^{q/2}.

    Raises AssumptionError as soon as a^2 drops below exponents.eps
    anywhere in the sampled batch.
    """
    r = coeffs.rates(t, np.asarray(state, dtype=float))
    a2 = r["phi"] + r["eta"] ** 2 + r["delta"] ** 2
    lo = float(np.min(a2)) if a2.size else float("inf")
    if a2.size and lo < exponents.eps:
        raise AssumptionError(
            f"a^2 >= eps violated at t={t!r}: min a^2 = {lo!r} < eps = {exponents.eps!r}"
        )
    zeta2 = a2 ** (exponents.q / 2.0)
    return a2, zeta2


def cumulative_A(grid: "TimeGrid | Array", zeta2_steps: Array) -> Array:
    """Left-endpoint accumulation A_{i+1} = A_i + zeta^2(t_i) * dt_i.

    ``zeta2_steps`` holds one value per step, shape (N,) or (n_paths, N).
    Returns an array with one extra node, starting at 0 and nondecreasing.
    """
    nodes = np.asarray(getattr(grid, "nodes", grid), dtype=float)
    if nodes.ndim != 1 or nodes.size < 2:
        raise ValueError("grid must provide at least two nodes")
    if np.any(np.diff(nodes) <= 0):
        raise ValueError("grid nodes must be strictly increasing")
    if nodes[0] != 0.0:
        raise ValueError("grid must start at 0")
    steps = np.diff(nodes)
    z = np.asarray(zeta2_steps, dtype=float)
    if z.shape[-1] != steps.size:
        raise ValueError(
            f"expected {steps.size} per-step zeta^2 values, got shape {z.shape}"
        )
    if np.any(z <= 0.0):
        raise AssumptionError("zeta^2 must stay strictly positive (a^2 >= eps > 0)")
    inc = z * steps
    out_shape = z.shape[:-1] + (steps.size + 1,)
    A = np.zeros(out_shape, dtype=float)
    A[..., 1:] = np.cumsum(inc, axis=-1)
    return A


@dataclass(frozen=True)
class MarkSpace:
    """Finite jump-mark measure: point masses weights[j] at marks[j]."""

    marks: tuple[float, ...]
    weights: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.marks) != len(self.weights):
            raise ValueError("marks and weights must have equal length")
        if any(w <= 0.0 for w in self.weights):
            raise ValueError("all mark weights must be strictly positive")
        if not math.isfinite(self.total_intensity):
            raise ValueError("total jump intensity must be finite")
        # finite-activity sanity: sum_j w_j * min(1, e_j^2) < inf
        if not math.isfinite(
            sum(w * min(1.0, e * e) for w, e in zip(self.weights, self.marks))
        ):
            raise ValueError("mark measure fails the (1 ^ |e|^2) integrability check")

    @property
    def m(self) -> int:
        return len(self.marks)

    @property
    def total_intensity(self) -> float:
        return float(sum(self.weights))

    def weights_array(self) -> Array:
        return np.asarray(self.weights, dtype=float)

    def marks_array(self) -> Array:
        return np.asarray(self.marks, dtype=float)

    def norm_lambda(self, u: Array) -> Array:
        """Weighted l2 norm sqrt(sum_j w_j u_j^2) along the last axis."""
        u = np.asarray(u, dtype=float)
        if self.m == 0:
            return np.zeros(u.shape[:-1], dtype=float)
        return np.sqrt(np.sum(self.weights_array() * u * u, axis=-1))

    @classmethod
    def empty(cls) -> "MarkSpace":
        return cls(marks=(), weights=())


@dataclass(frozen=True)
class ForwardModel:
    """Markovian carrier X for terminal payoff, obstacle and coefficients."""

    x0: float
    drift: Callable[[float, Array], object]
    vol: Callable[[float, Array], object]
    jump_size: Callable[[float, Array, float], object]


# driver(t, state, y, z, u) with u the vector of jump responses at the
# marks, shape (..., m); must broadcast over a batch of paths.
DriverFn = Callable[[float, Array, Array, Array, Array], object]


@dataclass(frozen=True)
class ProblemSpec:
    """One complete problem instance.

    ``obstacle(t, x)`` is sampled at grid nodes (right-continuous
    convention); ``obstacle_left_limit_T(x)`` supplies the left limit of
    the barrier at the horizon, which a discrete grid cannot infer.
    """

    exponents: Exponents
    coeffs: CoefficientSpec
    marks: MarkSpace
    forward: ForwardModel
    driver: DriverFn
    terminal: Callable[[Array], object]
    obstacle: Callable[[float, Array], object]
    obstacle_left_limit_T: Callable[[Array], object]
    horizon: float

    def __post_init__(self) -> None:
        if not (self.horizon > 0.0):
            raise ValueError("horizon must be positive")

    def terminal_values(self, x: Array) -> Array:
        return np.asarray(self.terminal(np.asarray(x, dtype=float)), dtype=float)

    def obstacle_values(self, t: float, x: Array) -> Array:
        v = np.asarray(self.obstacle(t, np.asarray(x, dtype=float)), dtype=float)
        return np.broadcast_to(v, np.shape(x)).copy() if v.shape != np.shape(x) else v

    def obstacle_left_limit(self, x: Array) -> Array:
        v = np.asarray(self.obstacle_left_limit_T(np.asarray(x, dtype=float)), dtype=float)
        return np.broadcast_to(v, np.shape(x)).copy() if v.shape != np.shape(x) else v

    def driver_values(self, t: float, x: Array, y: Array, z: Array, u: Array) -> Array:
        v = np.asarray(self.driver(t, x, y, z, u), dtype=float)
        return np.broadcast_to(v, np.shape(y)).copy() if v.shape != np.shape(y) else v


def driver_uses_zu(spec: ProblemSpec, n_probe: int = 8, seed: int = 0) -> bool:
    """Probe whether the driver reacts to its (z, u) arguments."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x2D]))
    x0 = spec.forward.x0
    x = x0 + (1.0 + abs(x0)) * rng.standard_normal(n_probe)
    y = rng.standard_normal(n_probe)
    m = spec.marks.m
    t = 0.5 * spec.horizon
    base = spec.driver_values(t, x, y, np.zeros(n_probe), np.zeros((n_probe, m)))
    bumped_z = spec.driver_values(t, x, y, np.ones(n_probe), np.zeros((n_probe, m)))
    if np.max(np.abs(bumped_z - base)) > 1e-12 * (1.0 + np.max(np.abs(base))):
        return True
    for j in range(m):
        u = np.zeros((n_probe, m))
        u[:, j] = 1.0
        bumped_u = spec.driver_values(t, x, y, np.zeros(n_probe), u)
        if np.max(np.abs(bumped_u - base)) > 1e-12 * (1.0 + np.max(np.abs(base))):
            return True
    return False


# ---------------------------------------------------------------------------
# assumption probes


@dataclass(frozen=True)
class AssumptionCheck:
    name: str
    passed: bool
    worst_margin: float
    witness: tuple | None = None
    detail: str = ""


@dataclass(frozen=True)
class AssumptionReport:
    checks: tuple[AssumptionCheck, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __str__(self) -> str:
        lines = []
        for c in self.checks:
            status = "pass" if c.passed else "FAIL"
            line = f"{status:4s}  {c.name:24s} worst_margin={c.worst_margin:.3e}"
            if not c.passed and c.witness is not None:
                line += f"  witness={c.witness}"
            lines.append(line)
        return "\n".join(lines)

    def check(self, name: str) -> AssumptionCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def validate_assumptions(
    spec: ProblemSpec, probe_budget: int = 256, seed: int = 0
) -> AssumptionReport:
    """Sampled diagnostics for the structural assumptions on (terminal,
    driver, obstacle).

    Draws ``probe_budget`` tuples (t, x, y, y', z, z', u, u') and reports
    the worst violation margin per assumption; a positive margin beyond
    the numerical allowance fails the check and carries a witness tuple.
    Deterministic for a fixed seed.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xA5]))
    n = int(probe_budget)
    if n < 8:
        raise ValueError("probe_budget must be at least 8")
    T = spec.horizon
    m = spec.marks.m
    x0 = spec.forward.x0
    scale = 1.0 + abs(x0)

    t_s = rng.uniform(0.0, T, n)
    x_s = x0 + scale * rng.standard_normal(n)
    y_s = 3.0 * rng.standard_normal(n)
    y2_s = 3.0 * rng.standard_normal(n)
    z_s = 2.0 * rng.standard_normal(n)
    z2_s = 2.0 * rng.standard_normal(n)
    u_s = 1.5 * rng.standard_normal((n, m))
    u2_s = 1.5 * rng.standard_normal((n, m))

    checks: list[AssumptionCheck] = []

    def run_rows(fn):
        # coefficient rates vary with t, so probe row by row
        vals = np.empty(n)
        for i in range(n):
            vals[i] = fn(i)
        return vals

    tol = 1e-9

    # monotonicity in y: (y - y') (f(y) - f(y')) <= alpha |y - y'|^2
    def mono_margin(i):
        t, x = float(t_s[i]), x_s[i : i + 1]
        fy = spec.driver_values(t, x, y_s[i : i + 1], z_s[i : i + 1], u_s[i : i + 1])
        fy2 = spec.driver_values(t, x, y2_s[i : i + 1], z_s[i : i + 1], u_s[i : i + 1])
        dy = y_s[i] - y2_s[i]
        if abs(dy) < 1e-12:
            return -np.inf
        alpha = float(_eval(spec.coeffs.alpha, t, x)[0])
        return float(dy * (fy[0] - fy2[0]) - alpha * dy * dy) / (dy * dy)

    margins = run_rows(mono_margin)
    worst = int(np.argmax(margins))
    passed = margins[worst] <= tol
    checks.append(
        AssumptionCheck(
            "monotonicity_y",
            bool(passed),
            float(margins[worst]),
            None
            if passed
            else (float(t_s[worst]), float(x_s[worst]), float(y_s[worst]), float(y2_s[worst])),
        )
    )

    # Lipschitz in (z, u): |f(z,u) - f(z',u')| <= eta |z-z'| + delta ||u-u'||
    def lip_margin(i):
        t, x = float(t_s[i]), x_s[i : i + 1]
        f1 = spec.driver_values(t, x, y_s[i : i + 1], z_s[i : i + 1], u_s[i : i + 1])
        f2 = spec.driver_values(t, x, y_s[i : i + 1], z2_s[i : i + 1], u2_s[i : i + 1])
        eta = float(_eval(spec.coeffs.eta, t, x)[0])
        delta = float(_eval(spec.coeffs.delta, t, x)[0])
        bound = eta * abs(z_s[i] - z2_s[i]) + delta * float(
            spec.marks.norm_lambda(u_s[i] - u2_s[i])
        )
        return float(abs(f1[0] - f2[0]) - bound)

    margins = run_rows(lip_margin)
    worst = int(np.argmax(margins))
    passed = margins[worst] <= tol
    checks.append(
        AssumptionCheck(
            "lipschitz_zu",
            bool(passed),
            float(margins[worst]),
            None
            if passed
            else (float(t_s[worst]), float(x_s[worst]), float(z_s[worst]), float(z2_s[worst])),
        )
    )

    # growth: |f(t, y, 0, 0)| <= varphi + phi |y|, with varphi >= 1
    def growth_margin(i):
        t, x = float(t_s[i]), x_s[i : i + 1]
        f0 = spec.driver_values(t, x, y_s[i : i + 1], np.zeros(1), np.zeros((1, m)))
        r = spec.coeffs.rates(t, x)
        return float(abs(f0[0]) - (r["varphi"][0] + r["phi"][0] * abs(y_s[i])))

    margins = run_rows(growth_margin)
    worst = int(np.argmax(margins))
    varphi_min = min(
        float(np.min(spec.coeffs.rates(float(t), x_s)["varphi"])) for t in t_s[:8]
    )
    passed = margins[worst] <= tol and varphi_min >= 1.0 - 1e-12
    checks.append(
        AssumptionCheck(
            "growth",
            bool(passed),
            float(max(margins[worst], 1.0 - varphi_min)),
            None if passed else (float(t_s[worst]), float(x_s[worst]), float(y_s[worst])),
            detail="includes varphi >= 1",
        )
    )

    # aggregate rate floor: a^2 >= eps everywhere sampled
    def a2_margin(i):
        t, x = float(t_s[i]), x_s[i : i + 1]
        r = spec.coeffs.rates(t, x)
        a2 = float(r["phi"][0] + r["eta"][0] ** 2 + r["delta"][0] ** 2)
        return spec.exponents.eps - a2

    margins = run_rows(a2_margin)
    worst = int(np.argmax(margins))
    passed = margins[worst] <= tol
    checks.append(
        AssumptionCheck(
            "rate_floor",
            bool(passed),
            float(margins[worst]),
            None if passed else (float(t_s[worst]), float(x_s[worst])),
        )
    )

    # driver continuity in y, finite-difference probe
    def cont_margin(i):
        t, x = float(t_s[i]), x_s[i : i + 1]
        f0 = spec.driver_values(t, x, y_s[i : i + 1], z_s[i : i + 1], u_s[i : i + 1])
        f1 = spec.driver_values(
            t, x, y_s[i : i + 1] + 1e-7, z_s[i : i + 1], u_s[i : i + 1]
        )
        return float(abs(f1[0] - f0[0]) - 1e-3 * (1.0 + abs(f0[0])))

    margins = run_rows(cont_margin)
    worst = int(np.argmax(margins))
    passed = margins[worst] <= 0.0
    checks.append(
        AssumptionCheck(
            "y_continuity_probe",
            bool(passed),
            float(margins[worst]),
            None if passed else (float(t_s[worst]), float(x_s[worst]), float(y_s[worst])),
        )
    )

    # barrier consistency at the horizon: obstacle(T, x) <= terminal(x)
    xi = spec.terminal_values(x_s)
    LT = spec.obstacle_values(T, x_s)
    margins = LT - xi
    worst = int(np.argmax(margins))
    passed = margins[worst] <= tol * (1.0 + float(np.max(np.abs(xi))))
    checks.append(
        AssumptionCheck(
            "obstacle_below_terminal",
            bool(passed),
            float(margins[worst]),
            None if passed else (float(x_s[worst]), float(LT[worst]), float(xi[worst])),
        )
    )

    return AssumptionReport(checks=tuple(checks))


# ---------------------------------------------------------------------------
# monotonicity-normalizing change of variables


@dataclass(frozen=True)
class DriverNormalization:
    """Bookkeeping for the exponential change of variables Y -> e^{R} Y.

    ``log_factor(t)`` returns R(t) = int_0^t (alpha_s + eps_knob a_s^2) ds,
    computed on a dense quadrature grid. ``map_back_solution`` undoes the
    transform on a solved grid solution.
    """

    eps_knob: float
    horizon: float
    _dense_nodes: Array
    _dense_R: Array

    def log_factor(self, t: Array | float) -> Array:
        return np.interp(np.asarray(t, dtype=float), self._dense_nodes, self._dense_R)

    def factors(self, t: Array | float) -> Array:
        return np.exp(self.log_factor(t))

    def map_back_solution(self, sol, grid):
        """Undo the transform on a BackwardSolution computed on ``grid``."""
        from .backward import BackwardSolution  # local import avoids a cycle

        g = np.exp(-self.log_factor(grid.nodes))  # e^{-R(t_i)}
        k_inc = np.diff(sol.k_cum, axis=1) * g[:-1]
        k_cum = np.zeros_like(sol.k_cum)
        k_cum[:, 1:] = np.cumsum(k_inc, axis=1)
        return BackwardSolution(
            y=sol.y * g,
            z=sol.z * g,
            u=sol.u * g[None, :, None],
            gamma=sol.gamma * g,
            k_cum=k_cum,
            k_jump_T=sol.k_jump_T * g[-1],
            run=sol.run,
        )


def normalize_driver(
    spec: ProblemSpec, eps_knob: float = 0.0, quad_steps: int = 4096
) -> tuple[ProblemSpec, DriverNormalization]:
    """Exponential change of variables taking the monotonicity rate of the
    driver to -eps_knob * a^2 (to 0 for the default eps_knob = 0).

    Only state-independent rate processes are supported: a state-dependent
    rate would make the accumulated factor an extra non-Markov state.
    Warns when the driver is already normalized; the transform still
    applies (and reduces to the identity when the rate integrates to 0).
    """
    if eps_knob < 0.0:
        raise ValueError("eps_knob must be nonnegative")
    T = spec.horizon
    x0 = spec.forward.x0
    probe_x = np.array([x0 - 1.0 - abs(x0), x0, x0 + 1.0 + abs(x0)])
    tq = np.linspace(0.0, T, quad_steps + 1)

    def rate_at(t: float) -> float:
        r = spec.coeffs.rates(t, probe_x)
        a2 = r["phi"] + r["eta"] ** 2 + r["delta"] ** 2
        vals = r["alpha"] + eps_knob * a2
        if np.max(vals) - np.min(vals) > 1e-10 * (1.0 + float(np.max(np.abs(vals)))):
            raise ValueError(
                "normalize_driver requires state-independent rate processes; "
                f"alpha + eps*a^2 varies across states at t={t!r}"
            )
        return float(vals[0])

    rdot = np.array([rate_at(float(t)) for t in tq[:-1]])
    if np.all(rdot <= 1e-12):
        warnings.warn(
            "driver already satisfies alpha + eps*a^2 <= 0; transform is "
            "a no-op up to the accumulated factor",
            stacklevel=2,
        )
    dense_R = np.zeros(quad_steps + 1)
    dense_R[1:] = np.cumsum(rdot * np.diff(tq))
    norm = DriverNormalization(
        eps_knob=eps_knob, horizon=T, _dense_nodes=tq, _dense_R=dense_R
    )

    base_driver = spec.driver
    base_terminal = spec.terminal
    base_obstacle = spec.obstacle
    base_left = spec.obstacle_left_limit_T
    coeffs = spec.coeffs
    eT = float(np.exp(dense_R[-1]))

    def rate_fn(t: float) -> float:
        return float(np.interp(t, tq[:-1], rdot))

    def new_driver(t, x, y, z, u):
        g = float(np.exp(norm.log_factor(t)))
        f = np.asarray(base_driver(t, x, np.asarray(y) / g, np.asarray(z) / g, np.asarray(u) / g))
        return g * f - rate_fn(t) * np.asarray(y)

    def new_terminal(x):
        return eT * np.asarray(base_terminal(x), dtype=float)

    def new_obstacle(t, x):
        return float(np.exp(norm.log_factor(t))) * np.asarray(base_obstacle(t, x), dtype=float)

    def new_left(x):
        return eT * np.asarray(base_left(x), dtype=float)

    def new_alpha(t, x):
        r = coeffs.rates(t, np.atleast_1d(np.asarray(x, dtype=float)))
        a2 = r["phi"] + r["eta"] ** 2 + r["delta"] ** 2
        out = -eps_knob * a2
        return out if np.ndim(x) else float(out[0])

    def new_varphi(t, x):
        g = float(np.exp(norm.log_factor(t)))
        return g * _eval(coeffs.varphi, t, np.atleast_1d(np.asarray(x, dtype=float)))

    new_coeffs = replace(coeffs, alpha=new_alpha, varphi=new_varphi)
    new_spec = replace(
        spec,
        coeffs=new_coeffs,
        driver=new_driver,
        terminal=new_terminal,
        obstacle=new_obstacle,
        obstacle_left_limit_T=new_left,
    )
    return new_spec, norm
