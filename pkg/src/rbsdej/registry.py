"""Named built-in problems: payoffs, obstacles and drivers wired into
complete instances with numeric parameters. The config file selects from
this registry; custom problems are added in code.
"""
from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .model import (
    CoefficientSpec,
    Exponents,
    ForwardModel,
    MarkSpace,
    ProblemSpec,
)

NEVER_BINDING = -1.0e9


def _const(v: float):
    return lambda t, x: np.full(np.shape(x), v) if np.ndim(x) else v


def _coeffs(alpha=0.0, eta=0.0, delta=0.0, phi=0.05, varphi=1.0) -> CoefficientSpec:
    return CoefficientSpec(
        alpha=_const(alpha), eta=_const(eta), delta=_const(delta),
        phi=_const(phi), varphi=_const(varphi),
    )


def _never_binding_obstacle():
    def obstacle(t, x):
        return np.full(np.shape(x), NEVER_BINDING) if np.ndim(x) else NEVER_BINDING

    return obstacle, (lambda x: obstacle(0.0, x))


def flat_obstacle(
    T: float = 1.0,
    level: float = 1.0,
    p: float = 1.5,
    beta: float | None = None,
    eps: float = 0.5,
) -> ProblemSpec:
    """Zero payoff, zero driver, obstacle pinned at ``level`` until just
    before the horizon. The reflected solution is the constant ``level``
    with a predictable unit jump of K at T; the penalized value at level
    n is 1 - e^{-n (T - t)} (for level = 1), which makes the whole
    penalization pipeline checkable in closed form."""
    T_cut = T * (1.0 - 1e-12)

    def obstacle(t, x):
        v = level if t < T_cut else 0.0
        return np.full(np.shape(x), v) if np.ndim(x) else v

    return ProblemSpec(
        exponents=Exponents.from_p(p, beta=beta, eps=eps),
        coeffs=_coeffs(phi=1.0),
        marks=MarkSpace.empty(),
        forward=ForwardModel(x0=0.0, drift=_const(0.0), vol=_const(0.0),
                             jump_size=lambda t, x, e: np.zeros(np.shape(x))),
        driver=lambda t, x, y, z, u: np.zeros(np.shape(y)),
        terminal=lambda x: np.zeros(np.shape(x)),
        obstacle=obstacle,
        obstacle_left_limit_T=lambda x: np.full(np.shape(x), level) if np.ndim(x) else level,
        horizon=T,
    )


def american_put(
    T: float = 1.0,
    x0: float = 1.0,
    kappa: float = 1.1,
    mu: float = 0.08,
    sigma: float = 0.25,
    rate: float = 0.0,
    p: float = 1.5,
    beta: float | None = None,
    eps: float = 0.01,
    jump_sizes: tuple[float, ...] = (),
    jump_weights: tuple[float, ...] = (),
) -> ProblemSpec:
    """Early-exercise put on a geometric-Brownian forward, obstacle equal
    to the payoff at every time. ``rate`` > 0 adds the discounting driver
    f = -rate * y; relative jumps of the forward arrive with the given
    sizes and intensities."""
    if len(jump_sizes) != len(jump_weights):
        raise ValueError("jump_sizes and jump_weights must pair up")

    def payoff(x):
        return np.maximum(kappa - np.asarray(x, dtype=float), 0.0)

    marks = MarkSpace(marks=tuple(jump_sizes), weights=tuple(jump_weights))
    phi = max(0.05, rate)
    return ProblemSpec(
        exponents=Exponents.from_p(p, beta=beta, eps=eps),
        coeffs=_coeffs(alpha=-rate, phi=phi),
        marks=marks,
        forward=ForwardModel(
            x0=x0,
            drift=lambda t, x: mu * np.asarray(x, dtype=float),
            vol=lambda t, x: sigma * np.asarray(x, dtype=float),
            jump_size=lambda t, x, e: e * np.asarray(x, dtype=float),
        ),
        driver=lambda t, x, y, z, u: -rate * np.asarray(y, dtype=float),
        terminal=payoff,
        obstacle=lambda t, x: payoff(x),
        obstacle_left_limit_T=payoff,
        horizon=T,
    )


def brownian_terminal(
    T: float = 1.0,
    x0: float = 0.0,
    p: float = 1.5,
    beta: float | None = None,
    eps: float = 0.01,
) -> ProblemSpec:
    """Terminal payoff X_T on a standard Brownian forward, zero driver,
    obstacle far below: the solution is the martingale E[X_T | F_t]."""
    obstacle, left = _never_binding_obstacle()
    return ProblemSpec(
        exponents=Exponents.from_p(p, beta=beta, eps=eps),
        coeffs=_coeffs(phi=0.05),
        marks=MarkSpace.empty(),
        forward=ForwardModel(x0=x0, drift=_const(0.0), vol=_const(1.0),
                             jump_size=lambda t, x, e: np.zeros(np.shape(x))),
        driver=lambda t, x, y, z, u: np.zeros(np.shape(y)),
        terminal=lambda x: np.asarray(x, dtype=float),
        obstacle=obstacle,
        obstacle_left_limit_T=left,
        horizon=T,
    )


def linear_y(
    T: float = 1.0,
    xi: float = 1.0,
    p: float = 1.5,
    beta: float | None = None,
    eps: float = 0.5,
) -> ProblemSpec:
    """f = -y with constant terminal value: Y_t = xi * e^{-(T - t)}."""
    obstacle, left = _never_binding_obstacle()
    return ProblemSpec(
        exponents=Exponents.from_p(p, beta=beta, eps=eps),
        coeffs=_coeffs(alpha=-1.0, phi=1.0),
        marks=MarkSpace.empty(),
        forward=ForwardModel(x0=0.0, drift=_const(0.0), vol=_const(0.0),
                             jump_size=lambda t, x, e: np.zeros(np.shape(x))),
        driver=lambda t, x, y, z, u: -np.asarray(y, dtype=float),
        terminal=lambda x: np.full(np.shape(x), xi) if np.ndim(x) else xi,
        obstacle=obstacle,
        obstacle_left_limit_T=left,
        horizon=T,
    )


def linear_z(
    T: float = 1.0,
    coef: float = 0.2,
    x0: float = 0.0,
    p: float = 1.5,
    beta: float | None = None,
    eps: float = 0.01,
) -> ProblemSpec:
    """f = coef * z on a Brownian forward with terminal X_T; exercises the
    fixed-point iteration in the z argument."""
    obstacle, left = _never_binding_obstacle()
    return ProblemSpec(
        exponents=Exponents.from_p(p, beta=beta, eps=eps),
        coeffs=_coeffs(eta=abs(coef), phi=0.05),
        marks=MarkSpace.empty(),
        forward=ForwardModel(x0=x0, drift=_const(0.0), vol=_const(1.0),
                             jump_size=lambda t, x, e: np.zeros(np.shape(x))),
        driver=lambda t, x, y, z, u: coef * np.asarray(z, dtype=float),
        terminal=lambda x: np.asarray(x, dtype=float),
        obstacle=obstacle,
        obstacle_left_limit_T=left,
        horizon=T,
    )


def linear_gamma(
    T: float = 1.0,
    coef: float = 0.2,
    x0: float = 0.0,
    jump_sizes: tuple[float, ...] = (-0.1, 0.1),
    jump_weights: tuple[float, ...] = (0.5, 0.5),
    p: float = 1.5,
    beta: float | None = None,
    eps: float = 0.01,
) -> ProblemSpec:
    """f = coef * sum_j w_j u_j (the compensated-jump aggregate) on a
    Brownian-plus-jumps forward; exercises the fixed point in u."""
    marks = MarkSpace(marks=tuple(jump_sizes), weights=tuple(jump_weights))
    w = marks.weights_array()
    delta = abs(coef) * math.sqrt(marks.total_intensity)
    obstacle, left = _never_binding_obstacle()

    def driver(t, x, y, z, u):
        u = np.asarray(u, dtype=float)
        return coef * (u @ w)

    return ProblemSpec(
        exponents=Exponents.from_p(p, beta=beta, eps=eps),
        coeffs=_coeffs(delta=delta, phi=0.05),
        marks=marks,
        forward=ForwardModel(
            x0=x0, drift=_const(0.0), vol=_const(1.0),
            jump_size=lambda t, x, e: np.full(np.shape(x), e) if np.ndim(x) else e,
        ),
        driver=driver,
        terminal=lambda x: np.asarray(x, dtype=float),
        obstacle=obstacle,
        obstacle_left_limit_T=left,
        horizon=T,
    )


def pure_jump_counter(
    T: float = 1.0,
    intensity: float = 2.0,
    jump: float = 1.0,
    p: float = 1.5,
    beta: float | None = None,
    eps: float = 0.01,
) -> ProblemSpec:
    """Forward that only counts jumps (drift 0, vol 0, unit jumps):
    useful for moment checks of the simulator."""
    obstacle, left = _never_binding_obstacle()
    return ProblemSpec(
        exponents=Exponents.from_p(p, beta=beta, eps=eps),
        coeffs=_coeffs(phi=0.05),
        marks=MarkSpace(marks=(jump,), weights=(intensity,)),
        forward=ForwardModel(
            x0=0.0, drift=_const(0.0), vol=_const(0.0),
            jump_size=lambda t, x, e: np.full(np.shape(x), e) if np.ndim(x) else e,
        ),
        driver=lambda t, x, y, z, u: np.zeros(np.shape(y)),
        terminal=lambda x: np.asarray(x, dtype=float),
        obstacle=obstacle,
        obstacle_left_limit_T=left,
        horizon=T,
    )


def american_put_jumps(
    jump_size: float = 0.1, total_intensity: float = 1.0, **kwargs
) -> ProblemSpec:
    """American put variant with symmetric two-sided relative jumps of the
    forward (sizes +-jump_size, intensity split evenly)."""
    if not (0.0 < jump_size < 1.0):
        raise ValueError("jump_size must lie in (0, 1)")
    if total_intensity <= 0.0:
        raise ValueError("total_intensity must be positive")
    kwargs["jump_sizes"] = (-jump_size, jump_size)
    kwargs["jump_weights"] = (0.5 * total_intensity, 0.5 * total_intensity)
    return american_put(**kwargs)


PROBLEMS: dict[str, Callable[..., ProblemSpec]] = {
    "flat_obstacle": flat_obstacle,
    "american_put": american_put,
    "american_put_jumps": american_put_jumps,
    "brownian_terminal": brownian_terminal,
    "linear_y": linear_y,
    "linear_z": linear_z,
    "linear_gamma": linear_gamma,
    "pure_jump_counter": pure_jump_counter,
}


def build_problem(name: str, **params) -> ProblemSpec:
    """Instantiate a registry problem by name with numeric overrides."""
    if name not in PROBLEMS:
        raise KeyError(
            f"unknown problem {name!r}; available: {', '.join(sorted(PROBLEMS))}"
        )
    factory = PROBLEMS[name]
    try:
        return factory(**params)
    except TypeError as exc:
        raise ValueError(f"problem.{name}: {exc}") from exc
