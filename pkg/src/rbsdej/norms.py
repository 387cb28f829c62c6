"""Monte Carlo estimators of the weighted solution norms, the factor-2
domination check between realized-jump and compensator energies, and the
elementary p-power inequality used throughout the estimates.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, fields
from typing import TYPE_CHECKING

import numpy as np

from .model import Exponents

if TYPE_CHECKING:  # pragma: no cover
    from .backward import BackwardSolution
    from .simulate import PathBundle

Array = np.ndarray


NORM_CSV_COLUMNS = [
    "s_p_beta", "s_p_beta_se",
    "s_pA_beta", "s_pA_beta_se",
    "h_p_beta", "h_p_beta_se",
    "l_p_lambda_beta", "l_p_lambda_beta_se",
    "l_p_mu_beta", "l_p_mu_beta_se",
    "k_p", "k_p_se",
]


@dataclass(frozen=True)
class NormReport:
    """Monte Carlo estimates of the six weighted norms, p-th powers.

    s_p_beta         E[sup_t e^{(p/2) beta A_t} |Y_t|^p]
    s_pA_beta        E[int e^{(p/2) beta A} |Y|^p dA]
    h_p_beta         E[(int e^{beta A} |Z|^2 dt)^{p/2}]
    l_p_lambda_beta  E[(int e^{beta A} ||U||^2_lambda dt)^{p/2}]
    l_p_mu_beta      same with the realized jump measure in place of
                     its compensator
    k_p              E[|K_T|^p]
    """

    s_p_beta: float
    s_p_beta_se: float
    s_pA_beta: float
    s_pA_beta_se: float
    h_p_beta: float
    h_p_beta_se: float
    l_p_lambda_beta: float
    l_p_lambda_beta_se: float
    l_p_mu_beta: float
    l_p_mu_beta_se: float
    k_p: float
    k_p_se: float

    def values(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def csv_row(self) -> list[float]:
        return [getattr(self, c) for c in NORM_CSV_COLUMNS]


def write_norms_csv(report: NormReport, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(NORM_CSV_COLUMNS)
    w.writerow([repr(v) for v in report.csv_row()])


def _mc(per_path: Array) -> tuple[float, float]:
    per_path = np.asarray(per_path, dtype=float)
    n = per_path.size
    mean = float(np.mean(per_path))
    se = float(np.std(per_path, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return mean, se


def _norm_parts(y, z, u, k_total, bundle, exponents):
    """Per-path values of each norm, before averaging."""
    p, beta = exponents.p, exponents.beta
    A = bundle.A_path
    steps = bundle.grid.steps
    w_half = np.exp(0.5 * p * beta * A)
    w_full = np.exp(beta * A)
    lam = np.asarray(bundle.mark_weights, dtype=float)

    sup_term = np.max(w_half * np.abs(y) ** p, axis=1)
    dA = np.diff(A, axis=1)
    sA_term = np.sum(w_half[:, :-1] * np.abs(y[:, :-1]) ** p * dA, axis=1)
    h_term = np.sum(w_full[:, :-1] * z[:, :-1] ** 2 * steps[None, :], axis=1) ** (p / 2.0)
    if u.shape[2]:
        u2l = np.sum(lam[None, None, :] * u**2, axis=2)
        l_lam = np.sum(w_full[:, :-1] * u2l[:, :-1] * steps[None, :], axis=1) ** (p / 2.0)
        real = np.sum(u[:, :-1, :] ** 2 * bundle.jump_counts, axis=2)
        l_mu = np.sum(w_full[:, :-1] * real, axis=1) ** (p / 2.0)
    else:
        l_lam = np.zeros(y.shape[0])
        l_mu = np.zeros(y.shape[0])
    k_term = np.abs(k_total) ** p
    return sup_term, sA_term, h_term, l_lam, l_mu, k_term


def estimate_norms(
    sol: "BackwardSolution",
    bundle: "PathBundle",
    exponents: Exponents,
    mark_weights: Array | None = None,
) -> NormReport:
    """Discrete-sum estimators of all six weighted norms.

    Integrals use the left-endpoint rule, the supremum runs over grid
    nodes, and the realized-jump energy sums |u|^2 over simulated jump
    counts. ``mark_weights`` defaults to the weights recorded by the
    solver on the solution.
    """
    lam = mark_weights if mark_weights is not None else sol.mark_weights
    b = _with_weights(bundle, lam)
    k_total = sol.k_cum[:, -1] + sol.k_jump_T
    parts = _norm_parts(sol.y, sol.z, sol.u, k_total, b, exponents)
    (s_m, s_se), (sa_m, sa_se), (h_m, h_se), (ll_m, ll_se), (lm_m, lm_se), (k_m, k_se) = (
        _mc(x) for x in parts
    )
    return NormReport(
        s_p_beta=s_m, s_p_beta_se=s_se,
        s_pA_beta=sa_m, s_pA_beta_se=sa_se,
        h_p_beta=h_m, h_p_beta_se=h_se,
        l_p_lambda_beta=ll_m, l_p_lambda_beta_se=ll_se,
        l_p_mu_beta=lm_m, l_p_mu_beta_se=lm_se,
        k_p=k_m, k_p_se=k_se,
    )


class _WeightedBundle:
    """Thin view pairing a bundle with the mark weights of the problem."""

    def __init__(self, bundle, weights):
        self._bundle = bundle
        self.mark_weights = np.asarray(weights, dtype=float)

    def __getattr__(self, name):
        return getattr(self._bundle, name)


def _with_weights(bundle, weights) -> "_WeightedBundle":
    return _WeightedBundle(bundle, weights)


def lenglart_check(
    sol: "BackwardSolution",
    bundle: "PathBundle",
    exponents: Exponents,
    mark_weights: Array | None = None,
) -> tuple[float, float, bool]:
    """Factor-2 domination of the realized-jump energy by its compensator.

    Returns (lhs, rhs, passed) where lhs = E[(∫∫ e^{beta A}|U|^2 mu)^{p/2}],
    rhs is the compensator version, and the gate is
    lhs <= 2 rhs + 3 joint standard errors.
    """
    lam = mark_weights if mark_weights is not None else sol.mark_weights
    b = _with_weights(bundle, lam)
    k_total = sol.k_cum[:, -1] + sol.k_jump_T
    _, _, _, l_lam, l_mu, _ = _norm_parts(sol.y, sol.z, sol.u, k_total, b, exponents)
    lhs, lhs_se = _mc(l_mu)
    rhs, rhs_se = _mc(l_lam)
    joint = float(np.sqrt(lhs_se**2 + (2.0 * rhs_se) ** 2))
    return lhs, rhs, bool(lhs <= 2.0 * rhs + 3.0 * joint)


def power_sum_bound(xs, p: float) -> tuple[float, float]:
    """(sum |x_i|)^p versus n^{p-1} sum |x_i|^p; lhs <= rhs for p >= 1."""
    if p < 1.0:
        raise ValueError("p must be at least 1")
    xs = np.abs(np.asarray(xs, dtype=float))
    n = xs.size
    if n == 0:
        return 0.0, 0.0
    lhs = float(np.sum(xs) ** p)
    rhs = float(n ** (p - 1.0) * np.sum(xs**p))
    return lhs, rhs


def weighted_distance(
    dy: Array,
    dz: Array,
    du: Array,
    bundle: "PathBundle",
    exponents: Exponents,
    mark_weights: Array,
) -> float:
    """Distance between iterates in the contraction norm: the p-th root of
    the summed y-in-dA, z and u energies of the difference fields."""
    b = _with_weights(bundle, mark_weights)
    zeros = np.zeros(dy.shape[0])
    _, sa, h, ll, _, _ = _norm_parts(dy, dz, du, zeros, b, exponents)
    total = float(np.mean(sa) + np.mean(h) + np.mean(ll))
    return total ** (1.0 / exponents.p)


def scale_solution(sol: "BackwardSolution", s: float) -> "BackwardSolution":
    """Multiply every solution field by s (homogeneity experiments)."""
    from .backward import BackwardSolution

    return BackwardSolution(
        y=s * sol.y,
        z=s * sol.z,
        u=s * sol.u,
        gamma=s * sol.gamma,
        k_cum=s * sol.k_cum,
        k_jump_T=s * sol.k_jump_T,
        run=sol.run,
        mark_weights=sol.mark_weights,
    )
