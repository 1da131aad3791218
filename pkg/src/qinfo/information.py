"""Quantum scores (SLDs), quantum and classical information, and the
equality conditions for the Braunstein-Caves inequality chain.

Most public functions take a :class:`ParametricModel` and a parameter value.
The ``*_from`` variants work directly on ``rho``, its derivative and the SLD,
which is what the fuzz loops use.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateScore, IllPosed, SingularFisher
from .model import SUPPORT_EPS, ParametricModel, Povm, model_derivative
from .operators import frobenius, herm_eig, hermitian, pseudo_inverse, psd_sqrt, trace_product

KERNEL_EPS = 1e-10
BLOCKED_TOL = 1e-8
SINGULAR_DP_TOL = 1e-8
PROPORTIONAL_TOL = 1e-8
COND2_TOL = 1e-9
PLANE_TOL = 1e-8


@dataclass(frozen=True)
class SldResult:
    lambdas: tuple
    residuals: tuple
    score_traces: tuple


@dataclass(frozen=True)
class InfoMatrix:
    """Information matrix. For a singular classical matrix, ``matrix`` holds
    the sum over the positive-probability outcomes only."""

    matrix: np.ndarray
    kind: str
    singular: bool = False

    @property
    def scalar(self) -> float:
        return float(self.matrix[0, 0])


@dataclass(frozen=True)
class ChainReport:
    fisher: float
    step1: float
    step2: float
    quantum: float

    @property
    def slack(self) -> tuple:
        return (self.step1 - self.fisher, self.step2 - self.step1, self.quantum - self.step2)

    @property
    def total_slack(self) -> float:
        return self.quantum - self.fisher

    def as_row(self) -> dict:
        s1, s2, s3 = self.slack
        return {
            "fisher": self.fisher,
            "step1": self.step1,
            "step2": self.step2,
            "quantum": self.quantum,
            "slack1": s1,
            "slack2": s2,
            "slack3": s3,
        }


@dataclass(frozen=True)
class OutcomeCheck:
    label: str
    in_support: bool
    cond1_holds: bool
    proportionality_residual: float


@dataclass(frozen=True)
class AttainabilityReport:
    outcomes: tuple
    cond2_value: float

    @property
    def cond1_all(self) -> bool:
        return all(o.cond1_holds for o in self.outcomes if o.in_support)

    @property
    def cond2_holds(self) -> bool:
        return abs(self.cond2_value) <= COND2_TOL

    @property
    def attains_here(self) -> bool:
        return self.cond1_all and self.cond2_holds


def sld_solve(rho, rho_dot) -> np.ndarray:
    """Solve ``rho_dot = (rho L + L rho)/2`` for self-adjoint ``L``.

    Works in the eigenbasis of ``rho``. Entries where both eigenvalues vanish
    are set to zero; a nonzero ``rho_dot`` there means no solution exists.
    """
    eig = herm_eig(rho)
    v = eig.vectors
    p = eig.values
    d = v.conj().T @ np.asarray(rho_dot) @ v
    denom = p[:, None] + p[None, :]
    blocked = denom <= KERNEL_EPS
    if np.any(np.abs(d[blocked]) > BLOCKED_TOL):
        raise IllPosed("derivative has weight on the kernel of rho; no SLD exists")
    lam = np.where(blocked, 0.0, 2.0 * d / np.where(blocked, 1.0, denom))
    return hermitian(v @ lam @ v.conj().T)


def sld_residual(rho, rho_dot, lam) -> float:
    return frobenius(rho @ lam + lam @ rho - 2 * np.asarray(rho_dot))


def sld(model: ParametricModel, theta) -> SldResult:
    rho = model.rho(theta)
    lams, res, traces = [], [], []
    for i in range(model.param_dim):
        d = model_derivative(model, theta, i)
        lam = sld_solve(rho, d)
        lams.append(lam)
        res.append(sld_residual(rho, d, lam))
        traces.append(trace_product(rho, lam).real)
    return SldResult(tuple(lams), tuple(res), tuple(traces))


def qfi_matrix_from(rho, lambdas) -> np.ndarray:
    k = len(lambdas)
    out = np.empty((k, k))
    for i in range(k):
        rl = rho @ lambdas[i]
        for j in range(i, k):
            # trace rho (Li Lj + Lj Li) / 2 = Re trace(rho Li Lj)
            out[i, j] = out[j, i] = trace_product(rl, lambdas[j]).real
    return out


def qfi_matrix(model: ParametricModel, theta) -> InfoMatrix:
    rho = model.rho(theta)
    return InfoMatrix(qfi_matrix_from(rho, sld(model, theta).lambdas), "quantum")


def qfi_scalar(model: ParametricModel, theta) -> float:
    if model.param_dim != 1:
        raise ValueError("qfi_scalar needs a one-parameter model")
    return qfi_matrix(model, theta).scalar


def fisher_from(rho, rho_dots, m: Povm) -> InfoMatrix:
    k = len(rho_dots)
    out = np.zeros((k, k))
    singular = False
    rho_pinv = None
    for e in m.elements:
        p = trace_product(rho, e).real
        dp = np.array([trace_product(d, e).real for d in rho_dots])
        if p > SUPPORT_EPS:
            out += np.outer(dp, dp) / p
            continue
        if np.any(np.abs(dp) > SINGULAR_DP_TOL):
            singular = True
            continue
        # p and dp vanish, but p(theta + t) may still grow like t^2; the
        # quantum information leaking into this outcome, 4 tr(m drho rho^+ drho),
        # is the coefficient that makes the Fisher information 0/0 here
        if rho_pinv is None:
            rho_pinv = pseudo_inverse(rho, KERNEL_EPS)
        for d in rho_dots:
            if 4 * trace_product(e @ d, rho_pinv @ d).real > SINGULAR_DP_TOL:
                singular = True
    return InfoMatrix(out, "classical", singular)


def fisher_matrix(model: ParametricModel, m: Povm, theta) -> InfoMatrix:
    """Classical Fisher information of the outcome of ``m``.

    ``singular`` is set when a zero-probability outcome would receive
    probability at first or second order nearby: the information is then
    undefined at this point (the returned matrix is the finite part).
    """
    rho = model.rho(theta)
    derivs = [model_derivative(model, theta, i) for i in range(model.param_dim)]
    return fisher_from(rho, derivs, m)


def chain_from(rho, rho_dot, lam, m: Povm) -> ChainReport:
    fisher = fisher_from(rho, [rho_dot], m)
    if fisher.singular:
        raise SingularFisher("Fisher information undefined at this parameter value")
    rl = rho @ lam
    lrl = lam @ rho @ lam
    step1 = 0.0
    step2 = 0.0
    for e in m.elements:
        p = trace_product(rho, e).real
        if p <= SUPPORT_EPS:
            continue
        # |tr(A* B)| with A = m^1/2 rho^1/2, B = m^1/2 L rho^1/2 equals |tr(rho L m)|
        step1 += abs(trace_product(rl, e)) ** 2 / p
        step2 += trace_product(e, lrl).real
    quantum = trace_product(rl, lam).real
    return ChainReport(fisher.scalar, step1, step2, quantum)


def bc_chain(model: ParametricModel, m: Povm, theta) -> ChainReport:
    if model.param_dim != 1:
        raise ValueError("the inequality chain is for one-parameter models")
    rho = model.rho(theta)
    d = model_derivative(model, theta, 0)
    return chain_from(rho, d, sld_solve(rho, d), m)


def _proportional_residual(a: np.ndarray, b: np.ndarray) -> float:
    """Relative distance of ``a``, ``b`` from being real multiples of each other."""
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    scale = max(na, nb)
    if scale == 0.0 or na == 0.0 or nb == 0.0:
        return 0.0
    ab = np.vdot(a, b)
    r_ab = ab.real / na**2
    r_ba = ab.real / nb**2
    resid = min(np.linalg.norm(b - r_ab * a), np.linalg.norm(a - r_ba * b)) / scale
    imag = abs(ab.imag) / (na * nb)
    return float(max(resid, imag))


def attainability_from(rho, lam, m: Povm) -> AttainabilityReport:
    root_rho = psd_sqrt(rho)
    lam_root_rho = lam @ root_rho
    checks = []
    zero_set = np.zeros_like(rho)
    for label, e in zip(m.labels, m.elements):
        p = trace_product(rho, e).real
        if p <= SUPPORT_EPS:
            zero_set = zero_set + e
            checks.append(OutcomeCheck(label, False, True, 0.0))
            continue
        root_m = psd_sqrt(e)
        a = (root_m @ root_rho).reshape(-1)
        b = (root_m @ lam_root_rho).reshape(-1)
        resid = _proportional_residual(a, b)
        checks.append(OutcomeCheck(label, True, resid <= PROPORTIONAL_TOL, resid))
    cond2 = trace_product(zero_set, lam @ rho @ lam).real
    return AttainabilityReport(tuple(checks), cond2)


def attainability_check(model: ParametricModel, m: Povm, theta) -> AttainabilityReport:
    """Pointwise test of the two equality conditions of the inequality chain."""
    if model.param_dim != 1:
        raise ValueError("attainability is checked for one-parameter models")
    rho = model.rho(theta)
    lam = sld_solve(rho, model_derivative(model, theta, 0))
    return attainability_from(rho, lam, m)


def spinhalf_plane_condition(u, u_dot, xi) -> bool:
    """Whether spin direction ``xi`` lies in the plane spanned by ``u`` and ``u_dot``."""
    u = np.asarray(u, dtype=float)
    u_dot = np.asarray(u_dot, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if np.linalg.norm(u_dot) < 1e-12:
        raise DegenerateScore("u_dot vanishes; the score direction is undefined")
    normal = np.cross(u, u_dot)
    normal /= np.linalg.norm(normal)
    return bool(abs(np.dot(xi, normal)) <= PLANE_TOL * np.linalg.norm(xi))
