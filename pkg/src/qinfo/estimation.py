"""Seeded measurement simulation, two-stage adaptive estimators and Monte
Carlo replication.

Randomness: every replication owns a ``numpy`` PCG64 generator seeded from
``SeedSequence(master_seed, spawn_key=(stream_index,))``. Equal
``(master_seed, stream_index)`` pairs give identical draws within a build.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats

from .errors import NearSingularCovariance, PoleDegeneracy
from .geometry import (
    SphericalAngles,
    example_model,
    example_state,
    polar_vector,
    sphere_model,
    vector_to_angles,
)
from .information import InfoMatrix, qfi_matrix, sld_solve
from .operators import trace_product
from .model import (
    ParametricModel,
    Povm,
    PureState,
    eigen_povm,
    model_derivative,
    outcome_distribution,
    pauli_povm,
    spin_povm,
    wrap_angle,
    wrapped_difference,
)

GOLDEN_TOL = 1e-10
FEASIBLE_TOL = 1e-9
MAX_CONDITION = 1e12
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class RngStream:
    master_seed: int
    stream_index: int

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(int(self.master_seed), spawn_key=(int(self.stream_index),))
        return np.random.Generator(np.random.PCG64(seq))


def split_counts(total: int, parts: int) -> list:
    """Equal split by floor; the remainder goes to the last part."""
    base = total // parts
    return [base] * (parts - 1) + [total - base * (parts - 1)]


@dataclass(frozen=True)
class TwoStagePlan:
    n: int
    alpha: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.n0 < 4:
            raise ValueError(f"first stage too small: n0 = {self.n0} < 4")
        if self.n_prime < 1:
            raise ValueError("no copies left for the second stage")

    @property
    def n0(self) -> int:
        # round first so that e.g. 10000 ** 0.5 is not pushed to 101 by float error
        return int(math.ceil(round(self.n**self.alpha, 9)))

    @property
    def k(self) -> int:
        return self.n0 // 2

    @property
    def n_prime(self) -> int:
        return self.n - self.n0


@dataclass(frozen=True)
class EstimateRecord:
    theta_tilde: float
    theta_hat: float
    clamped: bool = False
    degenerate: bool = False
    boundary: bool = False
    counts: dict = field(default_factory=dict)


def sample_outcomes(rho, m: Povm, n: int, rng: np.random.Generator) -> np.ndarray:
    """Multinomial outcome counts, aligned with ``m.labels``."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    probs = outcome_distribution(rho, m).probs
    return rng.multinomial(n, probs / probs.sum())


def first_stage_theta(counts_x, counts_y, eta: float) -> tuple:
    """Longitude from sigma_x and sigma_y tallies ``(plus, minus)``.

    Returns ``(theta_tilde, degenerate)``; ``degenerate`` is set when both
    cosine and sine estimates are zero and the default 0 is used.
    """
    s = math.sin(eta)
    if s <= 0.0:
        raise PoleDegeneracy("sin(eta) must be positive")
    fx = counts_x[0] / max(1, sum(counts_x))
    fy = counts_y[0] / max(1, sum(counts_y))
    c = min(1.0, max(-1.0, (2 * fx - 1) / s))
    sn = min(1.0, max(-1.0, (2 * fy - 1) / s))
    if c == 0.0 and sn == 0.0:
        return 0.0, True
    return wrap_angle(math.atan2(sn, c)), False


def second_stage_theta(theta_tilde: float, x: int, n_prime: int, eta: float) -> tuple:
    """Closed-form final estimate and whether the arcsin argument was clipped."""
    arg = (n_prime - 2 * x) / (n_prime * math.sin(eta))
    clipped = abs(arg) > 1.0
    arg = min(1.0, max(-1.0, arg))
    return wrap_angle(theta_tilde + math.asin(arg)), clipped


def _xy_first_stage(rho, eta: float, n0: int, rng) -> tuple:
    kx, ky = split_counts(n0, 2)
    cx = sample_outcomes(rho, pauli_povm("x"), kx, rng)
    cy = sample_outcomes(rho, pauli_povm("y"), ky, rng)
    theta_tilde, degenerate = first_stage_theta(cx, cy, eta)
    return theta_tilde, degenerate, {"x": cx.tolist(), "y": cy.tolist()}


def second_stage_povm(theta_tilde: float) -> Povm:
    """Spin along longitude ``theta_tilde + pi/2`` on the equator."""
    return spin_povm(polar_vector(np.pi / 2, theta_tilde + np.pi / 2))


def two_stage_theta(eta: float, theta_true: float, plan: TwoStagePlan, rng) -> EstimateRecord:
    """Two-stage estimator of the longitude with known colatitude.

    Stage 1 spends ``n0`` copies on sigma_x and sigma_y. Stage 2 measures
    spin along ``(pi/2, theta_tilde + pi/2)`` on the remaining copies and
    counts ``X``, the outcome with probability
    ``(1 - sin(eta) sin(theta - theta_tilde)) / 2``.
    """
    if math.sin(eta) <= 0.0:
        raise PoleDegeneracy("colatitude must avoid the poles")
    model = example_model(eta)
    rho = model.rho([theta_true])
    theta_tilde, degenerate, counts = _xy_first_stage(rho, eta, plan.n0, rng)
    c2 = sample_outcomes(rho, second_stage_povm(theta_tilde), plan.n_prime, rng)
    theta_hat, clamped = second_stage_theta(theta_tilde, int(c2[1]), plan.n_prime, eta)
    counts["stage2"] = c2.tolist()
    return EstimateRecord(theta_tilde, theta_hat, clamped, degenerate, False, counts)


def golden_section_max(f: Callable[[float], float], lo: float, hi: float, tol: float = GOLDEN_TOL,
                       prefer: Optional[float] = None) -> float:
    """Maximize a unimodal ``f`` on ``[lo, hi]``; equal values keep the side nearer ``prefer``."""
    prefer = 0.5 * (lo + hi) if prefer is None else prefer
    a, b = lo, hi
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc > fd or (fc == fd and abs(c - prefer) <= abs(d - prefer)):
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    # the bracket ends are never evaluated; compare them with the interior optimum
    best = 0.5 * (a + b)
    fbest = f(best)
    for edge in (lo, hi):
        fe = f(edge)
        if fe > fbest:
            best, fbest = edge, fe
    return best


def log_likelihood(model: ParametricModel, m: Povm, counts, theta) -> float:
    probs = outcome_distribution(model.rho(theta), m).probs
    total = 0.0
    for c, p in zip(counts, probs):
        if c:
            total += c * math.log(max(p, 1e-300))
    return total


@dataclass(frozen=True)
class GridMleFirstStage:
    """Coarse first stage: measure each POVM in turn, then maximize the
    joint likelihood over a uniform grid on ``[0, 2*pi)``.

    The table of log-probabilities on the grid depends only on the model, so
    it is computed once and reused while the same model object is passed.
    """

    povms: tuple
    grid: int = 256
    _cache: list = field(default_factory=list, compare=False, repr=False)

    def _table(self, model: ParametricModel):
        hit = self._cache[0] if self._cache else None
        if hit is None or hit[0] is not model:
            grid = np.linspace(0.0, 2 * np.pi, self.grid, endpoint=False)
            rows = []
            for t in grid:
                rho = model.rho([t])
                probs = np.concatenate([outcome_distribution(rho, m).probs for m in self.povms])
                rows.append(np.log(np.maximum(probs, 1e-300)))
            hit = (model, grid, np.array(rows))
            self._cache[:] = [hit]
        return hit[1], hit[2]

    def __call__(self, model: ParametricModel, rho, n0: int, rng) -> tuple:
        sizes = split_counts(n0, len(self.povms))
        data = [sample_outcomes(rho, m, k, rng) for m, k in zip(self.povms, sizes)]
        grid, table = self._table(model)
        scores = table @ np.concatenate(data).astype(float)
        best = int(np.argmax(scores))
        return float(grid[best]), False, {f"first{j}": c.tolist() for j, c in enumerate(data)}


@dataclass(frozen=True)
class XYFirstStage:
    """sigma_x / sigma_y first stage of the longitude model."""

    eta: float

    def __call__(self, model: ParametricModel, rho, n0: int, rng) -> tuple:
        return _xy_first_stage(rho, self.eta, n0, rng)


def default_first_stage(model: ParametricModel):
    if model.params and "eta" in model.params and model.name.startswith("example"):
        return XYFirstStage(model.params["eta"])
    return GridMleFirstStage((pauli_povm("x"), pauli_povm("y"), pauli_povm("z")))


def adaptive_general(model: ParametricModel, theta_true: float, plan: TwoStagePlan, rng,
                     first_stage=None) -> EstimateRecord:
    """Two-stage estimator for any smooth one-parameter model.

    After the first stage, the eigenprojectors of the quantum score at
    ``theta_tilde`` are measured on every remaining copy and ``theta_hat``
    maximizes the second-stage likelihood on ``theta_tilde +- pi/2``.
    Asymptotic efficiency assumes the Fisher information of that measurement
    is continuous in ``theta_tilde`` near the true value.
    """
    if model.param_dim != 1:
        raise ValueError("adaptive_general needs a one-parameter model")
    first_stage = default_first_stage(model) if first_stage is None else first_stage
    rho = model.rho([theta_true])
    theta_tilde, degenerate, counts = first_stage(model, rho, plan.n0, rng)
    povm = optimal_povm(model, theta_tilde)
    c2 = sample_outcomes(rho, povm, plan.n_prime, rng)
    lo, hi = theta_tilde - np.pi / 2, theta_tilde + np.pi / 2
    best = golden_section_max(lambda t: log_likelihood(model, povm, c2, [t]), lo, hi, prefer=theta_tilde)
    boundary = min(best - lo, hi - best) <= 10 * GOLDEN_TOL
    counts["stage2"] = c2.tolist()
    theta_hat = wrap_angle(best) if model.periodic[0] else best
    return EstimateRecord(theta_tilde, theta_hat, False, degenerate, boundary, counts)


def optimal_povm(model: ParametricModel, theta: float) -> Povm:
    """Von Neumann measurement of the quantum score at ``theta``."""
    rho = model.rho([theta])
    return eigen_povm(sld_solve(rho, model_derivative(model, [theta], 0)))


@dataclass(frozen=True)
class TwoParamRecord:
    eta_tilde: float
    phi_tilde: float
    eta_hat: float
    phi_hat: float
    clipped: bool = False
    degenerate: bool = False
    counts: dict = field(default_factory=dict)


def local_frame(u) -> np.ndarray:
    """Rotation taking ``u`` to +x, its phi direction to +y and its eta
    direction to -z, so ``u`` sits at ``(eta, phi) = (pi/2, 0)``."""
    a = vector_to_angles(u)
    v_eta = polar_vector(a.eta + np.pi / 2, a.phi)
    v_phi = polar_vector(np.pi / 2, a.phi + np.pi / 2)
    return np.array([polar_vector(a.eta, a.phi), v_phi, -v_eta])


def two_param_adaptive(truth: SphericalAngles, plan: TwoStagePlan, rng, second_stage: str = "yz") -> TwoParamRecord:
    """Adaptive estimate of a completely unknown pure qubit.

    Stage 1 measures sigma_x, sigma_y, sigma_z on ``n0`` copies. In the frame
    where that estimate is ``(pi/2, 0)``, stage 2 splits the rest between
    sigma_y and sigma_z and uses the closed-form constrained MLE. With
    ``second_stage="x"`` only sigma_x is measured, which fixes the distance
    from the first-stage estimate but not the direction; the estimate is then
    displaced along the local phi axis.
    """
    if truth.at_pole:
        raise PoleDegeneracy("true state at a pole")
    rho = sphere_model().rho([truth.eta, truth.phi])
    sizes = split_counts(plan.n0, 3)
    counts = {}
    u1 = np.empty(3)
    for j, (axis, k) in enumerate(zip("xyz", sizes)):
        c = sample_outcomes(rho, pauli_povm(axis), k, rng)
        counts[axis] = c.tolist()
        u1[j] = 2 * c[0] / k - 1
    degenerate = not np.any(u1)
    if degenerate:
        u1 = np.array([1.0, 0.0, 0.0])
    first = vector_to_angles(u1)
    frame = local_frame(u1)
    clipped = False
    if second_stage == "yz":
        ky, kz = split_counts(plan.n_prime, 2)
        cy = sample_outcomes(rho, spin_povm(frame[1]), ky, rng)
        cz = sample_outcomes(rho, spin_povm(frame[2]), kz, rng)
        counts["y'"], counts["z'"] = cy.tolist(), cz.tolist()
        uy = 2 * cy[0] / ky - 1
        uz = 2 * cz[0] / kz - 1
        rest = 1.0 - uy * uy - uz * uz
        clipped = rest < 0.0
        local = np.array([math.sqrt(max(0.0, rest)), uy, uz])
    elif second_stage == "x":
        cx = sample_outcomes(rho, spin_povm(frame[0]), plan.n_prime, rng)
        counts["x'"] = cx.tolist()
        ux = 2 * cx[0] / plan.n_prime - 1
        local = np.array([ux, math.sqrt(max(0.0, 1.0 - ux * ux)), 0.0])
    else:
        raise ValueError(f"unknown second stage {second_stage!r}")
    est = vector_to_angles(frame.T @ local)
    return TwoParamRecord(first.eta, first.phi, est.eta, est.phi, clipped, degenerate, counts)


def fidelity_loss(true: PureState, est: PureState) -> float:
    """One minus the squared overlap."""
    return float(min(1.0, max(0.0, 1.0 - abs(true.inner(est)) ** 2)))


def gill_massar_feasible(qfi, v) -> tuple:
    """``trace(I^-1 V^-1)`` and whether it is at most 1 (attainable)."""
    info = qfi.matrix if isinstance(qfi, InfoMatrix) else np.atleast_2d(np.asarray(qfi, dtype=float))
    v = np.atleast_2d(np.asarray(v, dtype=float))
    if np.linalg.cond(v) > MAX_CONDITION:
        raise NearSingularCovariance("covariance is numerically singular")
    value = float(np.trace(np.linalg.solve(info, np.eye(len(info))) @ np.linalg.inv(v)))
    return value, value <= 1.0 + FEASIBLE_TOL


def gill_massar_standard_error(qfi, v, replications: int) -> float:
    """Delta-method standard error of ``trace(I^-1 V^-1)`` when ``V`` is a
    sample covariance of ``replications`` Gaussian draws."""
    info = np.atleast_2d(np.asarray(qfi, dtype=float))
    v = np.atleast_2d(np.asarray(v, dtype=float))
    vinv = np.linalg.inv(v)
    g = -vinv @ np.linalg.inv(info) @ vinv
    g = 0.5 * (g + g.T)
    return float(math.sqrt(2.0 * np.trace(g @ v @ g @ v) / (replications - 1)))


STRATEGIES = ("two-stage", "adaptive", "two-param", "two-param-x")


@dataclass(frozen=True)
class Experiment:
    """One simulated design. For the scalar strategies ``phi`` is the true
    longitude and ``eta`` is known; for the two-parameter ones both are unknown.

    ``model`` and ``first_stage`` apply to the ``adaptive`` strategy only and
    default to the longitude model with its sigma_x / sigma_y first stage.
    """

    strategy: str
    n: int
    eta: float
    phi: float
    alpha: float = 0.5
    model: Optional[ParametricModel] = field(default=None, compare=False)
    first_stage: Optional[Callable] = field(default=None, compare=False)

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")

    @property
    def plan(self) -> TwoStagePlan:
        return TwoStagePlan(self.n, self.alpha)

    @property
    def two_param(self) -> bool:
        return self.strategy.startswith("two-param")

    @cached_property
    def scalar_model(self) -> ParametricModel:
        return self.model if self.model is not None else example_model(self.eta)

    @cached_property
    def resolved_first_stage(self):
        """The configured first stage, or the model default (built once so its
        likelihood table is shared by all replications)."""
        return self.first_stage if self.first_stage is not None else default_first_stage(self.scalar_model)

    @property
    def param_names(self) -> tuple:
        return ("eta", "phi") if self.two_param else ("theta",)


@dataclass(frozen=True)
class ReplicationResult:
    index: int
    estimate: tuple
    error: tuple
    fidelity_loss: float
    clamped: bool
    degenerate: bool
    boundary: bool


@dataclass
class ExperimentSummary:
    strategy: str
    n: int
    replications: int
    master_seed: int
    param_names: tuple
    bias: np.ndarray
    scaled_cov: np.ndarray
    skewness: np.ndarray
    excess_kurtosis: np.ndarray
    mean_fidelity_loss: float
    qfi: np.ndarray
    reference_bound: np.ndarray
    gm_trace: float
    gm_standard_error: float
    clamped_fraction: float
    degenerate_fraction: float
    boundary_fraction: float

    @property
    def scaled_variance_sum(self) -> float:
        return float(np.trace(self.scaled_cov))

    def as_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "n": self.n,
            "replications": self.replications,
            "master_seed": self.master_seed,
            "param_names": list(self.param_names),
            "bias": self.bias.tolist(),
            "scaled_cov": self.scaled_cov.tolist(),
            "scaled_variance_sum": self.scaled_variance_sum,
            "skewness": self.skewness.tolist(),
            "excess_kurtosis": self.excess_kurtosis.tolist(),
            "mean_fidelity_loss": self.mean_fidelity_loss,
            "qfi": self.qfi.tolist(),
            "reference_bound": self.reference_bound.tolist(),
            "gm_trace": self.gm_trace,
            "gm_standard_error": self.gm_standard_error,
            "clamped_fraction": self.clamped_fraction,
            "degenerate_fraction": self.degenerate_fraction,
            "boundary_fraction": self.boundary_fraction,
        }


def run_once(exp: Experiment, rng) -> ReplicationResult:
    plan = exp.plan
    if exp.two_param:
        truth = SphericalAngles(exp.eta, exp.phi)
        rec = two_param_adaptive(truth, plan, rng, "x" if exp.strategy == "two-param-x" else "yz")
        est = (rec.eta_hat, rec.phi_hat)
        err = (rec.eta_hat - truth.eta, wrapped_difference(rec.phi_hat, truth.phi))
        loss = fidelity_loss(example_state(truth), example_state(SphericalAngles(*est)))
        return ReplicationResult(0, est, err, loss, rec.clipped, rec.degenerate, False)
    model = exp.scalar_model
    if exp.strategy == "two-stage":
        rec = two_stage_theta(exp.eta, exp.phi, plan, rng)
    else:
        rec = adaptive_general(model, exp.phi, plan, rng, exp.resolved_first_stage)
    if model.periodic[0]:
        err = (wrapped_difference(rec.theta_hat, exp.phi),)
    else:
        err = (rec.theta_hat - exp.phi,)
    # 1 - |<a|b>|^2 = 1 - tr(rho_a rho_b) for pure states
    loss = 1.0 - trace_product(model.rho([exp.phi]), model.rho([rec.theta_hat])).real
    loss = min(1.0, max(0.0, loss))
    return ReplicationResult(0, (rec.theta_hat,), err, loss, rec.clamped, rec.degenerate, rec.boundary)


def _replication(exp: Experiment, master_seed: int, index: int) -> ReplicationResult:
    res = run_once(exp, RngStream(master_seed, index).generator())
    return ReplicationResult(index, res.estimate, res.error, res.fidelity_loss, res.clamped, res.degenerate,
                             res.boundary)


def replicate(exp: Experiment, replications: int, master_seed: int, threads: int = 1) -> tuple:
    """Run ``replications`` independent experiments on streams ``1..R``.

    Returns ``(summary, results)``; results are ordered by stream index
    whatever the thread count.
    """
    if replications < 2:
        raise ValueError("need at least 2 replications")
    indices = range(1, replications + 1)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda i: _replication(exp, master_seed, i), indices))
    else:
        results = [_replication(exp, master_seed, i) for i in indices]
    return summarize(exp, results, master_seed), results


def summarize(exp: Experiment, results: Sequence[ReplicationResult], master_seed: int) -> ExperimentSummary:
    errors = np.array([r.error for r in results], dtype=float)
    count = len(results)
    bias = np.array([math.fsum(errors[:, j]) / count for j in range(errors.shape[1])])
    centered = errors - bias
    cov = np.array([[math.fsum(centered[:, a] * centered[:, b]) / (count - 1)
                     for b in range(errors.shape[1])] for a in range(errors.shape[1])])
    scaled = exp.n * cov
    root_n_err = math.sqrt(exp.n) * errors
    skew = np.atleast_1d(stats.skew(root_n_err, axis=0))
    kurt = np.atleast_1d(stats.kurtosis(root_n_err, axis=0))
    if exp.two_param:
        info = qfi_matrix(sphere_model(), [exp.eta, exp.phi]).matrix
    else:
        info = qfi_matrix(exp.scalar_model, [exp.phi]).matrix
    gm, _ = gill_massar_feasible(info, scaled)
    se = gill_massar_standard_error(info, scaled, count)
    return ExperimentSummary(
        strategy=exp.strategy,
        n=exp.n,
        replications=count,
        master_seed=master_seed,
        param_names=exp.param_names,
        bias=bias,
        scaled_cov=scaled,
        skewness=skew,
        excess_kurtosis=kurt,
        mean_fidelity_loss=math.fsum(r.fidelity_loss for r in results) / count,
        qfi=info,
        reference_bound=np.linalg.inv(info),
        gm_trace=gm,
        gm_standard_error=se,
        clamped_fraction=sum(r.clamped for r in results) / count,
        degenerate_fraction=sum(r.degenerate for r in results) / count,
        boundary_fraction=sum(r.boundary for r in results) / count,
    )
