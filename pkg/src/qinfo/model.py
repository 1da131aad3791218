"""Parametric state models, finite-outcome POVMs and outcome probabilities."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, InvalidBlochVector, InvalidPovm, InvalidState, NonDifferentiable
from .operators import (
    IDENTITY2,
    PAULIS,
    PSD_TOL,
    herm_eig,
    hermitian,
    psd_inv_sqrt,
    spin,
    trace_product,
)

TRACE_TOL = 1e-10
COMPLETENESS_TOL = 1e-9
SUPPORT_EPS = 1e-12
DERIVATIVE_STEP = 1e-5
DERIVATIVE_TRACE_TOL = 1e-8
TWO_PI = 2.0 * np.pi


def density_operator(a) -> np.ndarray:
    """Validate a density operator: unit trace and nonnegative spectrum."""
    rho = hermitian(a)
    tr = np.trace(rho).real
    if abs(tr - 1.0) > TRACE_TOL:
        raise InvalidState(f"trace {tr!r} is not 1")
    lowest = herm_eig(rho).values[-1]
    if lowest < -PSD_TOL:
        raise InvalidState(f"negative eigenvalue {lowest:.3e}")
    return rho


@dataclass(frozen=True)
class PureState:
    amplitudes: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        object.__setattr__(self, "amplitudes", amps)
        if self.normalized and abs(np.linalg.norm(amps) - 1.0) > 1e-10:
            raise InvalidState(f"state norm {np.linalg.norm(amps)!r} is not 1")

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]

    def density(self) -> np.ndarray:
        return hermitian(np.outer(self.amplitudes, self.amplitudes.conj()))

    def inner(self, other: "PureState") -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes))


@dataclass(frozen=True)
class Povm:
    """Finite POVM as parallel tuples of labels and PSD elements summing to identity."""

    labels: tuple
    elements: tuple

    def __post_init__(self):
        labels = tuple(str(x) for x in self.labels)
        elements = tuple(hermitian(e) for e in self.elements)
        if len(labels) != len(elements) or not elements:
            raise InvalidPovm("labels and elements must be non-empty and aligned")
        if len(set(labels)) != len(labels):
            raise InvalidPovm("duplicate outcome labels")
        dim = elements[0].shape[0]
        if any(e.shape != (dim, dim) for e in elements):
            raise DimensionMismatch("POVM elements have different dimensions")
        for lab, e in zip(labels, elements):
            if herm_eig(e).values[-1] < -PSD_TOL:
                raise InvalidPovm(f"element {lab!r} is not positive semidefinite")
        total = np.sum(elements, axis=0)
        if np.max(np.abs(total - np.eye(dim))) > COMPLETENESS_TOL:
            raise InvalidPovm("elements do not sum to the identity")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "elements", elements)

    @property
    def dim(self) -> int:
        return self.elements[0].shape[0]

    def __len__(self) -> int:
        return len(self.elements)

    @classmethod
    def from_pairs(cls, pairs: Sequence[tuple[str, np.ndarray]]) -> "Povm":
        return cls(tuple(p[0] for p in pairs), tuple(p[1] for p in pairs))


@dataclass(frozen=True)
class OutcomeDistribution:
    labels: tuple
    probs: np.ndarray
    support_mask: np.ndarray


@dataclass(frozen=True)
class ParametricModel:
    """A map ``theta -> rho(theta)`` on R^k.

    ``derivative_at(theta, i)`` is optional; without it derivatives come from
    central differences. ``periodic`` flags coordinates with period 2*pi.
    """

    param_dim: int
    state_at: Callable[[np.ndarray], np.ndarray]
    derivative_at: Optional[Callable[[np.ndarray, int], np.ndarray]] = None
    periodic: tuple = field(default=())
    name: str = "model"
    pure: bool = False
    params: Optional[dict] = field(default=None, compare=False, hash=False)

    def __post_init__(self):
        if self.param_dim < 1:
            raise ValueError("param_dim must be at least 1")
        periodic = tuple(bool(p) for p in self.periodic) or (False,) * self.param_dim
        if len(periodic) != self.param_dim:
            raise ValueError("periodic mask length must equal param_dim")
        object.__setattr__(self, "periodic", periodic)

    def theta(self, theta) -> np.ndarray:
        t = np.atleast_1d(np.asarray(theta, dtype=float))
        if t.shape != (self.param_dim,):
            raise DimensionMismatch(f"expected {self.param_dim} parameters, got {t.shape}")
        return t

    def rho(self, theta) -> np.ndarray:
        return density_operator(self.state_at(self.theta(theta)))


def outcome_distribution(rho, m: Povm) -> OutcomeDistribution:
    rho = np.asarray(rho)
    if rho.shape != (m.dim, m.dim):
        raise DimensionMismatch(f"state is {rho.shape}, POVM acts on dimension {m.dim}")
    probs = np.array([max(trace_product(rho, e).real, 0.0) for e in m.elements])
    return OutcomeDistribution(m.labels, probs, probs > SUPPORT_EPS)


def model_derivative(model: ParametricModel, theta, i: int) -> np.ndarray:
    """Partial derivative of rho along coordinate ``i``, forced traceless."""
    t = model.theta(theta)
    if not 0 <= i < model.param_dim:
        raise IndexError(f"parameter index {i} out of range")
    if model.derivative_at is not None:
        d = hermitian(model.derivative_at(t, i))
    else:
        step = np.zeros_like(t)
        step[i] = DERIVATIVE_STEP
        plus = hermitian(model.state_at(t + step))
        minus = hermitian(model.state_at(t - step))
        d = hermitian((plus - minus) / (2 * DERIVATIVE_STEP))
    tr = np.trace(d).real
    if abs(tr) > DERIVATIVE_TRACE_TOL:
        raise NonDifferentiable(f"derivative along {i} has trace {tr:.3e}")
    return d - (tr / d.shape[0]) * np.eye(d.shape[0])


def bloch_to_density(u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != (3,):
        raise DimensionMismatch("Bloch vector must have 3 components")
    norm = np.linalg.norm(u)
    if norm > 1 + 1e-10:
        raise InvalidBlochVector(f"|u| = {norm!r} exceeds 1")
    if norm > 1:
        u = u / norm
    return hermitian(0.5 * (IDENTITY2 + spin(u)))


def density_to_bloch(rho) -> np.ndarray:
    rho = np.asarray(rho)
    if rho.shape != (2, 2):
        raise DimensionMismatch("Bloch coordinates need a qubit state")
    return np.array([trace_product(rho, s).real for s in PAULIS])


def spin_povm(direction, labels=("+", "-")) -> Povm:
    """Two-outcome projective measurement of spin along a 3-vector."""
    n = np.asarray(direction, dtype=float)
    n = n / np.linalg.norm(n)
    s = spin(n)
    return Povm(tuple(labels), (0.5 * (IDENTITY2 + s), 0.5 * (IDENTITY2 - s)))


def pauli_povm(axis: str) -> Povm:
    """Eigenprojectors of sigma_x, sigma_y or sigma_z, labelled ``+``/``-``."""
    vec = {"x": (1, 0, 0), "y": (0, 1, 0), "z": (0, 0, 1)}[axis]
    return spin_povm(vec)


def in_plane_povm(angle: float) -> Povm:
    """Spin along ``(cos a, sin a, 0)``, a direction on the equator."""
    return spin_povm((np.cos(angle), np.sin(angle), 0.0))


def mixture_povm(parts: Sequence[tuple[float, Povm, str]]) -> Povm:
    """Randomized choice of measurement: weight ``w`` picks POVM ``m``.

    Outcome labels are prefixed ``<prefix>:<label>``.
    """
    labels, elements = [], []
    for weight, m, prefix in parts:
        for lab, e in zip(m.labels, m.elements):
            labels.append(f"{prefix}:{lab}")
            elements.append(weight * e)
    return Povm(tuple(labels), tuple(elements))


def yz_mix_povm() -> Povm:
    """Half-half random choice between sigma_y and sigma_z (four outcomes)."""
    return mixture_povm([(0.5, pauli_povm("y"), "y"), (0.5, pauli_povm("z"), "z")])


def eigen_povm(op) -> Povm:
    """Projective POVM onto the eigenspaces of a self-adjoint operator.

    Eigenvalues closer than 1e-9 share an eigenspace. Labels are ``e0, e1, ...``
    in descending eigenvalue order.
    """
    eig = herm_eig(op)
    groups: list[list[int]] = []
    for i, v in enumerate(eig.values):
        if groups and abs(eig.values[groups[-1][0]] - v) <= 1e-9:
            groups[-1].append(i)
        else:
            groups.append([i])
    elements = []
    for g in groups:
        vecs = eig.vectors[:, g]
        elements.append(vecs @ vecs.conj().T)
    return Povm(tuple(f"e{j}" for j in range(len(elements))), tuple(elements))


def random_povm(rng: np.random.Generator, dim: int = 2, outcomes: int = 3) -> Povm:
    """Random full-rank POVM: ``S^{-1/2} G_x S^{-1/2}`` with Wishart-like ``G_x``."""
    gs = []
    for _ in range(outcomes):
        a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
        gs.append(a @ a.conj().T)
    root = psd_inv_sqrt(np.sum(gs, axis=0))
    return Povm(tuple(f"o{j}" for j in range(outcomes)), tuple(root @ g @ root for g in gs))


def random_unit_vector(rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def wrap_angle(x):
    """Map to [0, 2*pi)."""
    y = np.mod(x, TWO_PI)
    return np.where(y >= TWO_PI, 0.0, y) if np.ndim(y) else (0.0 if y >= TWO_PI else float(y))


def wrapped_difference(a, b):
    """``a - b`` mapped to (-pi, pi]."""
    d = np.mod(np.asarray(a) - np.asarray(b) + np.pi, TWO_PI) - np.pi
    d = np.where(d == -np.pi, np.pi, d)
    return float(d) if np.ndim(d) == 0 else d
