"""Pure spin-half models as curves on the Bloch sphere.

The worked model is the pure state with polar angles ``(eta, phi)``::

    psi = (exp(-i phi/2) cos(eta/2), exp(i phi/2) sin(eta/2))

whose Bloch vector is the point with colatitude ``eta`` and longitude ``phi``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import PoleDegeneracy
from .information import attainability_from, sld_solve, AttainabilityReport
from .model import (
    ParametricModel,
    Povm,
    PureState,
    bloch_to_density,
    density_to_bloch,
    model_derivative,
    TWO_PI,
)
from .operators import spin

PLANE_ANGLE_TOL = 1e-6
DEGENERATE_SPEED = 1e-10
DEFAULT_GRID = 64


@dataclass(frozen=True)
class SphericalAngles:
    eta: float
    phi: float

    def __post_init__(self):
        if not 0.0 <= self.eta <= np.pi:
            raise ValueError(f"colatitude {self.eta!r} outside [0, pi]")
        object.__setattr__(self, "phi", float(np.mod(self.phi, TWO_PI)))

    @property
    def at_pole(self) -> bool:
        return self.eta == 0.0 or self.eta == np.pi


def polar_vector(eta: float, phi: float) -> np.ndarray:
    return np.array([np.sin(eta) * np.cos(phi), np.sin(eta) * np.sin(phi), np.cos(eta)])


def vector_to_angles(u) -> SphericalAngles:
    u = np.asarray(u, dtype=float)
    u = u / np.linalg.norm(u)
    eta = float(np.arccos(np.clip(u[2], -1.0, 1.0)))
    return SphericalAngles(eta, float(np.arctan2(u[1], u[0])))


def example_state(angles: SphericalAngles) -> PureState:
    eta, phi = angles.eta, angles.phi
    return PureState(np.array([np.exp(-0.5j * phi) * np.cos(eta / 2), np.exp(0.5j * phi) * np.sin(eta / 2)]))


def example_model(eta: float) -> ParametricModel:
    """Longitude model on the circle of colatitude ``eta`` (eta known)."""

    def state(t):
        return bloch_to_density(polar_vector(eta, t[0]))

    def deriv(t, i):
        return 0.5 * spin(np.sin(eta) * np.array([-np.sin(t[0]), np.cos(t[0]), 0.0]))

    return ParametricModel(1, state, deriv, (True,), name="example", pure=True, params={"eta": eta})


def sphere_model() -> ParametricModel:
    """Completely unknown pure qubit, parameters ``(eta, phi)``."""

    def state(t):
        return bloch_to_density(polar_vector(t[0], t[1]))

    def deriv(t, i):
        eta, phi = t
        if i == 0:
            return 0.5 * spin(polar_vector(eta + np.pi / 2, phi))
        return 0.5 * spin(np.sin(eta) * polar_vector(np.pi / 2, phi + np.pi / 2))

    return ParametricModel(2, state, deriv, (False, True), name="sphere", pure=True)


def score_directions(angles: SphericalAngles) -> tuple:
    """Unit score directions for eta and phi and the length of the phi score.

    The SLDs are ``v_eta . sigma`` and ``r_phi * v_phi . sigma``.
    """
    if angles.at_pole:
        raise PoleDegeneracy("score directions undefined at the poles")
    v_eta = polar_vector(angles.eta + np.pi / 2, angles.phi)
    v_phi = polar_vector(np.pi / 2, angles.phi + np.pi / 2)
    return v_eta, v_phi, float(np.sin(angles.eta))


@dataclass(frozen=True)
class CurveSample:
    thetas: np.ndarray
    us: np.ndarray
    u_dots: np.ndarray

    def __post_init__(self):
        thetas = np.asarray(self.thetas, dtype=float).reshape(-1)
        us = np.asarray(self.us, dtype=float).reshape(-1, 3)
        u_dots = np.asarray(self.u_dots, dtype=float).reshape(-1, 3)
        if not len(thetas) == len(us) == len(u_dots):
            raise ValueError("curve arrays have different lengths")
        if np.any(np.abs(np.linalg.norm(us, axis=1) - 1.0) > 1e-10):
            raise ValueError("curve points must be unit vectors")
        if np.any(np.abs(np.einsum("ij,ij->i", us, u_dots)) > 1e-8):
            raise ValueError("tangents must be orthogonal to the curve points")
        object.__setattr__(self, "thetas", thetas)
        object.__setattr__(self, "us", us)
        object.__setattr__(self, "u_dots", u_dots)

    def __len__(self) -> int:
        return len(self.thetas)


@dataclass(frozen=True)
class CurveClass:
    tag: str  # "great-circle" | "non-planar" | "degenerate"
    normal: Optional[np.ndarray] = None


def default_grid(count: int = DEFAULT_GRID) -> np.ndarray:
    return np.linspace(0.0, TWO_PI, count, endpoint=False)


def example_curve(eta: float, thetas: Optional[Sequence[float]] = None) -> CurveSample:
    thetas = default_grid() if thetas is None else np.asarray(thetas, dtype=float)
    us = np.array([polar_vector(eta, t) for t in thetas])
    u_dots = np.sin(eta) * np.array([[-np.sin(t), np.cos(t), 0.0] for t in thetas])
    return CurveSample(thetas, us, u_dots)


def sample_curve(model: ParametricModel, thetas: Sequence[float]) -> CurveSample:
    """Bloch vectors and tangents of a one-parameter qubit model on a grid."""
    us, dots = [], []
    for t in thetas:
        u = density_to_bloch(model.rho([t]))
        d = density_to_bloch(model_derivative(model, [t], 0))
        us.append(u)
        # d/dtheta tr(rho sigma) is tr(drho sigma); no factor because u = tr(rho sigma)
        dots.append(d - np.dot(d, u) * u)
    return CurveSample(np.asarray(thetas, dtype=float), np.array(us), np.array(dots))


def curve_from_points(thetas, us, periodic: bool = False) -> CurveSample:
    """Curve sample from unit vectors on a grid; tangents by second-order differences."""
    thetas = np.asarray(thetas, dtype=float)
    us = np.asarray(us, dtype=float)
    us = us / np.linalg.norm(us, axis=1, keepdims=True)
    if len(thetas) < 3:
        raise ValueError("need at least 3 curve points")
    if periodic:
        step = thetas[1] - thetas[0]
        u_dots = (np.roll(us, -1, axis=0) - np.roll(us, 1, axis=0)) / (2 * step)
    else:
        u_dots = np.gradient(us, thetas, axis=0)
    u_dots = u_dots - np.einsum("ij,ij->i", u_dots, us)[:, None] * us
    return CurveSample(thetas, us, u_dots)


def load_curve_csv(path) -> CurveSample:
    """Read ``theta,ux,uy,uz`` rows. The curve is treated as closed when the
    grid is uniform and spans [0, 2*pi) without repeating the endpoint."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"theta", "ux", "uy", "uz"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"curve CSV lacks columns {sorted(missing)}")
        rows = [(float(r["theta"]), float(r["ux"]), float(r["uy"]), float(r["uz"])) for r in reader]
    data = np.array(rows, dtype=float).reshape(-1, 4)
    thetas = data[:, 0]
    steps = np.diff(thetas)
    closed = (
        len(thetas) >= 3
        and np.allclose(steps, steps[0], rtol=0, atol=1e-12)
        and abs(len(thetas) * steps[0] - TWO_PI) < 1e-9
    )
    return curve_from_points(thetas, data[:, 1:], periodic=bool(closed))


def curve_model(sample: CurveSample) -> ParametricModel:
    """Qubit model defined by a sampled curve.

    States and derivatives are exact at the sample points and linearly
    interpolated (then renormalized) in between.
    """
    thetas = sample.thetas

    def interp(values, t):
        return np.array([np.interp(t, thetas, values[:, j]) for j in range(3)])

    def state(t):
        u = interp(sample.us, t[0])
        return bloch_to_density(u / np.linalg.norm(u))

    def deriv(t, i):
        u = interp(sample.us, t[0])
        u = u / np.linalg.norm(u)
        d = interp(sample.u_dots, t[0])
        return 0.5 * spin(d - np.dot(d, u) * u)

    return ParametricModel(1, state, deriv, (False,), name="bloch-curve", pure=True)


def _canonical_sign(n: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(n)))
    return n if n[k] > 0 else -n


def curve_classify(sample: CurveSample) -> CurveClass:
    """Great circle versus any other curve, from sampled points and tangents."""
    if len(sample) < 3:
        raise ValueError("classification needs at least 3 grid points")
    speeds = np.linalg.norm(sample.u_dots, axis=1)
    if np.any(speeds <= DEGENERATE_SPEED):
        return CurveClass("degenerate")
    normals = np.cross(sample.us, sample.u_dots)
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    ref = _canonical_sign(normals[0])
    # angle between unsigned normals, and distance of each point from the plane
    cosines = np.clip(np.abs(normals @ ref), 0.0, 1.0)
    angles = np.arccos(cosines)
    tilt = np.abs(sample.us @ ref)
    if np.all(angles <= PLANE_ANGLE_TOL) and np.all(tilt <= PLANE_ANGLE_TOL):
        return CurveClass("great-circle", ref)
    return CurveClass("non-planar")


@dataclass(frozen=True)
class UniformReport:
    attains: bool
    thetas: np.ndarray
    reports: tuple

    @property
    def pointwise(self) -> np.ndarray:
        return np.array([r.attains_here for r in self.reports])


def uniform_attainability(model: ParametricModel, m: Povm, thetas: Sequence[float]) -> UniformReport:
    """Whether ``m`` attains the quantum information at every grid point."""
    if model.param_dim != 1:
        raise ValueError("uniform attainability is defined for one-parameter models")
    reports: list[AttainabilityReport] = []
    for t in thetas:
        rho = model.rho([t])
        lam = sld_solve(rho, model_derivative(model, [t], 0))
        reports.append(attainability_from(rho, lam, m))
    return UniformReport(all(r.attains_here for r in reports), np.asarray(thetas, dtype=float), tuple(reports))


def random_curve_model(rng: np.random.Generator, radius: float = 1.0) -> ParametricModel:
    """Smooth curve ``u(t) = radius * normalize(a + b cos t + c sin t)``.

    ``b`` and ``c`` are orthogonal with equal length and ``|a| = 0.3 |b|``, so
    the unnormalized curve stays away from the origin. ``radius < 1`` gives
    full-rank (mixed) states.
    """
    if not 0.0 < radius <= 1.0:
        raise ValueError("radius must lie in (0, 1]")
    b = rng.normal(size=3)
    a = rng.normal(size=3)
    a *= 0.3 * np.linalg.norm(b) / np.linalg.norm(a)
    c = np.cross(b, rng.normal(size=3))
    c *= np.linalg.norm(b) / np.linalg.norm(c)

    def raw(t):
        return a + b * np.cos(t) + c * np.sin(t), -b * np.sin(t) + c * np.cos(t)

    def state(t):
        w, _ = raw(t[0])
        return bloch_to_density(radius * w / np.linalg.norm(w))

    def deriv(t, i):
        w, dw = raw(t[0])
        nw = np.linalg.norm(w)
        u = w / nw
        return 0.5 * radius * spin((dw - np.dot(dw, u) * u) / nw)

    return ParametricModel(1, state, deriv, (True,), name="random-curve", pure=radius == 1.0)


def projector_direction(element) -> Optional[np.ndarray]:
    """Bloch direction of a rank-one qubit element, ``None`` if full rank."""
    e = np.asarray(element)
    tr = np.trace(e).real
    if tr <= 0:
        return None
    u = density_to_bloch(e / tr)
    if abs(np.linalg.norm(u) - 1.0) > 1e-8:
        return None
    return u

