"""Classical phase-space reference: observables on T*M, Poisson brackets
(plain and magnetic), leapfrog trajectories and the classical Ehrenfest check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .geometry import ManifoldSpec, TrigPoly
from .kinematics import VectorFieldSpec


class TrajectoryError(RuntimeError):
    pass


@dataclass(frozen=True)
class PhasePoint:
    x: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.atleast_1d(np.asarray(self.x, dtype=float)))
        object.__setattr__(self, "p", np.atleast_1d(np.asarray(self.p, dtype=float)))
        if self.x.shape != self.p.shape:
            raise ValueError("x and p must have the same dimension")

    @classmethod
    def reduced(cls, x, p, manifold: ManifoldSpec) -> "PhasePoint":
        return cls(np.mod(np.asarray(x, dtype=float), manifold.extents), p)


@dataclass(frozen=True)
class ClassicalObservable:
    """A function on T*M.  ``tag`` is "Qf", "PX" or "general"."""

    tag: str
    func: Callable[[np.ndarray, np.ndarray], float]
    data: object = None

    @classmethod
    def q(cls, f: TrigPoly) -> "ClassicalObservable":
        return cls("Qf", lambda x, p: float(np.real(f(*x))), f)

    @classmethod
    def p(cls, X: VectorFieldSpec) -> "ClassicalObservable":
        def P_X(x, p):
            return float(sum(pd * np.real(c(*x)) for pd, c in zip(p, X.components)))
        return cls("PX", P_X, X)

    @classmethod
    def general(cls, func: Callable[[np.ndarray, np.ndarray], float]) -> "ClassicalObservable":
        return cls("general", func)

    def __call__(self, x, p) -> float:
        return self.func(np.asarray(x, dtype=float), np.asarray(p, dtype=float))


def eval_observable(obs: ClassicalObservable, alpha: PhasePoint) -> float:
    return obs(alpha.x, alpha.p)


def _partials(F, x, p, step):
    # x is a periodic coordinate with no preferred origin, so its step is
    # fixed; the momentum step is relative to |p|.
    dx, dp = [], []
    for d in range(len(x)):
        h = step
        e = np.zeros_like(x)
        e[d] = h
        dx.append((F(x + e, p) - F(x - e, p)) / (2 * h))
        h = step * max(1.0, abs(p[d]))
        e = np.zeros_like(p)
        e[d] = h
        dp.append((F(x, p + e) - F(x, p - e)) / (2 * h))
    return np.array(dx), np.array(dp)


def _field_matrix(phi, x, ndim):
    if ndim != 2:
        raise ValueError("magnetic bracket needs two dimensions")
    v = float(phi(x)) if callable(phi) else float(phi)
    return np.array([[0.0, v], [-v, 0.0]])


def poisson_bracket(
    F: Callable,
    G: Callable,
    alpha: PhasePoint,
    e: float = 0.0,
    phi=None,
    step: float = 1e-5,
) -> float:
    """{F, G}_e = sum_d (dF/dp_d dG/dx^d - dF/dx^d dG/dp_d) + e phi_ab dF/dp_a dG/dp_b.

    Sign convention: {P_X, Q_f} = Q_{L_X f} and {P_X, P_Y} = P_[X,Y].
    ``phi`` is phi_12 at the point (a number or a callable of x).
    Partials are central differences: step ``step`` in x, relative in p.
    """
    x, p = alpha.x, alpha.p
    Fx, Fp = _partials(F, x, p, step)
    Gx, Gp = _partials(G, x, p, step)
    value = float(np.dot(Fp, Gx) - np.dot(Fx, Gp))
    if e != 0 and phi is not None:
        value += e * float(Fp @ _field_matrix(phi, x, len(x)) @ Gp)
    return value


@dataclass
class Trajectory:
    times: np.ndarray
    x: np.ndarray
    p: np.ndarray
    manifold: ManifoldSpec

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def points(self) -> list[PhasePoint]:
        return [PhasePoint(xi, pi) for xi, pi in zip(self.x, self.p)]

    def __len__(self):
        return len(self.times)


def integrate_trajectory(
    force: Callable[[np.ndarray, np.ndarray], np.ndarray],
    alpha0: PhasePoint,
    dt: float,
    T: float,
    manifold: ManifoldSpec,
) -> Trajectory:
    """Kick-drift-kick leapfrog with xdot = g^sharp p and pdot = force(x, p).

    The drift uses g^sharp p, so positions move along the metric dual of the
    momentum by construction.  Symplectic and second order for forces that
    depend on x only.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    steps = int(round(T / dt))
    ginv = np.array(manifold.inverse_metric)
    L = np.array(manifold.extents)
    xs = np.empty((steps + 1, manifold.ndim))
    ps = np.empty_like(xs)
    x = np.mod(np.asarray(alpha0.x, dtype=float), L)
    p = np.asarray(alpha0.p, dtype=float).copy()
    xs[0], ps[0] = x, p
    for n in range(steps):
        p_half = p + 0.5 * dt * np.asarray(force(x, p))
        x_new = x + dt * ginv * p_half
        if not (np.all(np.isfinite(x_new)) and np.all(np.isfinite(p_half))):
            raise TrajectoryError(f"non-finite state at step {n + 1} (t={(n + 1) * dt:.6g}): x={x_new}, p={p_half}")
        x = np.mod(x_new, L)
        p = p_half + 0.5 * dt * np.asarray(force(x, p_half))
        if not np.all(np.isfinite(p)):
            raise TrajectoryError(f"non-finite momentum at step {n + 1} (t={(n + 1) * dt:.6g}): p={p}")
        xs[n + 1], ps[n + 1] = x, p
    return Trajectory(np.arange(steps + 1) * dt, xs, ps, manifold)


def _scalar_and_gradient(f):
    if isinstance(f, TrigPoly):
        grads = [f.derivative(d) for d in range(f.ndim)]
        return (lambda x: float(np.real(f(*x)))), (lambda x: np.array([np.real(g(*x)) for g in grads], dtype=float))
    value, grad = f
    return value, grad


def classical_ehrenfest_residual(f, trajectory: Trajectory, metric: Sequence[float] | None = None) -> float:
    """max_n | (f(x_{n+1}) - f(x_{n-1}))/(2 dt) - P_{grad_g f}(alpha_n) |.

    ``f`` is a TrigPoly or a ``(value, gradient)`` pair of callables.
    """
    metric = trajectory.manifold.metric_diag if metric is None else metric
    ginv = 1.0 / np.asarray(metric, dtype=float)
    value, grad = _scalar_and_gradient(f)
    dt = trajectory.dt
    fx = np.array([value(x) for x in trajectory.x])
    worst = 0.0
    for n in range(1, len(trajectory) - 1):
        lhs = (fx[n + 1] - fx[n - 1]) / (2 * dt)
        rhs = float(np.dot(trajectory.p[n], ginv * grad(trajectory.x[n])))
        worst = max(worst, abs(lhs - rhs))
    return worst


def energy(trajectory: Trajectory, potential: Callable[[np.ndarray], float]) -> np.ndarray:
    ginv = np.array(trajectory.manifold.inverse_metric)
    kinetic = 0.5 * np.sum(ginv * trajectory.p**2, axis=1)
    return kinetic + np.array([potential(x) for x in trajectory.x])


def harmonic_force(center: Sequence[float], stiffness: float = 1.0):
    center = np.asarray(center, dtype=float)

    def force(x, p):
        return -stiffness * (x - center)

    def potential(x):
        return 0.5 * stiffness * float(np.sum((np.asarray(x) - center) ** 2))

    return force, potential


def free_force(x, p):
    return np.zeros_like(x)


def jacobi_sum(F, G, H, alpha: PhasePoint, e: float = 0.0, phi=None, step: float = 1e-5) -> float:
    """{F,{G,H}} + {G,{H,F}} + {H,{F,G}} with nested finite differences."""

    def br(A, B):
        return lambda x, p: poisson_bracket(A, B, PhasePoint(x, p), e, phi, step)

    return (poisson_bracket(F, br(G, H), alpha, e, phi, step)
            + poisson_bracket(G, br(H, F), alpha, e, phi, step)
            + poisson_bracket(H, br(F, G), alpha, e, phi, step))


def random_phase_points(rng: np.random.Generator, manifold: ManifoldSpec, count: int, pscale: float = 2.0):
    L = np.array(manifold.extents)
    return [PhasePoint(rng.uniform(0, 1, manifold.ndim) * L, rng.normal(0, pscale, manifold.ndim))
            for _ in range(count)]
