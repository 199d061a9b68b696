"""Heat semigroup, Duhamel convolution and Leray/pressure machinery.

Every kernel acts as a Fourier multiplier on the periodic grid; the pointwise
Gaussian is kept for unit checks and the bound-integral evaluator.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .field import (
    GridSpec,
    ParameterError,
    VectorField,
    check_beta,
    dealias,
    fwd,
    inv,
    spectral_ops,
)


@dataclass(frozen=True)
class HeatParams:
    s_visc: float
    dt: float

    def __post_init__(self):
        if not self.s_visc > 0:
            raise ParameterError(f"s_visc={self.s_visc} must be positive")
        if self.dt < 0:
            raise ParameterError(f"dt={self.dt} must be non-negative")


def heat_kernel_point(n: int, hp: HeatParams, r):
    """Gaussian fundamental solution (4 pi s dt)^(-n/2) exp(-r^2 / (4 s dt))."""
    if hp.dt == 0:
        raise ParameterError("heat kernel at zero elapsed time is a delta; use heat_propagate")
    st = hp.s_visc * hp.dt
    r = np.asarray(r, dtype=float)
    return (4.0 * np.pi * st) ** (-n / 2.0) * np.exp(-(r * r) / (4.0 * st))


def heat_multiplier(grid: GridSpec, s_visc: float, dt: float) -> np.ndarray:
    return np.exp(-s_visc * dt * spectral_ops(grid).k2_full)


def heat_propagate(f, hp: HeatParams):
    if hp.dt == 0:
        return f
    mult = heat_multiplier(f.grid, hp.s_visc, hp.dt)
    return type(f).from_spectral(f.grid, mult * f.spectral(), f.t + hp.dt)


# ---------------------------------------------------------------- Duhamel


def _phi_weights(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(1 - e^-z (1+z))/z^2 and (z - 1 + e^-z)/z^2 with a series branch near z = 0."""
    small = z < 0.1
    zs = np.where(small, z, 0.0)
    left_s = np.zeros_like(z)
    right_s = np.zeros_like(z)
    fact = 1.0
    for j in range(2, 14):
        fact *= j
        term = (-1.0) ** j * zs ** (j - 2) / fact
        left_s += (j - 1) * term
        right_s += term
    zb = np.where(small, 1.0, z)
    em = np.exp(-zb)
    left_b = (1.0 - em * (1.0 + zb)) / zb**2
    right_b = (zb - 1.0 + em) / zb**2
    return np.where(small, left_s, left_b), np.where(small, right_s, right_b)


@lru_cache(maxsize=32)
def duhamel_weights(grid: GridSpec, s_visc: float, dt: float):
    """Per-mode step factor and trapezoid-like weights for one uniform time step.

    With g linear between nodes, the exact per-mode increment is
    ``I[m+1] = E * I[m] + w_left * g[m] + w_right * g[m+1]``.
    """
    z = s_visc * dt * spectral_ops(grid).k2_full
    left, right = _phi_weights(z)
    return np.exp(-z), dt * left, dt * right


def duhamel_hat(g_hat: np.ndarray, grid: GridSpec, s_visc: float, dt: float, beta=None) -> np.ndarray:
    """Space-time heat convolution of a node-sampled source, all nodes at once.

    ``g_hat`` has the node index first.  Node 0 of the result is zero (empty
    integral).  ``beta`` applies a kernel derivative (|beta| <= 1 in use).
    """
    E, wl, wr = duhamel_weights(grid, s_visc, dt)
    out = np.zeros_like(g_hat, dtype=complex)
    for m in range(g_hat.shape[0] - 1):
        out[m + 1] = E * out[m] + wl * g_hat[m] + wr * g_hat[m + 1]
    if beta is not None and sum(beta) > 0:
        out *= spectral_ops(grid).multiplier(check_beta(beta, grid.n))
    return out


def duhamel(g, s_visc: float, m_target: int, beta=None):
    """g * G^s evaluated at node ``m_target`` of the trajectory ``g``."""
    tg = g.time_grid
    grid = g.grid
    if not 0 <= m_target < tg.M:
        raise ParameterError(f"m_target={m_target} outside 0..{tg.M - 1}")
    t = float(tg.nodes()[m_target])
    cls = type(g.frames[0])
    if m_target == 0:
        return cls.from_spectral(grid, np.zeros_like(g.frames[0].spectral()), t)
    g_hat = np.stack([fr.spectral() for fr in g.frames[: m_target + 1]])
    res = duhamel_hat(g_hat, grid, s_visc, tg.dt, beta)
    return cls.from_spectral(grid, res[m_target], t)


# ---------------------------------------------------------------- Leray / pressure


def leray_hat(v_hat: np.ndarray, grid: GridSpec) -> np.ndarray:
    ops = spectral_ops(grid)
    kdotv = sum(k * v_hat[j] for j, k in enumerate(ops.k_odd))
    return np.stack([v_hat[i] - ops.k_odd[i] * kdotv * ops.inv_k2 for i in range(grid.n)])


def leray_project(v: VectorField) -> VectorField:
    return VectorField.from_spectral(v.grid, leray_hat(v.spectral(), v.grid), v.t)


def velocity_and_gradient(v_hat: np.ndarray, grid: GridSpec):
    """Dealiased samples of v and of grad v (grad[m, j] = d_j v_m)."""
    ops = spectral_ops(grid)
    vd = dealias(v_hat, grid)
    vel = inv(vd, grid)
    grad = np.stack([inv(np.stack([1j * ops.k_odd[j] * vd[m] for j in range(grid.n)]), grid)
                     for m in range(grid.n)])
    return vel, grad


def _pressure_from_gradient(grad: np.ndarray, grid: GridSpec) -> np.ndarray:
    ops = spectral_ops(grid)
    n = grid.n
    source = sum(grad[m, j] * grad[j, m] for j in range(n) for m in range(n))
    src_hat = dealias(fwd(source, n), grid)
    return np.stack([-1j * ops.k_odd[i] * ops.inv_k2 * src_hat for i in range(n)])


def pressure_gradient_hat(v_hat: np.ndarray, grid: GridSpec) -> np.ndarray:
    _, grad = velocity_and_gradient(v_hat, grid)
    return _pressure_from_gradient(grad, grid)


def pressure_gradient_term(v: VectorField) -> VectorField:
    """Spectral form of grad(K_n) * sum_{j,m} v_{m,j} v_{j,m}; zero mean."""
    return VectorField.from_spectral(v.grid, pressure_gradient_hat(v.spectral(), v.grid), v.t)


def advection_hat(v_hat: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Dealiased (v . grad) v."""
    vel, grad = velocity_and_gradient(v_hat, grid)
    n = grid.n
    adv = np.stack([sum(vel[j] * grad[i, j] for j in range(n)) for i in range(n)])
    return dealias(fwd(adv, n), grid)


def nonlinear_hat(v_hat: np.ndarray, grid: GridSpec) -> np.ndarray:
    """-(v . grad) v plus the pressure-gradient integral, in spectral form."""
    vel, grad = velocity_and_gradient(v_hat, grid)
    n = grid.n
    adv = np.stack([sum(vel[j] * grad[i, j] for j in range(n)) for i in range(n)])
    return _pressure_from_gradient(grad, grid) - dealias(fwd(adv, n), grid)


def advection(v: VectorField) -> VectorField:
    return VectorField.from_spectral(v.grid, advection_hat(v.spectral(), v.grid), v.t)
