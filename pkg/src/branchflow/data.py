"""Initial-data families and function-space diagnostics.

The singular family uses the profile

    g(r) = r cos(r^-eps) / (1 + r^2)^6,   r = sqrt(x1^2 + x2^2),

with h1 = x1 g, h2 = x2 g, h3 = -2 x3 (g + r g'/2).  Because h3 grows
linearly in x3, the grid version multiplies the axial factor x3 by a Gaussian
window W(x3) = x3 exp(-x3^2 / (2 w^2)) and builds h from the scalar potential
chi = Psi(r) W(x3), Psi' = r g:

    h = (d1 d3 chi, d2 d3 chi, -(d1 d1 + d2 d2) chi).

Spectral derivatives commute exactly, so the discrete divergence and the
axial vorticity of the grid field vanish to round-off.  Near x3 = 0 the
windowed field agrees with the unwindowed formula (W'(0) = 1).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy import integrate

from .field import (
    GridSpec,
    ParameterError,
    ScalarField,
    VectorField,
    derivative,
    fwd,
    inv,
    multiindices,
    spectral_ops,
)

DEFAULT_AXIAL_WIDTH = 1.1


@dataclass(frozen=True)
class DataParams:
    eps: float = 0.1
    kind: Literal["singular", "smooth", "custom"] = "singular"
    amplitude: float = 1.0
    axial_width: float = DEFAULT_AXIAL_WIDTH

    def __post_init__(self):
        if not 0 < self.eps <= 0.25:
            raise ParameterError(f"eps={self.eps} must lie in (0, 0.25]")
        if self.kind not in ("singular", "smooth", "custom"):
            raise ParameterError(f"unknown data kind {self.kind!r}")
        if not self.axial_width > 0:
            raise ParameterError("axial_width must be positive")


# ---------------------------------------------------------------- radial profile


def _profile(r: np.ndarray, eps: float, oscillation: bool = True):
    """g, g' and r*g'' of the radial profile for r > 0."""
    u = r ** (-eps)
    if oscillation:
        c, sn = np.cos(u), np.sin(u)
    else:
        c, sn = np.ones_like(u), np.zeros_like(u)
    q = 1.0 + r * r
    rho = q**-6
    drho = -12.0 * r * q**-7
    d2rho = -12.0 * q**-7 + 168.0 * r * r * q**-8
    g = r * c * rho
    dg = c * rho + eps * u * sn * rho + r * c * drho
    # r * g'' kept as a product so tiny radii never divide
    rg2 = (eps * rho * u) * (sn - eps * sn - eps * u * c) + r * (2 * c * drho + 2 * eps * u * sn * drho) + r * r * c * d2rho
    if not oscillation:
        dg = rho + r * drho
        rg2 = r * (2 * drho) + r * r * d2rho
    return g, dg, rg2


def g_eps_eval(r2, eps: float):
    """Profile value g and dg/dr2; both set to 0 on the axis r2 = 0."""
    r = np.asarray(r2, dtype=float)
    if np.any(r < 0):
        raise ParameterError("r2 must be non-negative")
    on_axis = r < 1e-12
    rs = np.where(on_axis, 1.0, r)
    g, dg, _ = _profile(rs, eps)
    g = np.where(on_axis, 0.0, g)
    dg = np.where(on_axis, 0.0, dg)
    if g.ndim == 0:
        return float(g), float(dg)
    return g, dg


def axial_window(x3, width: float | None):
    """W(x3) and W'(x3); ``width=None`` gives the bare factor x3."""
    x3 = np.asarray(x3, dtype=float)
    if width is None:
        return x3, np.ones_like(x3)
    e = np.exp(-x3 * x3 / (2.0 * width * width))
    return x3 * e, (1.0 - x3 * x3 / width**2) * e


def singular_profile(x1, x2, x3, eps: float, axial_width: float | None = DEFAULT_AXIAL_WIDTH):
    """Closed-form h at arbitrary points (``axial_width=None``: unwindowed formula)."""
    x1, x2, x3 = (np.asarray(a, dtype=float) for a in (x1, x2, x3))
    r = np.hypot(x1, x2)
    g, dg = g_eps_eval(r, eps)
    W, dW = axial_window(x3, axial_width)
    h1 = x1 * g * dW
    h2 = x2 * g * dW
    h3 = -2.0 * W * (g + 0.5 * r * dg)
    return np.stack(np.broadcast_arrays(h1, h2, h3))


def radial_potential(radii: np.ndarray, eps: float) -> np.ndarray:
    """Psi(r) = -int_r^inf rho g(rho) d rho at the given radii."""
    radii = np.asarray(radii, dtype=float)
    uniq, back = np.unique(radii, return_inverse=True)

    def integrand(x):
        return x * g_eps_eval(x, eps)[0]

    xg, wg = np.polynomial.legendre.leggauss(24)
    vals = np.empty_like(uniq)
    tail, _ = integrate.quad(integrand, uniq[-1], np.inf, epsabs=1e-15, limit=200)
    acc = -tail
    vals[-1] = acc
    for i in range(len(uniq) - 2, -1, -1):
        a, b = uniq[i], uniq[i + 1]
        if a < 1e-12:
            piece, _ = integrate.quad(integrand, 0.0, b, epsabs=1e-16, limit=400)
        else:
            mid, half = 0.5 * (a + b), 0.5 * (b - a)
            piece = half * np.sum(wg * integrand(mid + half * xg))
        acc -= piece
        vals[i] = acc
    return vals[back].reshape(radii.shape)


# ---------------------------------------------------------------- constructors


def make_singular_data(dp: DataParams, grid: GridSpec) -> VectorField:
    if grid.n != 3:
        raise ParameterError("the singular family is three-dimensional (n = 3 required)")
    x1, x2, x3 = grid.coords()
    r = np.hypot(x1, x2)
    psi = radial_potential(r[:, :, 0], dp.eps)[:, :, None]
    W, _ = axial_window(x3, dp.axial_width)
    chi_hat = fwd(dp.amplitude * psi * W, 3)
    ops = spectral_ops(grid)
    k1, k2, k3 = (1j * k for k in ops.k_odd)
    h_hat = np.stack([k1 * (k3 * chi_hat), k2 * (k3 * chi_hat), -(k1 * (k1 * chi_hat) + k2 * (k2 * chi_hat))])
    return VectorField.from_spectral(grid, h_hat)


def make_smooth_data(grid: GridSpec, amplitude: float = 1.0) -> VectorField:
    """curl of A with A_n = amplitude * exp(-|x|^2 / 4) (3-D) or the 2-D stream-function analogue."""
    xs = grid.coords()
    psi = amplitude * np.exp(-sum(x * x for x in xs) / 4.0)
    psi = np.broadcast_to(psi, grid.shape)
    psi_hat = fwd(psi, grid.n)
    ops = spectral_ops(grid)
    k = [1j * kk for kk in ops.k_odd]
    if grid.n == 3:
        h_hat = np.stack([k[1] * psi_hat, -k[0] * psi_hat, np.zeros_like(psi_hat)])
    else:
        h_hat = np.stack([k[1] * psi_hat, -k[0] * psi_hat])
    return VectorField.from_spectral(grid, h_hat)


def make_planar_data(grid: GridSpec, eps: float = 0.1, amplitude: float = 1.0) -> VectorField:
    """Two-dimensional analogue h = (x1 g(|x|), x2 g(|x|)) built as grad Psi.

    It has zero vorticity but is not divergence-free; the planar check only
    tracks the vorticity.
    """
    if grid.n != 2:
        raise ParameterError("planar data needs n = 2")
    x1, x2 = grid.coords()
    psi_hat = fwd(amplitude * radial_potential(np.hypot(x1, x2), eps), 2)
    ops = spectral_ops(grid)
    return VectorField.from_spectral(grid, np.stack([1j * ops.k_odd[0] * psi_hat, 1j * ops.k_odd[1] * psi_hat]))


def make_data(dp: DataParams, grid: GridSpec) -> VectorField:
    if dp.kind == "singular":
        return make_singular_data(dp, grid)
    if dp.kind == "smooth":
        return make_smooth_data(grid, dp.amplitude)
    raise ParameterError("custom data must be supplied by the caller")


# ---------------------------------------------------------------- diagnostics


def divergence_hat(v_hat: np.ndarray, grid: GridSpec) -> np.ndarray:
    ops = spectral_ops(grid)
    return sum(1j * ops.k_odd[j] * v_hat[j] for j in range(grid.n))


def divergence(v: VectorField) -> ScalarField:
    return ScalarField.from_spectral(v.grid, divergence_hat(v.spectral(), v.grid), v.t)


def divergence_sup(v: VectorField) -> float:
    return float(np.max(np.abs(divergence(v).samples)))


def gradient_sup(v: VectorField) -> float:
    """sup over components and directions of |d_j v_i|."""
    ops = spectral_ops(v.grid)
    vh = v.spectral()
    return max(float(np.max(np.abs(inv(1j * ops.k_odd[j] * vh, v.grid)))) for j in range(v.grid.n))


def vorticity(v: VectorField):
    ops = spectral_ops(v.grid)
    vh = v.spectral()
    d = [1j * k for k in ops.k_odd]
    if v.grid.n == 2:
        return ScalarField.from_spectral(v.grid, d[0] * vh[1] - d[1] * vh[0], v.t)
    w = np.stack([d[1] * vh[2] - d[2] * vh[1], d[2] * vh[0] - d[0] * vh[2], d[0] * vh[1] - d[1] * vh[0]])
    return VectorField.from_spectral(v.grid, w, v.t)


@dataclass
class DecayReport:
    order: int
    constants: dict[tuple[int, ...], float]
    cap: float
    member: bool


def decay_report(f: ScalarField, l: float, m: int = 2, cap: float = 10.0) -> DecayReport:
    """Smallest c with |D^gamma f| <= c / (1 + |x|^l) over 1 <= |x| <= L - 1."""
    if l < 0 or not 0 <= m <= 2:
        raise ParameterError("need l >= 0 and 0 <= m <= 2")
    grid = f.grid
    rad = np.sqrt(sum(x * x for x in grid.coords()))
    rad = np.broadcast_to(rad, grid.shape)
    mask = (rad >= 1.0) & (rad <= grid.L - 1.0)
    weight = 1.0 + rad[mask] ** l
    consts = {}
    for beta in multiindices(grid.n, m):
        d = derivative(f, beta).samples
        consts[beta] = float(np.max(np.abs(d[mask]) * weight)) if mask.any() else 0.0
    return DecayReport(l, consts, cap, all(c <= cap for c in consts.values()))


@dataclass
class SingularityReport:
    eps: float
    radii: list[float]
    sup_second_derivative: list[float]
    fitted_slope: float
    alpha_estimate: float
    grid_radii: list[float] = field(default_factory=list)
    grid_sups: list[float] = field(default_factory=list)
    grid_slope: float | None = None


def h1_second_derivatives(r, theta, eps: float, oscillation: bool = True):
    """Analytic h1_{,11}, h1_{,22}, h1_{,12} in the plane x3 = 0, polar arguments."""
    _, dg, rg2 = _profile(np.asarray(r, dtype=float), eps, oscillation)
    c, s = np.cos(theta), np.sin(theta)
    d11 = c * (2 * dg + rg2 * c * c + dg * s * s)
    d22 = c * (rg2 * s * s + dg * c * c)
    d12 = s * (dg + c * c * (rg2 - dg))
    return d11, d22, d12


def _annulus_sup(rho: float, eps: float, oscillation: bool) -> float:
    span = (1.0 - 2.0 ** (-eps)) * rho ** (-eps)
    n_rad = int(max(400, 64 * span / (2 * np.pi)))
    r = rho * (1.0 + np.linspace(0.0, 1.0, n_rad))
    theta = np.linspace(0.0, np.pi / 2, 33)
    R, TH = np.meshgrid(r, theta, indexing="ij")
    parts = h1_second_derivatives(R, TH, eps, oscillation)
    return float(max(np.max(np.abs(p)) for p in parts))


def asymptotic_radii(eps: float, count: int = 6, dominance: float = 30.0) -> list[float]:
    """Annulus radii where eps^2 u^2 (u = r^-eps) beats the bounded terms.

    Ladder in u: u_j = (dominance / eps) * 2^j, r_j = u_j^(-1/eps).
    """
    u0 = dominance / eps
    return [float((u0 * 2.0**j) ** (-1.0 / eps)) for j in range(count)]


def singularity_scaling(dp: DataParams, grids=None, radii=None, oscillation: bool = True,
                        min_annuli: int = 3) -> SingularityReport:
    """Log-log slope of sup|D^2 h1| over annuli r2 in [rho, 2 rho] (analytic formulas).

    The fitted slope uses ``radii`` (default: :func:`asymptotic_radii`).  The
    grid-scale ladder rho = dx of each grid is evaluated and reported as
    ``grid_slope`` for information.
    """
    if not 0.05 <= dp.eps <= 0.25:
        raise ParameterError("singularity_scaling needs eps in [0.05, 0.25]")
    radii = sorted(radii if radii is not None else asymptotic_radii(dp.eps), reverse=True)
    if len(radii) < min_annuli:
        raise ParameterError(f"need at least {min_annuli} annuli, got {len(radii)}")
    sups = [_annulus_sup(rho, dp.eps, oscillation) for rho in radii]
    slope = float(np.polyfit(np.log(radii), np.log(sups), 1)[0])
    rep = SingularityReport(dp.eps, list(radii), sups, slope, 1.0 - 2.0 * dp.eps)
    if grids:
        gr = sorted({g.dx for g in grids}, reverse=True)
        rep.grid_radii = gr
        rep.grid_sups = [_annulus_sup(rho, dp.eps, oscillation) for rho in gr]
        if len(gr) >= 2:
            rep.grid_slope = float(np.polyfit(np.log(gr), np.log(rep.grid_sups), 1)[0])
    return rep


__all__ = [
    "DataParams",
    "DecayReport",
    "SingularityReport",
    "axial_window",
    "decay_report",
    "divergence",
    "divergence_sup",
    "g_eps_eval",
    "gradient_sup",
    "make_data",
    "make_planar_data",
    "make_singular_data",
    "make_smooth_data",
    "radial_potential",
    "singular_profile",
    "singularity_scaling",
    "vorticity",
]
