"""Sup/L2/H2 norm suite and the arctan-embedding diagnostic."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .field import GridSpec, ParameterError, ScalarField, VectorField, inv, multiindices, spectral_ops

MEMBERSHIP_CAP = 1e6


@dataclass
class NormReport:
    sup_by_multiindex: dict[tuple[int, ...], float]
    l2: float
    h2: float
    composite: float
    membership_flags: dict[str, bool] = field(default_factory=dict)
    node_range: tuple[int, int] | None = None
    node_composite_sup: float | None = None

    def rows(self, k: int | None = None, node: int | str = ""):
        for beta, val in self.sup_by_multiindex.items():
            yield {"k": "" if k is None else k, "node": node, "multiindex": "".join(map(str, beta)), "sup": val}


def sup_table_hat(v_hat: np.ndarray, grid: GridSpec) -> dict[tuple[int, ...], float]:
    """sup |D^beta v| for every |beta| <= 2, max over any leading (component) axes."""
    ops = spectral_ops(grid)
    out = {}
    for beta in multiindices(grid.n):
        if sum(beta) == 0:
            vals = inv(v_hat, grid)
        else:
            vals = inv(ops.multiplier(beta) * v_hat, grid)
        out[beta] = float(np.max(np.abs(vals)))
    return out


def composite_hat(v_hat: np.ndarray, grid: GridSpec) -> float:
    return float(sum(sup_table_hat(v_hat, grid).values()))


def _l2_table_hat(v_hat: np.ndarray, grid: GridSpec) -> dict[tuple[int, ...], float]:
    """L2 norms of every D^beta via Parseval on the half spectrum (max over components)."""
    ops = spectral_ops(grid)
    N = grid.N
    # weight 2 for half-spectrum columns that stand for a conjugate pair
    w = np.full(N // 2 + 1, 2.0)
    w[0] = 1.0
    w[-1] = 1.0
    shp = [1] * grid.n
    shp[-1] = N // 2 + 1
    w = w.reshape(shp)
    scale = grid.dx**grid.n / float(N**grid.n)
    out = {}
    for beta in multiindices(grid.n):
        mult = ops.multiplier(beta)
        d = v_hat if sum(beta) == 0 else mult * v_hat
        e = np.sum(w * np.abs(d) ** 2, axis=tuple(range(-grid.n, 0)))
        out[beta] = float(np.sqrt(np.max(e) * scale))
    return out


def _membership(f: ScalarField | VectorField, sups: dict, cap: float) -> dict[str, bool]:
    from .data import decay_report

    finite = all(np.isfinite(v) for v in sups.values())
    comps = [f] if isinstance(f, ScalarField) else f.components
    order = 2 * (f.grid.n + 1)  # decay class C^{m(n+1)}_{pol,m} with m = 2
    decays = all(decay_report(c, order, 2, cap).member for c in comps)
    return {"finite_second_derivatives": finite, "polynomial_decay": decays}


def norm_suite(f, t_window: tuple[int, int] | None = None, cap: float = MEMBERSHIP_CAP,
               membership: bool = True) -> NormReport:
    """Norm report of a field, or of a trajectory over nodes ``t_window`` (inclusive-exclusive)."""
    frames = getattr(f, "frames", None)
    if frames is None:
        spec = f.spectral()
        if isinstance(f, ScalarField):
            spec = spec[None]
        sups = sup_table_hat(spec, f.grid)
        l2s = _l2_table_hat(spec, f.grid)
        flags = _membership(f, sups, cap) if membership else {}
        return NormReport(sups, l2s[(0,) * f.grid.n], float(np.sqrt(sum(v * v for v in l2s.values()))),
                          float(sum(sups.values())), flags)
    lo, hi = t_window if t_window is not None else (0, len(frames))
    if hi <= lo or lo < 0 or hi > len(frames):
        raise ParameterError(f"empty or invalid node range {t_window}")
    reports = [norm_suite(frames[m], membership=membership, cap=cap) for m in range(lo, hi)]
    sups = {b: max(r.sup_by_multiindex[b] for r in reports) for b in reports[0].sup_by_multiindex}
    flags = {}
    if membership:
        flags = {key: all(r.membership_flags[key] for r in reports) for key in reports[0].membership_flags}
    return NormReport(sups, max(r.l2 for r in reports), max(r.h2 for r in reports),
                      float(sum(sups.values())), flags, (lo, hi), max(r.composite for r in reports))


def write_norm_rows(path, rows) -> None:
    rows = list(rows)
    with open(Path(path), "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["k", "node", "multiindex", "sup"])
        w.writeheader()
        w.writerows(rows)


# ---------------------------------------------------------------- arctan embedding


def _interp_matrix(grid: GridSpec, x: np.ndarray) -> np.ndarray:
    """Trigonometric interpolation matrix from grid samples to points ``x`` (one axis)."""
    N = grid.N
    m = np.fft.fftfreq(N, 1.0 / N)
    kappa = np.pi * m / grid.L
    E = np.exp(1j * np.outer(x + grid.L, kappa))
    nyq = np.abs(m) == N // 2
    E[:, nyq] = np.cos(np.outer(x + grid.L, kappa[nyq]))
    F = np.exp(-2j * np.pi * np.outer(m, np.arange(N)) / N)
    return np.real(E @ F) / N


def arctan_embed(f: ScalarField, n_xi: int | None = None) -> ScalarField:
    """Resample ``f`` at x = tan(xi) on a uniform xi-grid over [-pi/2, pi/2).

    Points beyond the truncated cube take the value at the nearest face, so a
    field that has not decayed by x = +-L keeps its face value at the xi
    boundary.  Diagnostic only.
    """
    grid = f.grid
    xi_grid = GridSpec(grid.n, n_xi or grid.N, np.pi / 2)
    xi = xi_grid.axis()
    with np.errstate(over="ignore"):
        x = np.clip(np.tan(xi), -grid.L, grid.L)
    x[0] = -grid.L
    B = _interp_matrix(grid, x)
    out = f.samples
    for ax in range(grid.n):
        out = np.moveaxis(np.tensordot(B, np.moveaxis(out, ax, 0), axes=(1, 0)), 0, ax)
    return ScalarField(xi_grid, out, f.t)


def boundary_sup(embedded: ScalarField, layers: int = 1) -> float:
    """sup |f| over the xi-grid faces and the ``layers`` nearest interior layers."""
    N = embedded.grid.N
    idx = np.arange(N)
    near = (idx <= layers) | (idx >= N - layers)
    mask = np.zeros(embedded.grid.shape, dtype=bool)
    for ax in range(embedded.grid.n):
        shp = [1] * embedded.grid.n
        shp[ax] = N
        mask |= near.reshape(shp)
    return float(np.max(np.abs(embedded.samples[mask])))


def embeds(embedded: ScalarField, rel_tol: float = 1e-8) -> bool:
    peak = float(np.max(np.abs(embedded.samples)))
    return peak == 0.0 or boundary_sup(embedded) <= rel_tol * peak
