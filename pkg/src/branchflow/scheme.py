"""Picard iteration for local Euler solutions built from heat-kernel convolutions.

One step maps the previous iterate v_old to

    v_new(t) = heat(h, t - s) + int_s^t heat(N(v_old) - s Lap v_old, t - sigma) d sigma,

with N(v) = -(v . grad) v + pressure term.  At a fixed point the two
Laplacian terms cancel and v solves the Euler equations on [s, T].  All
trajectories are processed as stacked half spectra ``(M, n, ...)``.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np

from .data import DataParams, divergence_hat
from .field import GridSpec, ParameterError, TimeGrid, VectorField, inv, multiindices, spectral_ops
from .kernels import duhamel_hat, heat_multiplier, nonlinear_hat
from .norms import composite_hat

log = logging.getLogger(__name__)

EPS = np.finfo(float).eps


class BlowUpError(RuntimeError):
    def __init__(self, k: int, node: int, value: float):
        super().__init__(f"iterate k={k} exceeded the blow-up threshold at node {node} (sup={value:.3e})")
        self.k = k
        self.node = node
        self.value = value


class ContractionFailure(RuntimeError):
    def __init__(self, message: str, reports):
        super().__init__(message)
        self.reports = reports


@dataclass(frozen=True)
class SchemeParams:
    s: float = 0.05
    T: float = 0.1
    M: int = 17
    nu: float | None = None
    k_max: int = 40
    tol: float = 1e-8
    direction: Literal["forward", "reversed"] = "forward"
    dp: DataParams = field(default_factory=DataParams)
    nonlinear: bool = True
    transient_window: float | None = None
    blowup_factor: float = 1e6
    min_span: float = 1e-3

    def __post_init__(self):
        problems = []
        if not 0 < self.s < self.T:
            problems.append(f"need 0 < s < T (s={self.s}, T={self.T})")
        if self.nu is not None and not self.nu > 0:
            problems.append(f"nu={self.nu} must be positive")
        if self.M < 3:
            problems.append(f"M={self.M} must be >= 3")
        if self.k_max < 1:
            problems.append("k_max must be >= 1")
        if not self.tol > 0:
            problems.append("tol must be positive")
        if self.direction not in ("forward", "reversed"):
            problems.append(f"direction {self.direction!r} not in forward/reversed")
        if problems:
            raise ParameterError("; ".join(problems))

    @property
    def viscosity(self) -> float:
        return self.s if self.nu is None else self.nu

    @property
    def time_grid(self) -> TimeGrid:
        return TimeGrid(self.s, self.T, self.M)

    def first_node(self) -> int:
        """First node entering trajectory sup norms (skips the singular-data transient)."""
        window = self.transient_window
        if window is None:
            window = self.time_grid.dt if self.dp.kind == "singular" else 0.0
        if window <= 0:
            return 0
        nodes = self.time_grid.nodes() - self.s
        return int(np.searchsorted(nodes, window * (1 + 1e-12), side="right"))


@dataclass(eq=False)
class Trajectory:
    time_grid: TimeGrid
    frames: list[VectorField]

    def __post_init__(self):
        if len(self.frames) != self.time_grid.M:
            raise ParameterError("frame count must equal the node count")
        grid = self.frames[0].grid
        nodes = self.time_grid.nodes()
        for fr, t in zip(self.frames, nodes):
            if fr.grid != grid:
                raise ParameterError("all frames must share one grid")
            if abs(fr.t - t) > 1e-12 * max(1.0, abs(t)):
                raise ParameterError(f"frame stamp {fr.t} does not match node {t}")

    @property
    def grid(self) -> GridSpec:
        return self.frames[0].grid

    def spectral(self) -> np.ndarray:
        return np.stack([fr.spectral() for fr in self.frames])

    @classmethod
    def from_spectral(cls, tg: TimeGrid, grid: GridSpec, spec: np.ndarray) -> "Trajectory":
        nodes = tg.nodes()
        return cls(tg, [VectorField.from_spectral(grid, spec[m], float(nodes[m])) for m in range(tg.M)])

    def __sub__(self, other: "Trajectory") -> "Trajectory":
        _check_match(self, other)
        return Trajectory(self.time_grid, [a - b for a, b in zip(self.frames, other.frames)])

    def __neg__(self) -> "Trajectory":
        return Trajectory(self.time_grid, [-a for a in self.frames])


def _check_match(a: Trajectory, b: Trajectory) -> None:
    if a.grid != b.grid or a.time_grid != b.time_grid:
        raise ParameterError("trajectories live on different grids or time grids")


@dataclass
class ContractionReport:
    T: float
    k: list[int] = field(default_factory=list)
    norm_dv: list[float] = field(default_factory=list)
    norm_dvstar: list[float] = field(default_factory=list)
    norm_linterm: list[float] = field(default_factory=list)
    ratios: dict[int, float] = field(default_factory=dict)
    converged: bool = False
    k_stop: int = 0
    first_node: int = 0
    scale: float = 0.0
    tol_used: float = 0.0

    @property
    def contraction_ok(self) -> bool:
        """Every defined ratio with k >= 2 is at most 1/2."""
        return all(r <= 0.5 for k, r in self.ratios.items() if k >= 2)

    @property
    def max_ratio(self) -> float | None:
        vals = [r for k, r in self.ratios.items() if k >= 2]
        return max(vals) if vals else None

    @property
    def lemma1_ok(self) -> bool:
        """Linear-term norms drop below tol by k_stop and decrease from k = 2 on (10% slack)."""
        if not self.k:
            return True
        lin = self.norm_linterm
        below = lin[-1] <= self.tol_used
        tail = lin[1:]
        monotone = all(b <= 1.1 * a for a, b in zip(tail, tail[1:]))
        return below and monotone

    def rows(self):
        for i, k in enumerate(self.k):
            yield {
                "k": k,
                "norm_dv": self.norm_dv[i],
                "norm_dvstar": self.norm_dvstar[i],
                "norm_linterm": self.norm_linterm[i],
                "ratio": self.ratios.get(k, ""),
            }


# ---------------------------------------------------------------- building blocks


def _base_hat(h_hat: np.ndarray, grid: GridSpec, sp: SchemeParams) -> np.ndarray:
    tg = sp.time_grid
    return np.stack([heat_multiplier(grid, sp.s, float(t - sp.s)) * h_hat for t in tg.nodes()])


def _check_h(h: VectorField) -> None:
    from .data import gradient_sup

    if h.grid.n < 2:
        raise ParameterError("vector data required")
    div = float(np.max(np.abs(inv(divergence_hat(h.spectral(), h.grid), h.grid))))
    scale = gradient_sup(h)
    if scale > 0 and div > 1e-6 * scale:
        warnings.warn(f"initial data not divergence-free (relative divergence {div / scale:.2e})", stacklevel=3)


def init_iterate(h: VectorField, sp: SchemeParams) -> Trajectory:
    """v0(t) = heat(h, t - s) at every node."""
    _check_h(h)
    return Trajectory.from_spectral(sp.time_grid, h.grid, _base_hat(h.spectral(), h.grid, sp))


def nonlinear_term(v: VectorField) -> VectorField:
    """-(v . grad) v + pressure-gradient term, dealiased."""
    return VectorField.from_spectral(v.grid, nonlinear_hat(v.spectral(), v.grid), v.t)


def _picard_hat(prev: np.ndarray, base: np.ndarray, grid: GridSpec, sp: SchemeParams, sign: float) -> np.ndarray:
    a = sp.s * spectral_ops(grid).k2_full
    src = np.empty_like(prev)
    for m in range(prev.shape[0]):
        src[m] = a * prev[m]
        if sp.nonlinear:
            src[m] += sign * nonlinear_hat(prev[m], grid)
    return base + duhamel_hat(src, grid, sp.s, sp.time_grid.dt)


def _sign(sp: SchemeParams) -> float:
    return -1.0 if sp.direction == "reversed" else 1.0


def picard_step(prev: Trajectory, sp: SchemeParams, h: VectorField | None = None) -> Trajectory:
    """One Picard step; the data h defaults to frame 0 of ``prev``."""
    grid = prev.grid
    h_hat = (h if h is not None else prev.frames[0]).spectral()
    out = _picard_hat(prev.spectral(), _base_hat(h_hat, grid, sp), grid, sp, _sign(sp))
    return Trajectory.from_spectral(sp.time_grid, grid, out)


def linear_term_hat(dv: np.ndarray, grid: GridSpec, sp: SchemeParams) -> np.ndarray:
    """s Lap(dv) convolved with the heat kernel over [s, t]."""
    a = sp.s * spectral_ops(grid).k2_full
    return duhamel_hat(-a * dv, grid, sp.s, sp.time_grid.dt)


def increments(curr: Trajectory, prev: Trajectory, sp: SchemeParams) -> tuple[Trajectory, Trajectory]:
    """Increment dv = curr - prev and reduced increment dv + s Lap(dv) * G."""
    _check_match(curr, prev)
    dv = curr.spectral() - prev.spectral()
    dvs = dv + linear_term_hat(dv, curr.grid, sp)
    tg = sp.time_grid
    return Trajectory.from_spectral(tg, curr.grid, dv), Trajectory.from_spectral(tg, curr.grid, dvs)


def _traj_composite(spec: np.ndarray, grid: GridSpec, first: int) -> float:
    vals = [composite_hat(spec[m], grid) for m in range(first, spec.shape[0])]
    return max(vals) if vals else 0.0


def _increment_norms(dv: np.ndarray, lin: np.ndarray, grid: GridSpec, first: int) -> tuple[float, float, float]:
    """sup over nodes of the composite norms of dv, lin and dv + lin (shared transforms)."""
    ops = spectral_ops(grid)
    betas = multiindices(grid.n)
    best = [0.0, 0.0, 0.0]
    for m in range(first, dv.shape[0]):
        tot = [0.0, 0.0, 0.0]
        for beta in betas:
            mult = ops.multiplier(beta)
            a = inv(mult * dv[m], grid)
            b = inv(mult * lin[m], grid)
            tot[0] += float(np.max(np.abs(a)))
            tot[1] += float(np.max(np.abs(b)))
            tot[2] += float(np.max(np.abs(a + b)))
        best = [max(x, y) for x, y in zip(best, tot)]
    return best[0], best[1], best[2]


def _iterate(h: VectorField, sp: SchemeParams, start: np.ndarray | None = None):
    grid = h.grid
    _check_h(h)
    h_hat = h.spectral()
    base = _base_hat(h_hat, grid, sp)
    sign = _sign(sp)
    first = sp.first_node()
    scale = composite_hat(h_hat, grid)
    report = ContractionReport(T=sp.T, first_node=first, scale=scale, tol_used=sp.tol)
    prev = base if start is None else start
    if scale == 0.0 and start is None:
        report.converged = True
        report.k_stop = 1
        return prev, report
    limit = sp.blowup_factor * max(scale, EPS)
    for k in range(1, sp.k_max + 1):
        curr = _picard_hat(prev, base, grid, sp, sign)
        for m in range(curr.shape[0]):
            peak = float(np.max(np.abs(inv(curr[m], grid))))
            if not np.isfinite(peak) or peak > limit:
                raise BlowUpError(k, m, peak)
        dv = curr - prev
        lin = linear_term_hat(dv, grid, sp)
        n_dv, n_lin, n_dvs = _increment_norms(dv, lin, grid, first)
        report.k.append(k)
        report.norm_dv.append(n_dv)
        report.norm_dvstar.append(n_dvs)
        report.norm_linterm.append(n_lin)
        log.debug("k=%d |dv|=%.3e |dv*|=%.3e |lin|=%.3e", k, n_dv, n_dvs, n_lin)
        prev = curr
        report.k_stop = k
        if n_dvs <= sp.tol:
            report.converged = True
            break
    floor = 10 * EPS * max(scale, 1.0)
    for i in range(len(report.k) - 1):
        if report.norm_dvstar[i] > floor:
            report.ratios[report.k[i]] = report.norm_dvstar[i + 1] / report.norm_dvstar[i]
    return prev, report


def contraction_report(h: VectorField, sp: SchemeParams) -> ContractionReport:
    return _iterate(h, sp)[1]


def solve_fixed_point(h: VectorField, sp: SchemeParams, start: Trajectory | None = None):
    """Iterate to the fixed point; returns (trajectory, report) even without convergence."""
    spec, report = _iterate(h, sp, None if start is None else start.spectral())
    if not report.converged:
        log.warning("fixed point not reached after k_max=%d (last |dv*|=%.3e)", sp.k_max,
                    report.norm_dvstar[-1] if report.norm_dvstar else float("nan"))
    return Trajectory.from_spectral(sp.time_grid, h.grid, spec), report


def auto_search(h: VectorField, sp: SchemeParams):
    """Halve T - s until the measured contraction holds; returns (params, trajectory, report).

    A blow-up of the iterates counts as a failed attempt.  Raises
    :class:`ContractionFailure` once T - s drops below ``sp.min_span``.
    """
    reports = []
    trial = sp
    while True:
        try:
            traj, rep = solve_fixed_point(h, trial)
        except BlowUpError as exc:
            # a diverging iteration counts as a failed contraction at this T
            log.info("T=%.4g: %s", trial.T, exc)
            rep = ContractionReport(T=trial.T, tol_used=trial.tol)
            traj = None
        reports.append(rep)
        if rep.converged and rep.contraction_ok:
            return trial, traj, rep
        span = 0.5 * (trial.T - trial.s)
        if span < sp.min_span:
            raise ContractionFailure(
                f"no admissible T: contraction failed down to T - s = {2 * span:.3e}", reports)
        log.info("contraction not achieved at T=%.4g (max ratio %s); halving", trial.T, rep.max_ratio)
        trial = replace(trial, T=trial.s + span)


def time_shift(traj: Trajectory, s: float | None = None) -> Trajectory:
    """Relabel node times t -> t - s (default: the trajectory's start time)."""
    s = traj.time_grid.s_start if s is None else s
    tg = traj.time_grid
    new = TimeGrid(tg.s_start - s, tg.T_end - s, tg.M)
    nodes = new.nodes()
    return Trajectory(new, [VectorField(fr.grid, fr.data, float(t)) for fr, t in zip(traj.frames, nodes)])


def unshift(traj: Trajectory, s: float) -> Trajectory:
    return time_shift(traj, -s)


def solve_reversed(h_minus: VectorField, sp: SchemeParams, path: Literal["a", "b"] = "b"):
    """Time-reversed Euler solve on the tau-grid [s, T].

    Path "a" runs the scheme with both nonlinear signs flipped; path "b" solves
    forward from -h_minus and negates.  Returns (trajectory, report).
    """
    if path == "a":
        return solve_fixed_point(h_minus, replace(sp, direction="reversed"))
    if path == "b":
        traj, rep = solve_fixed_point(-h_minus, replace(sp, direction="forward"))
        return -traj, rep
    raise ParameterError(f"unknown path {path!r}")


def max_gap(a: Trajectory, b: Trajectory) -> float:
    _check_match(a, b)
    return max(float(np.max(np.abs(fa.data - fb.data))) for fa, fb in zip(a.frames, b.frames))


def reflect(traj: Trajectory) -> Trajectory:
    """t -> s + T - t on the same node grid (frame order reversed)."""
    tg = traj.time_grid
    nodes = tg.nodes()
    frames = traj.frames[::-1]
    return Trajectory(tg, [VectorField(fr.grid, fr.data, float(t)) for fr, t in zip(frames, nodes)])


def divergence_drift(traj: Trajectory) -> float:
    """max over nodes of sup|div v| relative to sup|grad v| at that node."""
    from .data import divergence_sup, gradient_sup

    worst = 0.0
    for fr in traj.frames:
        g = gradient_sup(fr)
        if g > 0:
            worst = max(worst, divergence_sup(fr) / g)
    return worst
