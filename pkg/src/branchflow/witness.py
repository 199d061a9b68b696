"""Two-branch witness pipeline: reversed solve, reflection, force synthesis, residuals.

Also hosts the time-integral bound evaluator.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate

from .data import DataParams, make_data
from .field import GridSpec, ParameterError, inv, make_grid, spectral_ops
from .kernels import nonlinear_hat
from .norms import composite_hat
from .scheme import (
    ContractionReport,
    SchemeParams,
    Trajectory,
    auto_search,
    max_gap,
    reflect,
    solve_fixed_point,
    solve_reversed,
)

log = logging.getLogger(__name__)


@dataclass
class ResidualReport:
    """Per interior node residual norms; ``nodes`` are the node indices."""

    nodes: list[int]
    l2: list[float]
    sup: list[float]

    @property
    def max_sup(self) -> float:
        return max(self.sup) if self.sup else 0.0

    @property
    def max_l2(self) -> float:
        return max(self.l2) if self.l2 else 0.0

    def rows(self):
        for m, a, b in zip(self.nodes, self.l2, self.sup):
            yield {"node": m, "l2": a, "sup": b}


@dataclass
class GridWitness:
    N: int
    T: float
    c2_terminal_A: float
    c2_terminal_B: float
    terminal_gap: float
    shared_data_gap: float
    path_gap: float | None
    residual_A: ResidualReport
    residual_B: ResidualReport
    nse_A: ResidualReport
    nse_B: ResidualReport
    force_l2: list[float]
    report_reversed: ContractionReport
    report_A: ContractionReport
    seconds: float


@dataclass
class WitnessReport:
    shared_data_gap: float
    terminal_gap: float
    residual_A: list[float]
    residual_B: list[float]
    c2_terminal_A: dict[int, float]
    c2_terminal_B: dict[int, float]
    force_l2: list[float]
    eps: float
    kind: str
    tol: float
    per_grid: list[GridWitness] = field(default_factory=list, repr=False)
    terminal_B: object = field(default=None, repr=False)
    terminal_A: object = field(default=None, repr=False)

    @property
    def residual_scale(self) -> float:
        return max(max(self.residual_A, default=0.0), max(self.residual_B, default=0.0))

    def log_ratios(self, which: str = "B") -> list[tuple[int, int, float, float]]:
        """(N_i, N_{i+1}, measured log ratio, expected 2 eps log(N_{i+1}/N_i))."""
        c2 = self.c2_terminal_B if which == "B" else self.c2_terminal_A
        Ns = sorted(c2)
        return [(a, b, math.log(c2[b] / c2[a]), 2 * self.eps * math.log(b / a)) for a, b in zip(Ns, Ns[1:])]

    @property
    def b_growth_ok(self) -> bool:
        lr = self.log_ratios("B")
        return bool(lr) and all(got > 0 and abs(got - want) <= 0.15 for _, _, got, want in lr)

    @property
    def a_variation(self) -> float:
        vals = list(self.c2_terminal_A.values())
        return max(vals) / min(vals) - 1.0

    @property
    def a_stable_ok(self) -> bool:
        return self.a_variation <= 0.05

    @property
    def nse_cancellation(self) -> float:
        """Largest |nse_residual - euler_residual| over grids, branches and nodes."""
        worst = 0.0
        for g in self.per_grid:
            for e, f in ((g.residual_A, g.nse_A), (g.residual_B, g.nse_B)):
                worst = max([worst] + [abs(a - b) for a, b in zip(e.sup + e.l2, f.sup + f.l2)])
        return worst

    def summary(self) -> dict:
        return {
            "shared_data_gap": self.shared_data_gap,
            "terminal_gap": self.terminal_gap,
            "residual_A": self.residual_A,
            "residual_B": self.residual_B,
            "c2_terminal_A": {str(k): v for k, v in self.c2_terminal_A.items()},
            "c2_terminal_B": {str(k): v for k, v in self.c2_terminal_B.items()},
            "force_l2": self.force_l2,
            "eps": self.eps,
            "kind": self.kind,
            "residual_scale": self.residual_scale,
            "log_ratios_B": [list(r) for r in self.log_ratios("B")],
            "log_ratios_A": [list(r) for r in self.log_ratios("A")],
            "b_growth_ok": self.b_growth_ok,
            "a_variation": self.a_variation,
            "a_stable_ok": self.a_stable_ok,
            "nse_cancellation": self.nse_cancellation,
            "grids": [
                {"N": g.N, "T": g.T, "terminal_gap": g.terminal_gap, "path_gap": g.path_gap,
                 "k_stop_reversed": g.report_reversed.k_stop, "k_stop_A": g.report_A.k_stop,
                 "seconds": g.seconds}
                for g in self.per_grid
            ],
        }


# ---------------------------------------------------------------- residuals


def _l2(samples: np.ndarray, grid: GridSpec) -> float:
    return float(np.sqrt(np.sum(samples * samples) * grid.dx**grid.n))


def synthesize_force(traj: Trajectory, nu: float) -> Trajectory:
    """f = -nu Lap v at every node."""
    if not nu >= 0:
        raise ParameterError(f"nu={nu} must be non-negative")
    k2 = spectral_ops(traj.grid).k2_full
    spec = traj.spectral()
    return Trajectory.from_spectral(traj.time_grid, traj.grid, nu * k2 * spec)


def force_l2(force: Trajectory) -> list[float]:
    return [_l2(fr.data, fr.grid) for fr in force.frames]


def _residual(traj: Trajectory, extra_hat, sign: float) -> ResidualReport:
    tg = traj.time_grid
    if tg.M < 3:
        raise ParameterError("residual needs at least 3 nodes")
    grid = traj.grid
    spec = traj.spectral()
    nodes, l2, sup = [], [], []
    for m in range(1, tg.M - 1):
        r_hat = (spec[m + 1] - spec[m - 1]) / (2 * tg.dt)
        if sign:
            r_hat = r_hat - sign * nonlinear_hat(spec[m], grid)
        if extra_hat is not None:
            r_hat = r_hat - extra_hat(m, spec[m])
        r = inv(r_hat, grid)
        nodes.append(m)
        l2.append(_l2(r, grid))
        sup.append(float(np.max(np.abs(r))))
    return ResidualReport(nodes, l2, sup)


def euler_residual(traj: Trajectory, sign: float = 1.0) -> ResidualReport:
    """dv/dt + (v . grad) v - pressure term, centered differences at interior nodes.

    ``sign = -1`` checks the time-reversed system instead.
    """
    return _residual(traj, None, sign)


def nse_residual(traj: Trajectory, force: Trajectory | None, nu: float, nonlinear: bool = True) -> ResidualReport:
    """dv/dt - nu Lap v + (v . grad) v - pressure term - f.

    ``nonlinear=False`` drops the transport and pressure terms (forced heat equation).
    """
    k2 = spectral_ops(traj.grid).k2_full
    f_spec = None if force is None else force.spectral()

    def extra(m, v_hat):
        out = -nu * k2 * v_hat
        return out if f_spec is None else out + f_spec[m]

    return _residual(traj, extra, 1.0 if nonlinear else 0.0)


# ---------------------------------------------------------------- pipeline


def _composite(fr) -> float:
    return composite_hat(fr.spectral(), fr.grid)


def _one_grid(dp: DataParams, sp: SchemeParams, grid: GridSpec, cross_check: bool) -> tuple[GridWitness, object, object]:
    t0 = time.perf_counter()
    h_minus = make_data(dp, grid)
    # reversed solve through negation symmetry: forward from -h, then negate
    sp_fwd, neg_traj, rep_rev = auto_search(-h_minus, replace(sp, dp=dp, direction="forward"))
    reversed_traj = -neg_traj
    path_gap = None
    if cross_check:
        direct, _ = solve_reversed(h_minus, sp_fwd, path="a")
        path_gap = max_gap(direct, reversed_traj)
    log.info("N=%d reversed solve: T=%.4g k_stop=%d (%.1fs)", grid.N, sp_fwd.T, rep_rev.k_stop,
             time.perf_counter() - t0)

    h_E = reversed_traj.frames[-1]
    branch_a, rep_a = solve_fixed_point(h_E.with_time(sp_fwd.s), replace(sp_fwd, transient_window=0.0))
    branch_b = reflect(reversed_traj)

    nu = sp_fwd.viscosity
    force_a = synthesize_force(branch_a, nu)
    force_b = synthesize_force(branch_b, nu)
    gw = GridWitness(
        N=grid.N,
        T=sp_fwd.T,
        c2_terminal_A=_composite(branch_a.frames[-1]),
        c2_terminal_B=_composite(branch_b.frames[-1]),
        terminal_gap=_composite(branch_a.frames[-1] - branch_b.frames[-1]),
        shared_data_gap=_composite(branch_a.frames[0] - branch_b.frames[0]),
        path_gap=path_gap,
        residual_A=euler_residual(branch_a),
        residual_B=euler_residual(branch_b),
        nse_A=nse_residual(branch_a, force_a, nu),
        nse_B=nse_residual(branch_b, force_b, nu),
        force_l2=force_l2(force_a),
        report_reversed=rep_rev,
        report_A=rep_a,
        seconds=time.perf_counter() - t0,
    )
    log.info("N=%d witness done in %.1fs", grid.N, gw.seconds)
    return gw, branch_a, branch_b


def run_witness(dp: DataParams, sp: SchemeParams, grids=(32, 48, 64), L: float = 8.0,
                cross_check: str = "first") -> WitnessReport:
    """Build both branches on every resolution of the ladder.

    ``grids`` holds N values (or GridSpecs).  ``cross_check`` selects where the
    direct reversed scheme is compared with the negation path: "first", "all"
    or "none".
    """
    specs = [g if isinstance(g, GridSpec) else make_grid(3, int(g), L) for g in grids]
    if not specs:
        raise ParameterError("empty grid ladder")
    per = []
    last = None
    for i, g in enumerate(specs):
        check = cross_check == "all" or (cross_check == "first" and i == 0)
        gw, a, b = _one_grid(dp, sp, g, check)
        per.append(gw)
        last = (a, b)
    finest = per[-1]
    return WitnessReport(
        shared_data_gap=max(g.shared_data_gap for g in per),
        terminal_gap=finest.terminal_gap,
        residual_A=finest.residual_A.sup,
        residual_B=finest.residual_B.sup,
        c2_terminal_A={g.N: g.c2_terminal_A for g in per},
        c2_terminal_B={g.N: g.c2_terminal_B for g in per},
        force_l2=finest.force_l2,
        eps=dp.eps,
        kind=dp.kind,
        tol=sp.tol,
        per_grid=per,
        terminal_A=last[0].frames[-1],
        terminal_B=last[1].frames[-1],
    )


# ---------------------------------------------------------------- bound integral


def _integrand(sigma: float, n: int) -> float:
    if sigma <= 0:
        return 0.0
    return 0.25 * (4 * np.pi) ** (-n / 2) * sigma**-2.5 * math.exp(-1.0 / (4 * sigma))


def bound_integral(delta: float, L_const: float = 1.0, n: int = 3) -> float:
    """|L int_0^delta (1/4)(4 pi)^(-n/2) sigma^(-5/2) exp(-1/(4 sigma)) d sigma|; delta may be inf."""
    if not delta > 0:
        raise ParameterError(f"delta={delta} must be positive")
    if L_const < 0:
        raise ParameterError("L_const must be non-negative")
    if L_const == 0:
        return 0.0
    if math.isinf(delta):
        pieces = [(0.0, 1.0), (1.0, math.inf)]
    else:
        pieces = [(0.0, delta)]
    total = 0.0
    for a, b in pieces:
        val, _ = integrate.quad(_integrand, a, b, args=(n,), epsabs=1e-14, epsrel=1e-12, limit=200)
        total += val
    return abs(L_const * total)
