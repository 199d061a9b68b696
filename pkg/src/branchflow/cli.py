"""Batch driver: ``branchflow <subcommand> [flags]``.

Resolution order for every setting is flag, then config file (JSON), then the
built-in default.  Each run writes ``config.json`` plus CSV/JSON artifacts and
binary snapshots into the output directory (``BRANCHFLOW_OUT`` wins over
``--out``).

Exit codes: 0 success, 1 error, 2 a diagnostic check failed.
"""
from __future__ import annotations

import argparse
import contextlib
import csv
import dataclasses
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import data as data_mod
from .field import ParameterError, make_grid, set_threads, write_snapshot
from .norms import MEMBERSHIP_CAP, norm_suite, write_norm_rows
from .scheme import (
    BlowUpError,
    ContractionFailure,
    SchemeParams,
    auto_search,
    divergence_drift,
    solve_fixed_point,
    solve_reversed,
)
from .witness import bound_integral, euler_residual, run_witness

log = logging.getLogger("branchflow")

SUBCOMMANDS = ("check-data", "solve", "contraction", "witness", "integral-bound")
KINDS = ("singular", "smooth", "planar")


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        super().__init__("invalid configuration:\n  - " + "\n  - ".join(problems))
        self.problems = problems


@dataclass
class RunConfig:
    subcommand: str = "check-data"
    eps: float = 0.1
    kind: str = "singular"
    amplitude: float = 1.0
    s: float = 0.05
    nu: float | None = None
    T: float = 0.1
    L: float = 8.0
    N: int = 32
    M: int = 17
    kmax: int = 40
    tol: float = 1e-8
    reverse: bool = False
    grid_ladder: list[int] = field(default_factory=lambda: [32, 48, 64])
    delta: float = 0.1
    out: str = "branchflow_out"
    threads: int = 1
    seed: int = 0

    @property
    def dim(self) -> int:
        return 2 if self.kind == "planar" else 3

    def data_params(self) -> data_mod.DataParams:
        kind = "custom" if self.kind == "planar" else self.kind
        return data_mod.DataParams(eps=self.eps, kind=kind, amplitude=self.amplitude)

    def scheme_params(self) -> SchemeParams:
        return SchemeParams(s=self.s, T=self.T, M=self.M, nu=self.nu, k_max=self.kmax, tol=self.tol,
                            direction="reversed" if self.reverse else "forward", dp=self.data_params())

    def grid(self, N: int | None = None):
        return make_grid(self.dim, self.N if N is None else N, self.L)


FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _ladder(text) -> list[int]:
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    return [int(v) for v in str(text).split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="branchflow", description=__doc__.splitlines()[0])
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", help="JSON file with RunConfig keys")
    p.add_argument("--eps", type=float)
    p.add_argument("--kind", choices=KINDS)
    p.add_argument("--amplitude", type=float)
    p.add_argument("--s", type=float)
    p.add_argument("--nu", type=float)
    p.add_argument("--T", type=float)
    p.add_argument("--L", type=float)
    p.add_argument("--N", type=int)
    p.add_argument("--M", type=int)
    p.add_argument("--kmax", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--reverse", action="store_true", default=None)
    p.add_argument("--grid-ladder", dest="grid_ladder", type=_ladder, help="comma separated N values")
    p.add_argument("--delta", type=float, help="horizon for integral-bound")
    p.add_argument("--out")
    p.add_argument("--threads", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _validate(cfg: RunConfig) -> list[str]:
    problems = []
    if cfg.subcommand not in SUBCOMMANDS:
        problems.append(f"unknown subcommand {cfg.subcommand!r}")
    if cfg.kind not in KINDS:
        problems.append(f"kind {cfg.kind!r} not in {KINDS}")
    checks = [
        ("data", cfg.data_params),
        ("scheme", lambda: dataclasses.replace(cfg, eps=0.1, kind="smooth").scheme_params()),
        ("grid", lambda: [cfg.grid(n) for n in [cfg.N] + list(cfg.grid_ladder)]),
    ]
    for _, build in checks:
        try:
            build()
        except ParameterError as exc:
            problems.extend(part.strip() for part in str(exc).split(";"))
    if not cfg.grid_ladder:
        problems.append("grid ladder is empty")
    if not cfg.delta > 0:
        problems.append(f"delta={cfg.delta} must be positive")
    if cfg.threads < 1:
        problems.append("threads must be >= 1")
    if cfg.kind == "planar" and cfg.subcommand == "witness":
        problems.append("witness needs three-dimensional data")
    return list(dict.fromkeys(problems))


def parse_config(args: list[str] | None = None, file: str | None = None) -> RunConfig:
    """Resolve flags over file over defaults; raises ConfigError listing every problem."""
    ns = build_parser().parse_args(args)
    flags = {k: v for k, v in vars(ns).items() if v is not None and k not in ("config", "verbose")}
    values: dict = {}
    problems = []
    path = file or ns.config
    if path:
        try:
            loaded = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError([f"cannot read config file {path}: {exc}"]) from exc
        if not isinstance(loaded, dict):
            raise ConfigError([f"config file {path} must hold a JSON object"])
        for key, val in loaded.items():
            key = key.replace("-", "_")
            if key not in FIELDS:
                problems.append(f"unknown config key {key!r}")
            else:
                values[key] = val
    values.update(flags)
    if "grid_ladder" in values:
        try:
            values["grid_ladder"] = _ladder(values["grid_ladder"])
        except ValueError:
            problems.append(f"grid_ladder {values['grid_ladder']!r} is not a list of integers")
            values.pop("grid_ladder")
    cfg = RunConfig(**values)
    problems.extend(_validate(cfg))
    if problems:
        raise ConfigError(problems)
    return cfg


# ---------------------------------------------------------------- artifacts


def _write_csv(path: Path, rows, fieldnames=None) -> None:
    rows = list(rows)
    fieldnames = fieldnames or (list(rows[0]) if rows else ["empty"])
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fieldnames)
        w.writeheader()
        w.writerows(rows)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=float))


@contextlib.contextmanager
def _stage(name: str, timings: dict):
    t0 = time.perf_counter()
    log.info("stage %s ...", name)
    yield
    timings[name] = time.perf_counter() - t0
    log.info("stage %s done in %.2fs", name, timings[name])


def _initial_data(cfg: RunConfig, grid):
    if cfg.kind == "planar":
        return data_mod.make_planar_data(grid, cfg.eps, cfg.amplitude)
    return data_mod.make_data(cfg.data_params(), grid)


def _check_data(cfg: RunConfig, out: Path, timings: dict) -> int:
    grid = cfg.grid()
    with _stage("build-data", timings):
        h = _initial_data(cfg, grid)
    rows = []
    with _stage("identities", timings):
        scale = data_mod.gradient_sup(h)
        div = data_mod.divergence_sup(h)
        rows.append({"group": "divergence", "name": "sup_div", "value": div})
        rows.append({"group": "divergence", "name": "sup_div_relative", "value": div / scale if scale else 0.0})
        w = data_mod.vorticity(h)
        w3 = w if grid.n == 2 else w.components[2]
        w3_sup = float(abs(w3.samples).max())
        rows.append({"group": "vorticity", "name": "sup_omega3_relative", "value": w3_sup / scale if scale else 0.0})
    with _stage("decay", timings):
        for i, comp in enumerate(h.components):
            rep = data_mod.decay_report(comp, 2 * (grid.n + 1), cap=MEMBERSHIP_CAP)
            rows.append({"group": "decay", "name": f"member_c{i}", "value": float(rep.member)})
            rows.append({"group": "decay", "name": f"max_constant_c{i}", "value": max(rep.constants.values())})
    if cfg.kind == "singular" and cfg.eps >= 0.05:
        with _stage("scaling", timings):
            grids = [make_grid(3, n, cfg.L) for n in cfg.grid_ladder]
            sc = data_mod.singularity_scaling(cfg.data_params(), grids=grids)
            rows.append({"group": "scaling", "name": "fitted_slope", "value": sc.fitted_slope})
            rows.append({"group": "scaling", "name": "expected_slope", "value": -2 * cfg.eps})
            rows.append({"group": "scaling", "name": "grid_slope", "value": sc.grid_slope})
            for r, v in zip(sc.radii, sc.sup_second_derivative):
                rows.append({"group": "scaling_annulus", "name": repr(r), "value": v})
    _write_csv(out / "check_data.csv", rows, ["group", "name", "value"])
    write_snapshot(h, out, "h")
    ok = True
    if scale and cfg.kind == "planar":
        ok = w3_sup / scale <= 1e-8
    elif scale:
        ok = div / scale <= 1e-8 and (cfg.kind != "singular" or w3_sup / scale <= 1e-8)
    return 0 if ok else 2


def _solve(cfg: RunConfig, out: Path, timings: dict, search: bool) -> int:
    grid = cfg.grid()
    sp = cfg.scheme_params()
    with _stage("build-data", timings):
        h = _initial_data(cfg, grid)
    summary: dict = {}
    with _stage("fixed-point", timings):
        if search:
            try:
                sp, traj, rep = auto_search(h if not cfg.reverse else -h, sp if not cfg.reverse
                                            else dataclasses.replace(sp, direction="forward"))
            except ContractionFailure as exc:
                log.error("%s", exc)
                for i, r in enumerate(exc.reports):
                    _write_csv(out / f"contraction_attempt{i}.csv", r.rows(),
                               ["k", "norm_dv", "norm_dvstar", "norm_linterm", "ratio"])
                _write_json(out / "summary.json", {"admissible": False, "message": str(exc)})
                return 2
            if cfg.reverse:
                traj = -traj
        elif cfg.reverse:
            traj, rep = solve_reversed(h, sp, path="b")
        else:
            traj, rep = solve_fixed_point(h, sp)
    _write_csv(out / "contraction.csv", rep.rows(), ["k", "norm_dv", "norm_dvstar", "norm_linterm", "ratio"])
    with _stage("diagnostics", timings):
        res = euler_residual(traj, -1.0 if cfg.reverse else 1.0)
        _write_csv(out / "residual.csv", res.rows(), ["node", "l2", "sup"])
        norms = norm_suite(traj.frames[-1], membership=False)
        write_norm_rows(out / "norms_terminal.csv", norms.rows(k=rep.k_stop, node=cfg.M - 1))
        summary.update(
            T=sp.T, s=sp.s, converged=rep.converged, k_stop=rep.k_stop, max_ratio=rep.max_ratio,
            contraction_ok=rep.contraction_ok, lemma1_ok=rep.lemma1_ok,
            residual_max_sup=res.max_sup, divergence_drift=divergence_drift(traj),
            terminal_composite=norms.composite,
        )
        if cfg.dim == 2:
            summary["omega3_max"] = max(float(abs(data_mod.vorticity(fr).samples).max()) for fr in traj.frames)
    write_snapshot(traj.frames[0], out, "initial")
    write_snapshot(traj.frames[-1], out, "terminal")
    _write_json(out / "summary.json", summary)
    ok = rep.converged and (rep.contraction_ok or not search)
    return 0 if ok else 2


def _witness(cfg: RunConfig, out: Path, timings: dict) -> int:
    with _stage("witness", timings):
        try:
            rep = run_witness(cfg.data_params(), cfg.scheme_params(), cfg.grid_ladder, cfg.L)
        except ContractionFailure as exc:
            log.error("%s", exc)
            _write_json(out / "witness.json", {"admissible": False, "message": str(exc)})
            return 2
    summary = rep.summary()
    scale = 10 * cfg.tol
    diagnostics = {
        "residual_A": max(rep.residual_A) <= scale,
        "residual_B": max(rep.residual_B) <= scale,
        "nse_cancellation": rep.nse_cancellation <= 1e-12,
        "shared_data_gap": rep.shared_data_gap <= 10 * max(rep.residual_scale, scale),
        "b_growth": rep.b_growth_ok,
        "a_stable": rep.a_stable_ok,
    }
    summary["diagnostics"] = diagnostics
    _write_json(out / "witness.json", summary)
    finest = rep.per_grid[-1]
    _write_csv(out / "residual_A.csv", finest.residual_A.rows(), ["node", "l2", "sup"])
    _write_csv(out / "residual_B.csv", finest.residual_B.rows(), ["node", "l2", "sup"])
    _write_csv(out / "terminal_c2.csv",
               ({"N": g.N, "c2_terminal_A": g.c2_terminal_A, "c2_terminal_B": g.c2_terminal_B,
                 "terminal_gap": g.terminal_gap} for g in rep.per_grid))
    write_snapshot(rep.terminal_A, out, "terminal_A")
    write_snapshot(rep.terminal_B, out, "terminal_B")
    for name, ok in diagnostics.items():
        log.info("diagnostic %-16s %s", name, "pass" if ok else "FAIL")
    return 0 if all(diagnostics.values()) else 2


def _integral(cfg: RunConfig, out: Path, timings: dict) -> int:
    with _stage("quadrature", timings):
        val = bound_integral(cfg.delta, 1.0, 3)
        limit = bound_integral(math.inf, 1.0, 3)
    print(f"I({cfg.delta:g}) = {val:.12g}")
    print(f"I({cfg.delta:g})/{cfg.delta:g} = {val / cfg.delta:.12g}")
    _write_csv(out / "integral_bound.csv",
               [{"delta": cfg.delta, "I": val, "I_over_delta": val / cfg.delta, "I_inf": limit}])
    return 0


def run(cfg: RunConfig) -> int:
    out = Path(os.environ.get("BRANCHFLOW_OUT") or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    resolved = dataclasses.asdict(cfg)
    resolved["out"] = str(out)
    _write_json(out / "config.json", resolved)
    set_threads(cfg.threads)
    timings: dict = {}
    try:
        if cfg.subcommand == "check-data":
            code = _check_data(cfg, out, timings)
        elif cfg.subcommand in ("solve", "contraction"):
            code = _solve(cfg, out, timings, search=cfg.subcommand == "contraction")
        elif cfg.subcommand == "witness":
            code = _witness(cfg, out, timings)
        else:
            code = _integral(cfg, out, timings)
    except BlowUpError as exc:
        log.error("%s: blow-up at k=%d, node %d: %s", cfg.subcommand, exc.k, exc.node, exc)
        return 1
    except (ParameterError, OSError, ValueError) as exc:
        log.error("%s failed: %s", cfg.subcommand, exc)
        return 1
    _write_json(out / "timings.json", timings)
    return code


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    logging.basicConfig(level=logging.DEBUG if "-v" in argv or "--verbose" in argv else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = parse_config(argv)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
