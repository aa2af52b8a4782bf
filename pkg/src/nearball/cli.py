"""Command-line front end.

Subcommands: ball, audit, sharpness, scan, derive, trace. Settings come
from defaults, then an optional key=value config file, then the
NEARBALL_OUT environment variable (output directory only), then flags.

Exit codes: 0 pass, 1 audit failure, 2 usage, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import reporting

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Configuration

def _floats(text) -> tuple:
    if isinstance(text, (list, tuple)):
        return tuple(float(v) for v in text)
    return tuple(float(v) for v in str(text).split(",") if v.strip())


def _ints(text) -> tuple:
    if isinstance(text, (list, tuple)):
        return tuple(int(v) for v in text)
    return tuple(int(v) for v in str(text).split(",") if v.strip())


def _strs(text) -> tuple:
    if isinstance(text, (list, tuple)):
        return tuple(str(v) for v in text)
    return tuple(v.strip() for v in str(text).split(",") if v.strip())


@dataclass
class RunConfig:
    n: int = 2
    K: int = 6
    levels: tuple = (2, 3)
    seed: int = 0
    family_size: int = 50
    fuglede_size: int = 10
    fuglede_seed: int = 1
    eps_grid: tuple = tuple(0.01 * 2.0 ** j for j in range(6))
    out: str = "nearball_out"
    only: tuple = ()
    budget_scale: float = 3.0
    workers: int = 1
    M: int = 6
    step: float = 0.02
    delta: float = 1e-3
    t: tuple = (0.1, 0.5, 1.0, 2.0)
    weight: str = "exp:1"
    profile: str = ""
    direction: str = "cos2,sin2,cos3,cos4,sin5"
    functionals: tuple = ("Tinv", "lambda:1", "lambda:6", "cluster:2-3")

    @staticmethod
    def parsers():
        return dict(n=int, K=int, levels=_ints, seed=int, family_size=int, fuglede_size=int,
                    fuglede_seed=int, eps_grid=_floats, out=str, only=_strs,
                    budget_scale=float, workers=int, M=int, step=float, delta=float, t=_floats,
                    weight=str, profile=str, direction=str, functionals=_strs)

    def update(self, values: dict) -> "RunConfig":
        parsers = self.parsers()
        for key, raw in values.items():
            if raw is None:
                continue
            if key not in parsers:
                raise UsageError(f"unknown config key {key!r}")
            try:
                setattr(self, key, parsers[key](raw))
            except (TypeError, ValueError) as exc:
                raise UsageError(f"bad value for {key}: {raw!r}") from exc
        return self

    def validate(self, command: str) -> "RunConfig":
        from .inequality_audit import GROUPS
        if command != "ball" and command != "trace" and self.n != 2:
            raise UsageError("PDE commands run in dimension 2 only")
        if self.n < 2:
            raise UsageError("dimension must be at least 2")
        if not 1 <= self.K <= 1_000_000:
            raise UsageError("K must be positive")
        if len(self.levels) != 2 or self.levels[1] != self.levels[0] + 1 or not 0 <= self.levels[0] <= 5:
            raise UsageError("levels must be two consecutive integers in 0..6")
        if self.family_size < 0 or self.fuglede_size < 0:
            raise UsageError("family sizes must be non-negative")
        if not self.eps_grid or any(not 0 < e < 0.5 for e in self.eps_grid):
            raise UsageError("eps values must lie in (0, 1/2)")
        if any(g not in GROUPS for g in self.only):
            raise UsageError(f"--only accepts {', '.join(GROUPS)}")
        if self.budget_scale < 0:
            raise UsageError("budget scale must be non-negative")
        if self.workers < 1:
            raise UsageError("workers must be at least 1")
        if not 1 <= self.M <= 7 or not 0 < self.step < 0.2:
            raise UsageError("M must be in 1..7 and step in (0, 0.2)")
        if any(v <= 0 for v in self.t):
            raise UsageError("heat-trace times must be positive")
        parse_weight(self.weight)
        return self

    def hashable(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("out")
        d.pop("workers")
        return d


def read_config_file(path) -> dict:
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        k, v = line.split("=", 1)
        values[k.strip()] = v.strip()
    return values


def parse_weight(text: str):
    from .spectral_sums import WeightSpec
    try:
        kind, param = text.split(":")
        return WeightSpec(kind, float(param))
    except ValueError as exc:
        raise UsageError(f"weight must be exp:<t> or power:<s>, got {text!r}") from exc


def parse_profile(text: str):
    """'m:a:b,m:a:b' -> FourierProfile; empty string is the disk."""
    from .geometry import FourierProfile
    if not text:
        return FourierProfile.zero()
    if Path(text).is_file():
        return FourierProfile.from_file(text)
    modes = {}
    try:
        for part in text.split(","):
            m, a, b = part.split(":")
            modes[int(m)] = (float(a), float(b))
    except ValueError as exc:
        raise UsageError(f"profile must be m:a:b[,m:a:b...] or a file, got {text!r}") from exc
    return FourierProfile.from_modes(modes)


def parse_direction(text: str):
    """'cos3', 'sin2' or 'dilation'."""
    from .geometry import FourierProfile
    if text == "dilation":
        return FourierProfile(np.array([1.0]), np.zeros(0))
    for kind in ("cos", "sin"):
        if text.startswith(kind) and text[3:].isdigit() and int(text[3:]) >= 1:
            m = int(text[3:])
            return FourierProfile.from_modes({m: (1.0, 0.0) if kind == "cos" else (0.0, 1.0)})
    raise UsageError(f"direction must be cosM, sinM or dilation, got {text!r}")


# ---------------------------------------------------------------------------
# Commands

def _out(cfg: RunConfig, name: str) -> Path:
    p = Path(cfg.out) / name
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def cmd_ball(cfg: RunConfig) -> int:
    from .ball_spectrum import enumerate_spectrum, simple_indices, spectral_gap
    spec = enumerate_spectrum(cfg.n, cfg.K + 1)
    h = cfg.hashable()
    rows = [(m.index_lo, m.index_hi, m.d, m.p, m.nu, m.zero, m.lam, m.mult)
            for m in spec.modes if m.index_lo <= cfg.K]
    reporting.write_csv(_out(cfg, f"ball_n{cfg.n}_K{cfg.K}_spectrum.csv"),
                        ["index_lo", "index_hi", "d", "p", "nu", "zero", "lambda", "mult"], rows, h)
    simple = simple_indices(cfg.n, cfg.K, spec)
    gaps = [(k, spectral_gap(cfg.n, k, spec)) for k in sorted({m.index_lo for m in spec.modes
                                                               if m.index_lo <= cfg.K})]
    reporting.write_csv(_out(cfg, f"ball_n{cfg.n}_K{cfg.K}_gaps.csv"), ["k", "g_n"], gaps, h)
    reporting.write_json(_out(cfg, f"ball_n{cfg.n}_K{cfg.K}.json"),
                         dict(n=cfg.n, K=cfg.K, simple_indices=simple,
                              multiplicities=[m.mult for m in spec.modes if m.index_lo <= cfg.K]), h)
    print(f"n={cfg.n} K={cfg.K} lambda_1={spec.eigenvalue(1):.15g} lambda_K={spec.eigenvalue(cfg.K):.15g}")
    print("modes (d, p, mult, lambda):")
    for m in spec.modes[:min(len(spec.modes), 12)]:
        if m.index_lo <= cfg.K:
            print(f"  {m.d:3d} {m.p:3d} {m.mult:5d} {m.lam:.12g}")
    print("simple indices: " + ", ".join(map(str, simple)))
    return EXIT_OK


def cmd_audit(cfg: RunConfig) -> int:
    from .inequality_audit import fuglede_family, run_audit, standard_family
    fam = standard_family(cfg.family_size, cfg.seed)
    fug = fuglede_family(cfg.fuglede_size, cfg.fuglede_seed)
    report = run_audit(fam, cfg.only or None, cfg.K, cfg.levels, cfg.budget_scale, fug,
                       (-cfg.delta, cfg.delta), cfg.workers)
    h = cfg.hashable()
    tag = "audit" + ("_" + "_".join(cfg.only) if cfg.only else "")
    report.to_json(_out(cfg, f"{tag}.json"), h)
    report.to_csv(_out(cfg, f"{tag}.csv"), h)
    for iid, s in report.summary().items():
        if "failures" in s:
            print(f"{iid:22s} {'PASS' if s['failures'] == 0 else 'FAIL'} "
                  f"n={s['count']} tightest={s['tightest_relative_margin']:.3g} ({s['tightest_domain']})")
        else:
            print(f"{iid:22s} ratio  n={s['count']} min={s['min_ratio']:.3g} max={s['max_ratio']:.3g}")
    fails = report.failures()
    for e in fails[:20]:
        print(f"FAILED {e.inequality_id} {e.domain_id} {e.note}: margin {e.margin:.3g} budget {e.budget:.3g}")
    return EXIT_OK if not fails else EXIT_FAIL


def cmd_sharpness(cfg: RunConfig) -> int:
    from .inequality_audit import sharpness
    run = sharpness(cfg.eps_grid, cfg.levels, K=cfg.K if cfg.K >= 6 else 6)
    h = cfg.hashable()
    reporting.write_json(_out(cfg, "sharpness.json"),
                         dict(run.to_dict(), ratios=[e.to_dict() for e in run.entries]), h)
    header = ["eps", "lambda1_deficit", "torsion_deficit"] + \
        [c for t in run.devs for c in (f"{t}_dev", f"{t}_err")]
    reporting.write_csv(_out(cfg, "sharpness.csv"), header, run.rows(), h)
    for f in run.fits.values():
        print(f"{f.target:12s} slope {f.slope:.4f} (expected {f.expected}) vs torsion {f.slope_vs_torsion:.4f}"
              f" eps used {f.eps_used}")
    return EXIT_OK


def cmd_scan(cfg: RunConfig) -> int:
    from .optimizer import FunctionalSpec, delta_threshold, hessian_parts, reverse_kj_exponent
    spec = FunctionalSpec.cluster_sum(2, 3)
    parts = hessian_parts(spec, cfg.M, cfg.step, (cfg.levels[0],))
    scans = [parts.scan(d) for d in (-cfg.delta, 0.0, cfg.delta)]
    brackets = [delta_threshold(parts, s) for s in (1, -1)]
    rkj = reverse_kj_exponent(cfg.M, cfg.step, (cfg.levels[0],), bank=parts.bank)
    h = cfg.hashable()
    reporting.write_json(_out(cfg, "scan.json"), dict(
        scans=[s.to_dict() for s in scans],
        delta_thresholds=[dict(sign=b.sign, stable=b.stable, unstable=b.unstable, width=b.width)
                          for b in brackets],
        reverse_kohler_jobin=rkj.to_dict()), h)
    reporting.write_csv(_out(cfg, "scan.csv"), ["delta", "min_eigenvalue"],
                        [(s.delta, s.min_eigenvalue) for s in scans], h)
    for s in scans:
        print(f"delta={s.delta:+.3g} min eigenvalue {s.min_eigenvalue:.6g}")
    for b in brackets:
        print(f"sign {b.sign:+d}: stable |delta| {b.stable:.6g} unstable {b.unstable:.6g}")
    print(f"reverse Kohler-Jobin: p_est={rkj.p_est:.6f} p_direct={rkj.p_direct:.6f} "
          f"maximal at p=1: {rkj.maximal_at_p1}")
    return EXIT_OK


def cmd_derive(cfg: RunConfig) -> int:
    from .geometry import make_domain, unit_disk
    from .shape_calculus import first_derivatives
    prof = parse_profile(cfg.profile)
    dom = unit_disk() if prof.coefficient_bound(0) == 0 else make_domain(prof)
    reports = []
    for name in _strs(cfg.direction):
        reports += first_derivatives(dom, parse_direction(name), list(cfg.functionals), cfg.levels,
                                     fd=prof.coefficient_bound(0) != 0)
    recs = [r for rep in reports for r in rep.records()]
    for r in recs:
        r["steps"] = list(r.get("steps", []))
    reporting.write_json(_out(cfg, "derive.json"), dict(records=recs), cfg.hashable())
    for rep in reports:
        fd = "" if rep.fd_first is None else f" fd={rep.fd_first:.8g}"
        print(f"{rep.functional:14s} {rep.direction_id:10s} boundary={rep.first:.8g} "
              f"volume={rep.first_volume:.8g}{fd}")
    return EXIT_OK


def cmd_trace(cfg: RunConfig) -> int:
    from .spectral_sums import B_n_sum, cluster_partition, heat_trace_ball, write_heat_csv, write_terms_csv
    h = cfg.hashable()
    traces = [heat_trace_ball(cfg.n, t) for t in cfg.t]
    head = [f"nearball {reporting.__version__}", f"config_hash {reporting.config_hash(h)}"]
    write_heat_csv(_out(cfg, f"heat_n{cfg.n}.csv"), traces, head)
    part = cluster_partition(cfg.n, cfg.K)
    reporting.write_csv(_out(cfg, f"partition_n{cfg.n}_K{cfg.K}.csv"), ["lo", "hi", "ratio"],
                        [(lo, hi, r) for (lo, hi), r in zip(part.intervals, part.ratios)], h)
    bn = B_n_sum(cfg.n, parse_weight(cfg.weight))
    write_terms_csv(_out(cfg, f"Bn_n{cfg.n}.csv"), bn.terms, head)
    reporting.write_json(_out(cfg, f"trace_n{cfg.n}.json"), dict(
        heat=[dict(t=tr.t, Z=tr.value, tail=tr.tail, K_cut=tr.K_cut) for tr in traces],
        partition=dict(c_n=part.c_n, D_n=part.D_n, max_ratio=part.max_ratio, ok=part.ok,
                       intervals=len(part.intervals)),
        B_n=dict(weight=cfg.weight, value=bn.value, tail=bn.tail, converges=bn.converges,
                 decay_onset=bn.decay_onset, note=bn.note)), h)
    for tr in traces:
        print(f"t={tr.t:g} Z={tr.value:.15g} tail<={tr.tail:.3g} K={tr.K_cut}")
    print(f"partition: {len(part.intervals)} intervals, max sup/inf {part.max_ratio:.4g} <= D_n {part.D_n:.4g}: {part.ok}")
    print(f"B_n({cfg.weight}) = {bn.value:.10g} tail {bn.tail:.3g} {bn.note}")
    return EXIT_OK if part.ok else EXIT_FAIL


HELP = dict(ball="ball spectrum, simple indices and gaps",
            audit="explicit-inequality suite over the seeded family",
            sharpness="exponent fits along eps cos(2 theta)",
            scan="Hessian scans, delta thresholds, reverse Kohler-Jobin exponent",
            derive="shape-derivative reports",
            trace="heat traces, cluster partition and B_n sums")

COMMANDS = dict(ball=cmd_ball, audit=cmd_audit, sharpness=cmd_sharpness, scan=cmd_scan,
                derive=cmd_derive, trace=cmd_trace)


# ---------------------------------------------------------------------------
# Entry point

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="nearball", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"nearball {reporting.__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key=value configuration file")
    common.add_argument("--out", help="output directory")
    common.add_argument("--K", type=int)
    common.add_argument("--levels", help="two consecutive mesh levels, e.g. 2,3")
    flags = dict(
        ball=[("--n", int)],
        audit=[("--seed", int), ("--family-size", int), ("--fuglede-size", int),
               ("--budget-scale", float), ("--workers", int), ("--delta", float)],
        sharpness=[("--eps-grid", str)],
        scan=[("--M", int), ("--step", float), ("--delta", float)],
        derive=[("--profile", str), ("--direction", str), ("--functionals", str)],
        trace=[("--n", int), ("--t", str), ("--weight", str)],
    )
    for name, extra in flags.items():
        sp = sub.add_parser(name, parents=[common], help=HELP[name])
        for flag, typ in extra:
            sp.add_argument(flag, type=typ)
        if name == "audit":
            sp.add_argument("--only", action="append", help="restrict to an inequality group")
    return p


def main(argv=None) -> int:
    from .ball_spectrum import BesselConvergenceError, SpectrumDepthError
    from .dirichlet_solver import SolverError
    try:
        args = build_parser().parse_args(argv)
        cfg = RunConfig()
        if args.config:
            cfg.update(read_config_file(args.config))
        if os.environ.get("NEARBALL_OUT"):
            cfg.out = os.environ["NEARBALL_OUT"]
        overrides = {k.replace("-", "_"): v for k, v in vars(args).items()
                     if k not in ("command", "config") and v is not None}
        if "only" in overrides:
            overrides["only"] = [g for item in overrides["only"] for g in _strs(item)]
        cfg.update(overrides)
        cfg.validate(args.command)
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"nearball: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SolverError, BesselConvergenceError, SpectrumDepthError, ArithmeticError,
            np.linalg.LinAlgError) as exc:
        print(f"nearball: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OverflowError as exc:
        print(f"nearball: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"nearball: invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
