"""Command line interface: ``npme <command> [options]``."""

from __future__ import annotations

import argparse
import copy
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig, load_config
from .errors import EXIT_CODES, CheckFailure, ConfigError, NPMEError

COMMANDS = {
    "forward": "solve the parabolic problem for the configured exterior datum",
    "elliptic": "solve the exterior Dirichlet problem for L_K with the configured profile",
    "dn": "synthesize DN records over the amplitude list and the T0 pair",
    "invert": "recover the kernel, then rho and q, from DN records",
    "verify": "run the property suite and write a pass/fail report",
    "sweep": "transform and remainder norms over the amplitude list",
}


def _epilog():
    lines = ["exit codes:"] + [f"  {k}  {v}" for k, v in sorted(EXIT_CODES.items())]
    lines.append("")
    lines.append("outputs go to <out>/<config-hash>/stage-<command>/ with manifest.json at <out>/<config-hash>/")
    return "\n".join(lines)


def _common(suppress: bool) -> argparse.ArgumentParser:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--config", default=d(None), help="TOML configuration (default: built-in reference)")
    g.add_argument("--out", default=d("runs"), help="output root directory (default: runs)")
    g.add_argument("--seed", type=_u64, default=d(None), help="override the configuration seed (unsigned 64-bit)")
    g.add_argument("--threads", type=_positive_int, default=d(1), help="worker threads for independent forward solves")
    g.add_argument("--noise", type=_nonneg_float, default=d(0.0), help="std. dev. of additive Gaussian noise on DN pairings")
    return p


def _u64(text):
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _nonneg_float(text):
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError("must be a nonnegative number")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="npme",
        description="Nonlocal porous medium equation: forward solves, DN data and coefficient recovery.",
        epilog=_epilog(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
        parents=[_common(False)],
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command", required=True)
    for name, help_text in COMMANDS.items():
        sp = sub.add_parser(
            name,
            help=help_text,
            description=help_text,
            epilog=_epilog(),
            formatter_class=argparse.RawDescriptionHelpFormatter,
            parents=[_common(True)],
        )
        if name == "invert":
            sp.add_argument("--records", help="DN records JSON (default: the dn stage output of this configuration)")
        if name == "verify":
            sp.add_argument("--criteria", type=lambda s: [int(c) for c in s.split(",") if c], help="comma-separated criteria, e.g. 1,2,3 (default: all)")
    return parser


def resolve_config(path, seed) -> ExperimentConfig:
    cfg = load_config(path)
    if seed is not None:
        raw = copy.deepcopy(cfg.raw)
        raw["seed"] = int(seed)
        cfg = ExperimentConfig(raw)
    return cfg


class _Run:
    def __init__(self, cfg: ExperimentConfig, out: str, stage: str):
        self.cfg = cfg
        self.root = Path(out) / cfg.hash()
        self.dir = self.root / f"stage-{stage}"
        self.dir.mkdir(parents=True, exist_ok=True)
        self.stage = stage
        (self.root / "config.toml").write_text(cfg.to_toml(), encoding="utf-8")
        self.t0 = time.perf_counter()

    def finish(self, paths, checks):
        from .io import update_manifest

        update_manifest(self.root, self.cfg, self.stage, paths, time.perf_counter() - self.t0, checks, __version__)
        failed = [k for k, v in checks.items() if not v["passed"]]
        for k, v in checks.items():
            print(f"{'PASS' if v['passed'] else 'FAIL'}  {k}: {v['value']:.6g} ({v['threshold']})")
        print(f"outputs in {self.dir}")
        if failed:
            raise CheckFailure(f"{len(failed)} check(s) failed: {', '.join(failed)}")


def _check(value, passed, threshold):
    return {"value": float(value) + 0.0, "passed": bool(passed), "threshold": threshold}


def cmd_forward(args, cfg):
    from .forward import solve_parabolic_limit
    from .io import write_field
    from .pipeline import build_scenario

    run = _Run(cfg, args.out, "forward")
    sc = build_scenario(cfg)
    sv = cfg.solver
    datum = cfg.forward_datum(sc.geom)
    T = float(sv["T"])
    u = solve_parabolic_limit(
        sc.geom, sc.forms, sc.coeffs, sc.law, datum, None, n_steps=int(sv["n_steps"]), T=T,
        k_min=int(sv["eps_k_min"]), k_max=int(sv["eps_k_max"]), newton=cfg.newton(),
    )
    bound = max(float(np.max([datum.u_values(t, sc.law).max() for t in u.t])), 0.0)
    checks = {
        "maximum principle overshoot": _check(u.values.max() - bound, u.values.max() - bound <= 1e-4, "<= 1e-4"),
        "nonnegativity undershoot": _check(-u.values.min(), -u.values.min() <= 1e-4, "<= 1e-4"),
        "Newton residual": _check(u.meta["max_newton_residual"], u.meta["max_newton_residual"] <= float(sv["newton_accept"]), f"<= {sv['newton_accept']:g}"),
    }
    paths = write_field(run.dir / "u", sc.geom.x, u)
    run.finish(paths, checks)


def cmd_elliptic(args, cfg):
    from .forward import solve_elliptic
    from .io import write_csv
    from .pipeline import build_scenario

    run = _Run(cfg, args.out, "elliptic")
    sc = build_scenario(cfg)
    prof = cfg.forward_datum(sc.geom).profile
    V = solve_elliptic(sc.geom, sc.forms, f=prof)
    top = float(prof.max())
    checks = {
        "maximum principle": _check(V.max() - top, V.max() <= top + 1e-10, "<= max profile + 1e-10"),
        "nonnegativity": _check(-V.min(), V.min() >= -1e-10, ">= -1e-10"),
    }
    paths = [write_csv(run.dir / "V0.csv", ["x", "V0"], zip(sc.geom.x, V))]
    run.finish(paths, checks)


def cmd_dn(args, cfg):
    from .io import write_records
    from .pipeline import build_scenario, measure

    run = _Run(cfg, args.out, "dn")
    sc = build_scenario(cfg)
    records = measure(sc, threads=args.threads, noise=args.noise, seed=cfg.seed)
    bad = sum(1 for r in records if not np.isfinite(r.pairing))
    paths = write_records(run.dir / "records", records)
    run.finish(paths, {"finite pairings": _check(bad, bad == 0, "0 failed solves")})


def cmd_invert(args, cfg):
    from .io import read_records, write_csv, write_json
    from .pipeline import FAMILIES, build_scenario, invert

    src = Path(args.records) if args.records else Path(args.out) / cfg.hash() / "stage-dn" / "records.json"
    if not src.exists():
        raise ConfigError(f"records file {src} not found; run 'npme dn' first or pass --records")
    run = _Run(cfg, args.out, "invert")
    records = read_records(src)
    sc = build_scenario(cfg)
    r1, r2, ex = invert(sc, records)
    family = FAMILIES[cfg.inversion["family"]]
    i = sc.geom.interior
    x = sc.geom.x
    paths = [
        write_json(run.dir / "recovery.json", {"stage1": r1.to_dict(), "stage2": r2.to_dict(), "T0": ex["T0"], "records": str(src)}),
        write_csv(run.dir / "coefficients.csv", ["x", "rho_true", "rho_hat", "q_true", "q_hat"],
                  zip(x[i], sc.coeffs.rho[i], r2.rho_hat, sc.coeffs.q[i], r2.q_hat)),
    ]
    g_true = cfg._values(cfg.gamma_field, x) if cfg.physics["kernel"] == "conductivity" else np.ones_like(x)
    g_hat = family.gamma(r1.theta)(x)
    paths.append(write_csv(run.dir / "kernel.csv", ["x", "gamma_true", "gamma_hat"], zip(x, g_true, g_hat)))
    er = float(np.linalg.norm(r2.rho_hat - sc.coeffs.rho[i]) / np.linalg.norm(sc.coeffs.rho[i]))
    eq_den = np.linalg.norm(sc.coeffs.q[i])
    eq = float(np.linalg.norm(r2.q_hat - sc.coeffs.q[i]) / eq_den) if eq_den > 0 else float(np.linalg.norm(r2.q_hat))
    eg = float(np.abs(g_hat - g_true).max() / np.abs(g_true).max())
    checks = {
        "stage-1 kernel sup error vs configured truth": _check(eg, eg <= 0.10, "<= 0.10"),
        "stage-2 rho L2 error vs configured truth": _check(er, er <= 0.15, "<= 0.15"),
        "stage-2 q L2 error vs configured truth": _check(eq, eq <= 0.15, "<= 0.15"),
    }
    run.finish(paths, checks)


def cmd_verify(args, cfg):
    from .checks import report_json, run_suite
    from .io import write_csv

    run = _Run(cfg, args.out, "verify")
    rows = run_suite(cfg, getattr(args, "criteria", None), threads=args.threads)
    report = run.dir / "report.json"
    report.write_text(report_json(rows, cfg), encoding="utf-8")
    table = write_csv(run.dir / "report.csv", ["criterion", "name", "passed", "value", "threshold"],
                      ([r.criterion, r.name, r.passed, r.value, r.threshold] for r in rows))
    by_crit = {}
    for r in rows:
        by_crit.setdefault(r.criterion, []).append(r.passed)
    for r in rows:
        print(f"{'PASS' if r.passed else 'FAIL'}  [{r.criterion}] {r.name}: {r.value:.6g} ({r.threshold})")
    checks = {f"criterion {c}": {"value": float(all(v)), "passed": all(v), "threshold": "all rows pass"} for c, v in sorted(by_crit.items())}
    run.finish([report, table], checks)


def cmd_sweep(args, cfg):
    from .io import write_csv, write_json
    from .pipeline import build_scenario, remainder_sweep

    run = _Run(cfg, args.out, "sweep")
    sc = build_scenario(cfg)
    sw = remainder_sweep(sc, cfg.measurement["h_list"])
    keys = list(sw["rows"][0])
    paths = [
        write_csv(run.dir / "rates.csv", keys, ([r[k] for k in keys] for r in sw["rows"])),
        write_json(run.dir / "rates.json", sw),
    ]
    rates = sw["rates"]
    checks = {
        "R1 slope": _check(rates["slope_R1"], rates["pass_R1"], f"<= {rates['expected_R1'] + 0.15:g}"),
        "R2 slope": _check(rates["slope_R2"], rates["pass_R2"], f"<= {rates['expected_R2'] + 0.2:g}"),
    }
    run.finish(paths, checks)


HANDLERS = {
    "forward": cmd_forward,
    "elliptic": cmd_elliptic,
    "dn": cmd_dn,
    "invert": cmd_invert,
    "verify": cmd_verify,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args.config, args.seed)
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            HANDLERS[args.command](args, cfg)
    except NPMEError as exc:
        print(f"error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # anything else is a bug or an environment failure
        print(f"internal error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
