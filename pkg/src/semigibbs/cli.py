"""Command-line experiment runner.

Exit status: 0 on success, 1 when a computation fails, 2 for config errors.
Artifacts are staged as temporary files and renamed into place only after
the whole run succeeds.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
import traceback
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .errors import ConfigError, SemigibbsError

log = logging.getLogger("semigibbs")

THREADS_ENV = "SEMIGIBBS_THREADS"
SUBCOMMANDS = ("partition", "entropy-convergence", "free-energy", "gamma-upper", "lattice-divergence", "check-invariants")


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def csv_text(fields, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for r in rows:
        w.writerow([_fmt(r[f]) for f in fields])
    return buf.getvalue()


class Staging:
    """Collects artifacts in temp files; commit renames them, abort removes them."""

    def __init__(self, outdir: Path):
        self.outdir = outdir
        self.pending: list[tuple[Path, Path]] = []

    def add(self, name: str, text: str) -> None:
        self.outdir.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=f".{name}.", dir=self.outdir)
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        self.pending.append((Path(tmp), self.outdir / name))

    def commit(self) -> list[str]:
        for tmp, final in self.pending:
            os.replace(tmp, final)
        return [str(final) for _, final in self.pending]

    def abort(self) -> None:
        for tmp, _ in self.pending:
            tmp.unlink(missing_ok=True)


# subcommands ------------------------------------------------------------------


def run_partition(cfg: ExperimentConfig):
    from .free_energy import partition_table

    rows = partition_table(cfg.symbol(), float(cfg.beta), cfg.floats(cfg.eps_list), float(cfg.tol_truncation))
    fields = ["eps", "n_max", "Z_scaled", "Z_classical", "Z_upper", "err"]
    return fields, rows, {}


def run_entropy(cfg: ExperimentConfig):
    from .free_energy import ConvergenceRow, entropy_convergence_experiment, phase_grid

    h = cfg.symbol()
    beta = float(cfg.beta)
    grid = None
    if cfg.spacing is not None:
        grid = phase_grid(h, beta, float(cfg.eps_list[0]), float(cfg.spacing))
    rows = entropy_convergence_experiment(h, beta, cfg.floats(cfg.eps_list), grid=grid,
                                          tol=float(cfg.tol_truncation), k_list=cfg.moments)
    fields = list(ConvergenceRow.CSV_FIELDS) + [f"A_norm_{k}" for k in cfg.moments]
    out = []
    for r in rows:
        d = r.as_dict()
        d.update({f"A_norm_{k}": r.extras[f"A_norm_{k}"] for k in cfg.moments})
        out.append(d)
    return fields, out, {"S_B_target": rows[0].S_B_target if rows else None}


def run_free_energy(cfg: ExperimentConfig):
    from .free_energy import entropy_convergence_experiment, gamma_lower_report

    h = cfg.symbol()
    beta = float(cfg.beta)
    rows = entropy_convergence_experiment(h, beta, cfg.floats(cfg.eps_list), tol=float(cfg.tol_truncation))
    out = []
    for r in rows:
        out.append({
            "eps": r.eps, "n_max": r.n_max,
            "F_vN_renorm": r.F_vN_renorm, "F_W_renorm": r.F_W_renorm, "F_B_target": r.F_B_target,
            "err_vN": abs(r.F_vN_renorm - r.F_B_target), "err_W": abs(r.F_W_renorm - r.F_B_target),
            "F_vN_rel": r.extras["F_vN_rel"], "F_W_rel": r.extras["F_W_rel"],
        })
    fields = ["eps", "n_max", "F_vN_renorm", "F_W_renorm", "F_B_target", "err_vN", "err_W", "F_vN_rel", "F_W_rel"]
    extra = {}
    if cfg.beta_state is not None:
        extra["gamma_lower"] = gamma_lower_report(h, beta, float(cfg.beta_state), cfg.floats(cfg.eps_list))
    return fields, out, extra


def run_gamma_upper(cfg: ExperimentConfig):
    from .free_energy import recovery_sweep

    h = cfg.symbol()
    rows = recovery_sweep(cfg.center(), float(cfg.recovery_s), cfg.floats(cfg.recovery_eps), h=h)
    fields = ["eps", "n_max", "husimi_err", "S_W_renorm", "S_B", "gap", "energy", "energy_classical"]
    return fields, rows, {}


def run_lattice(cfg: ExperimentConfig):
    from .lattice import divergence_experiment

    if cfg.d != 1:
        raise ConfigError("lattice-divergence runs in one mode (model.d = 1)")
    sigma = float(cfg.sigma)

    def f(x):
        x = np.real(np.asarray(x)).reshape(-1)
        return np.exp(-x**2 / (2 * sigma**2)) / math.sqrt(2 * math.pi * sigma**2)

    s_b = 0.5 * math.log(2 * math.pi * math.e * sigma**2)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = divergence_experiment(f, float(cfg.delta), cfg.M_list, h=cfg.symbol(), beta=float(cfg.beta), S_B=s_b)
    for w in caught:
        log.warning("%s", w.message)
    fields = ["M", "eps", "n_max", "S_vN", "S_rel", "renormalized", "formula", "gram_defect", "admissible", "energy"]
    extra = {k: res[k] for k in ("slope", "intercept", "expected_slope", "dropped", "S_B")}
    extra["slope_report"] = [{k: r[k] for k in ("M", "eps", "S_vN", "S_rel", "renormalized")} for r in res["rows"]]
    return fields, res["rows"], extra


def run_invariants(cfg: ExperimentConfig):
    from .invariants import run_suite

    checks = run_suite(cfg.symbol(), float(cfg.beta), cfg.floats(cfg.eps_list), seed=cfg.seed,
                       n_random=cfg.n_random,
                       progress=lambda c: log.info("%-34s %s  %.6g", c.name, "PASS" if c.passed else "FAIL", c.value))
    rows = [{"name": c.name, "passed": c.passed, "value": c.value, "detail": c.detail} for c in checks]
    failed = [c.name for c in checks if not c.passed]
    return ["name", "passed", "value", "detail"], rows, {"failed": failed}


RUNNERS = {
    "partition": run_partition,
    "entropy-convergence": run_entropy,
    "free-energy": run_free_energy,
    "gamma-upper": run_gamma_upper,
    "lattice-divergence": run_lattice,
    "check-invariants": run_invariants,
}


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, complex):
        return [o.real, o.imag]
    return str(o)


def _threads():
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"{THREADS_ENV} must be >= 1")
    return n


def _raised_in(exc: BaseException) -> str:
    """Innermost package module on the traceback."""
    where = "semigibbs"
    for frame, _ in traceback.walk_tb(exc.__traceback__):
        name = frame.f_globals.get("__name__", "")
        if name.startswith("semigibbs"):
            where = name
    return where.replace("semigibbs.", "")


def execute(command: str, cfg: ExperimentConfig, outdir: Path) -> list[str]:
    from threadpoolctl import threadpool_limits

    from .states import calibrate_kappa

    threads = _threads()
    stage = Staging(outdir)
    try:
        with threadpool_limits(limits=threads):
            fields, rows, extra = RUNNERS[command](cfg)
        stem = f"{cfg.prefix}_{command.replace('-', '_')}"
        stage.add(f"{stem}.csv", csv_text(fields, rows))
        manifest = {
            "command": command,
            "version": __version__,
            "config_hash": cfg.config_hash(),
            "config": json.loads(cfg.canonical_json()),
            "tolerances": {"truncation": float(cfg.tol_truncation), "identity": float(cfg.tol_identity)},
            "kappa": calibrate_kappa(),
            "threads": threads,
            "rows": len(rows),
            "results": extra,
        }
        stage.add(f"{stem}.json", json.dumps(manifest, indent=2, sort_keys=True, default=_json_default) + "\n")
    except BaseException:
        stage.abort()
        raise
    written = stage.commit()
    if command == "check-invariants" and extra["failed"]:
        raise SemigibbsError(f"invariants failed: {', '.join(extra['failed'])}")
    return written


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="semigibbs", description="Semiclassical Gibbs-state experiments")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("config", type=Path, help="TOML experiment config")
        sp.add_argument("--out", type=Path, default=None, help="output directory (overrides the config)")
        sp.add_argument("--dry-run", action="store_true", help="validate the config and exit")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = ExperimentConfig.load(args.config)
        _threads()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.dry_run:
        print(f"config ok ({cfg.config_hash()[:12]})")
        return 0
    outdir = args.out if args.out is not None else Path(cfg.output_dir)
    try:
        written = execute(args.command, cfg, outdir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (SemigibbsError, ArithmeticError, np.linalg.LinAlgError, MemoryError) as exc:
        where = _raised_in(exc)
        print(f"{args.command} failed in {where}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
