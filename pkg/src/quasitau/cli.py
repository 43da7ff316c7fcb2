"""Command line entry point: ``quasitau compute | verify | convergence``.

Exit status: 0 when every check passes, 1 when a residual exceeds its
tolerance, 2 for configuration or usage errors, 3 for a numerical
breakdown such as a singular truncation.
"""

from __future__ import annotations

import csv
from dataclasses import replace
import json
import sys
import time

import click
import numpy as np

from . import __version__
from .blockmat import BlockMatrix, block_diag, dump_block_matrix
from .config import SUITE_NAMES, RunConfig, default_config, load_config
from .errors import ConfigError, QuasitauError, SingularPivot, SingularTruncation, StencilInstability
from .mvopr import build_system, jacobi_matrix
from .suites import Check, SuiteContext, run_suite
from . import toda as td

REPORT_SCHEMA = 1
EXIT_OK, EXIT_FAIL, EXIT_BREAKDOWN = 0, 1, 3  # usage and config errors exit 2 via click
BREAKDOWN = (SingularTruncation, SingularPivot, StencilInstability)
DEFAULT_SWEEP = "1e-3,5e-4,2.5e-4"


def _load(config_path, level, quad_order, seed, suite, out) -> RunConfig:
    try:
        cfg = load_config(config_path) if config_path else default_config()
        return cfg.with_overrides(levels=level, quadrature_order=quad_order, seed=seed, suites=suite, output=out)
    except ConfigError as exc:
        raise click.UsageError(str(exc)) from None


def common_options(func):
    options = [
        click.option("--config", "config_path", type=click.Path(dir_okay=False), help="YAML run configuration."),
        click.option("--suite", help=f"Comma-separated suites: {', '.join(SUITE_NAMES)}."),
        click.option("--out", type=click.Path(file_okay=False), help="Output directory."),
        click.option("--seed", type=click.IntRange(0, 2 ** 64 - 1), help="Seed for sample points and nodes."),
        click.option("--quad-order", type=int, help="Quadrature nodes per axis."),
        click.option("--level", type=int, help="Truncation level count L."),
    ]
    for option in reversed(options):
        func = option(func)
    return func


@click.group()
@click.version_option(__version__)
def main():
    """Build and verify multivariate orthogonal polynomial systems."""


def _row(suite: str, check: Check, millis: int) -> dict:
    finite = bool(np.isfinite(check.residual))
    return {
        "suite": suite,
        "identity": check.identity,
        "paper_anchor": check.anchor,
        "levels": check.levels,
        "residual": check.residual if finite else None,
        "tolerance": check.tolerance,
        "pass": check.passed,
        "millis": millis,
    }


def _error_row(suite: str, exc: Exception, levels: int) -> dict:
    return {
        "suite": suite,
        "identity": f"suite error: {type(exc).__name__}: {exc}",
        "paper_anchor": "",
        "levels": levels,
        "residual": None,
        "tolerance": None,
        "pass": False,
        "millis": 0,
    }


def run_verification(cfg: RunConfig, timing: bool = False) -> tuple[list[dict], int]:
    """Run the configured suites; a failing suite does not stop the others."""
    rows: list[dict] = []
    breakdown = False
    for name in sorted(cfg.suites):
        start = time.perf_counter()
        try:
            checks = run_suite(cfg, name)
        except BREAKDOWN as exc:
            breakdown = True
            rows.append(_error_row(name, exc, cfg.levels))
            continue
        except (QuasitauError, ValueError, np.linalg.LinAlgError) as exc:
            rows.append(_error_row(name, exc, cfg.levels))
            continue
        millis = round(1000 * (time.perf_counter() - start)) if timing else 0
        rows.extend(_row(name, c, millis) for c in checks)
    rows.sort(key=lambda r: (r["suite"], r["identity"]))
    if breakdown:
        status = EXIT_BREAKDOWN
    elif all(r["pass"] for r in rows):
        status = EXIT_OK
    else:
        status = EXIT_FAIL
    return rows, status


def report_document(cfg: RunConfig, rows: list[dict]) -> dict:
    return {
        "schema_version": REPORT_SCHEMA,
        "dimension": cfg.dimension,
        "levels": cfg.levels,
        "seed": cfg.seed,
        "suites": sorted(cfg.suites),
        "rows": rows,
    }


def _summary(rows: list[dict]) -> str:
    lines = [f"{'suite':<14} {'identity':<58} {'residual':>10} {'tol':>8}  result"]
    for r in rows:
        res = "nan" if r["residual"] is None else f"{r['residual']:.2e}"
        tol = "-" if r["tolerance"] is None else f"{r['tolerance']:.0e}"
        lines.append(f"{r['suite']:<14} {r['identity'][:58]:<58} {res:>10} {tol:>8}  {'pass' if r['pass'] else 'FAIL'}")
    passed = sum(r["pass"] for r in rows)
    lines.append(f"{passed}/{len(rows)} checks passed")
    return "\n".join(lines)


@main.command()
@common_options
@click.option("--tolerance-scale", type=float, help="Multiply every tolerance by this factor.")
@click.option("--timing/--no-timing", default=False,
              help="Record wall-clock millis per suite (makes reports run-dependent).")
def verify(config_path, suite, out, seed, quad_order, level, tolerance_scale, timing):
    """Run identity suites and write report.json to the output directory."""
    cfg = _load(config_path, level, quad_order, seed, suite, out)
    if tolerance_scale is not None:
        if tolerance_scale <= 0:
            raise click.UsageError("--tolerance-scale must be positive")
        cfg = replace(cfg, tolerance_scale=tolerance_scale)
    rows, status = run_verification(cfg, timing)
    cfg.output.mkdir(parents=True, exist_ok=True)
    path = cfg.output / "report.json"
    path.write_text(json.dumps(report_document(cfg, rows), indent=2, sort_keys=True) + "\n")
    click.echo(_summary(rows))
    click.echo(f"report written to {path}")
    sys.exit(status)


def _beta_matrix(system) -> BlockMatrix:
    data = np.zeros_like(system.S.data)
    off = system.offsets
    for k in range(1, system.levels):
        data[off[k]:off[k + 1], off[k - 1]:off[k]] = system.beta[k]
    return BlockMatrix(data, system.S.row_sizes)


@main.command()
@common_options
def compute(config_path, suite, out, seed, quad_order, level):
    """Factorize the configured measure and dump H, beta, S and Jacobi blocks."""
    cfg = _load(config_path, level, quad_order, seed, suite, out)
    try:
        system = build_system(cfg.spec, cfg.state, cfg.levels, cfg.buffer, cfg.quadrature_order)
        jacobi = [jacobi_matrix(system, e) for e in np.eye(cfg.dimension)]
    except QuasitauError as exc:
        click.echo(f"numerical breakdown: {exc}", err=True)
        sys.exit(EXIT_BREAKDOWN)
    cfg.output.mkdir(parents=True, exist_ok=True)
    dim = cfg.dimension
    files = {
        "H": block_diag(system.H),
        "beta": _beta_matrix(system),
        "S": system.S,
    }
    files.update({f"J{a}": j.J for a, j in enumerate(jacobi)})
    index = {"schema_version": REPORT_SCHEMA, "dimension": dim, "levels": cfg.levels, "files": {},
             "H_blocks": [h.tolist() for h in system.H]}
    for name, matrix in files.items():
        path = cfg.output / f"{name}.txt"
        path.write_text(dump_block_matrix(matrix, dim))
        index["files"][name] = path.name
    (cfg.output / "index.json").write_text(json.dumps(index, indent=2, sort_keys=True) + "\n")
    click.echo(f"wrote {len(files)} dumps and index.json to {cfg.output}")


def _sweep_values(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise click.UsageError(f"--steps must be comma-separated numbers, got {text!r}") from None
    if not values:
        raise click.UsageError("--steps needs at least one step size")
    if any(v <= 0 for v in values):
        raise click.UsageError("step sizes must be positive")
    return values


def _fd_sweep(cfg: RunConfig, suite: str, steps: list[float]) -> list[tuple[str, str, float, float]]:
    """Plain central differences (no Richardson) at each h for the
    finite-difference identities of the lax and toda suites."""
    ctx = SuiteContext(cfg, suite)
    engine = ctx.engine()
    k = min(2, cfg.levels - 1)
    out = []
    for h in steps:
        if suite == "toda":
            out.append((suite, f"dbeta_{k}/dt_0 defect", h, td.beta_derivative_defect(engine, 0, k, h)))
        else:
            res = td.lax_residuals(engine, 0, step=h, richardson=False)
            for key in ("lax_S", "beta", "H"):
                out.append((suite, key, h, res[key]))
    return out


def _slope(points: list[tuple[float, float]]) -> float:
    hs, rs = zip(*points)
    if len(hs) < 2 or min(rs) <= 0:
        return float("nan")
    return float(np.polyfit(np.log(hs), np.log(rs), 1)[0])


@main.command()
@common_options
@click.option("--steps", default=DEFAULT_SWEEP, show_default=True, help="Comma-separated step sizes h.")
def convergence(config_path, suite, out, seed, quad_order, level, steps):
    """Residual against step size h, written to convergence.csv.

    Finite-difference identities (lax, toda) are recomputed at each h;
    exact identities are evaluated once and repeated, so they show a flat
    noise floor."""
    hs = _sweep_values(steps)
    cfg = _load(config_path, level, quad_order, seed, suite, out)
    rows: list[tuple[str, str, float, float]] = []
    for name in sorted(cfg.suites):
        try:
            if name in ("lax", "toda"):
                rows.extend(_fd_sweep(cfg, name, hs))
            else:
                for check in run_suite(cfg, name):
                    rows.extend((name, check.identity, h, check.residual) for h in hs)
        except BREAKDOWN as exc:
            click.echo(f"numerical breakdown in {name}: {exc}", err=True)
            sys.exit(EXIT_BREAKDOWN)
    cfg.output.mkdir(parents=True, exist_ok=True)
    path = cfg.output / "convergence.csv"
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["suite", "identity", "h", "residual"])
        for row in rows:
            writer.writerow([row[0], row[1], repr(row[2]), repr(row[3])])
    grouped: dict[tuple[str, str], list[tuple[float, float]]] = {}
    for s, ident, h, r in rows:
        grouped.setdefault((s, ident), []).append((h, r))
    click.echo(f"{'suite':<14} {'identity':<58} {'slope':>7}")
    for (s, ident), pts in grouped.items():
        click.echo(f"{s:<14} {ident[:58]:<58} {_slope(pts):>7.2f}")
    click.echo(f"table written to {path}")


if __name__ == "__main__":
    main()
