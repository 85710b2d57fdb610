"""Command-line surface: one binary, one subcommand per experiment.

Conventions shared by every subcommand: datum files are UTF-8 JSON
(see ``blnum.core``), all randomness is funneled through seeded Philox
streams so identical invocations produce byte-identical artifacts, CSV
uses comma separators and ``.`` decimals with no locale dependence, and
exit codes are a total function of the result status:

    0  success (compute: converged or boundary_plateau)
    1  parse or validation error
    2  diverging result (compute), failed traces (certify),
       diverging base datum (stability)
    3  undetermined (iteration budget or multi-start disagreement)
"""

from __future__ import annotations

import json
import math
import sys
from pathlib import Path

import click
import numpy as np

from . import core, finiteness, frames, gaussopt, kakeya, nonlinear
from .rng import stream

_STATUS_EXIT = {"converged": 0, "boundary_plateau": 0, "diverging": 2}


def _fail(message, code=1):
    click.echo("error: %s" % message, err=True)
    sys.exit(code)


def _load_valid_datum(path, policy):
    try:
        datum = core.load_datum(path)
    except (OSError, core.DatumFormatError) as exc:
        _fail(str(exc))
    report = core.validate_datum(datum, policy)
    if not report.ok:
        for code_, j, detail in report.violations:
            click.echo("violation %s (map %s): %s" % (code_, j, detail), err=True)
        _fail("datum failed validation")
    return datum


def _policy_from(tol, max_iter):
    kwargs = {}
    if tol is not None:
        kwargs["conv_tol"] = tol
    if max_iter is not None:
        kwargs["max_iter"] = max_iter
    return core.NumericPolicy(**kwargs)


def _load_matrix(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh, parse_constant=core._reject_constant)
    except (OSError, json.JSONDecodeError, core.DatumFormatError) as exc:
        _fail("cannot read matrix file %s: %s" % (path, exc))
    return np.asarray(obj, dtype=float)


def _mode_from(name, gfile):
    if name == "global":
        return gaussopt.GLOBAL
    if name == "unitball":
        return gaussopt.UNIT_BALL
    if gfile is None:
        _fail("partial mode requires --gfile")
    return gaussopt.partial_mode(_load_matrix(gfile))


def _write_text(path, text):
    Path(path).write_text(text, encoding="utf-8")


def _csv_line(values):
    parts = []
    for v in values:
        if isinstance(v, float):
            parts.append(repr(v))
        else:
            parts.append(str(v))
    return ",".join(parts)


def _emit(out, text):
    if out:
        _write_text(out, text)
    else:
        click.echo(text, nl=False)


@click.group()
def main():
    """Numerical experiments around Brascamp-Lieb constants."""


@main.command()
@click.option("--datum", "datum_path", required=True, type=click.Path(exists=True))
@click.option("--mode", type=click.Choice(["global", "unitball", "partial"]), default="global")
@click.option("--gfile", type=click.Path(exists=True), default=None, help="PSD matrix JSON for partial mode")
@click.option("--tol", type=float, default=None, help="convergence tolerance override")
@click.option("--max-iter", type=int, default=None)
@click.option("--starts", type=int, default=1, help="number of optimizer starts (identity + random)")
@click.option("--seed", type=int, default=0)
@click.option("--out", type=click.Path(), default=None)
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="json")
def compute(datum_path, mode, gfile, tol, max_iter, starts, seed, out, fmt):
    """Optimize the Gaussian quotient and report the constant."""
    policy = _policy_from(tol, max_iter)
    datum = _load_valid_datum(datum_path, policy)
    loc = _mode_from(mode, gfile)
    try:
        result = gaussopt.compute_bl_multistart(datum, loc, policy, starts=starts, seed=seed)
    except gaussopt.UndeterminedError as exc:
        click.echo("undetermined: %s" % exc, err=True)
        sys.exit(3)
    except ValueError as exc:
        _fail(str(exc))
    value_text = "inf" if not math.isfinite(result.value) else "%.6f" % result.value
    click.echo("status=%s value=%s iterations=%d" % (result.status, value_text, result.iterations))
    if out:
        if fmt == "json":
            _write_text(out, json.dumps(result.to_dict(), sort_keys=True) + "\n")
        else:
            lines = ["status,value,iterations,grad_norm"]
            lines.append(_csv_line([result.status, result.value, result.iterations, result.grad_norm]))
            _write_text(out, "\n".join(lines) + "\n")
    sys.exit(_STATUS_EXIT[result.status])


@main.command("finiteness")
@click.option("--datum", "datum_path", required=True, type=click.Path(exists=True))
@click.option("--mode", type=click.Choice(["global", "localized", "partial"]), default="global")
@click.option("--gfile", type=click.Path(exists=True), default=None)
@click.option("--budget", type=int, default=32)
@click.option("--seed", type=int, required=True)
@click.option("--out", type=click.Path(), default=None)
def finiteness_cmd(datum_path, mode, gfile, budget, seed, out):
    """Search for subspaces violating the finiteness conditions."""
    policy = core.DEFAULT_POLICY
    datum = _load_valid_datum(datum_path, policy)
    try:
        if mode == "partial":
            if gfile is None:
                _fail("partial mode requires --gfile")
            loc = finiteness.PartialLocalization.from_matrix(_load_matrix(gfile), policy)
            report = finiteness.check_partial(datum, loc, budget=budget, seed=seed, policy=policy)
        else:
            report = finiteness.search_critical_subspaces(
                datum, mode=mode, budget=budget, seed=seed, policy=policy
            )
    except ValueError as exc:
        _fail(str(exc))
    click.echo("verdict=%s min_slack=%.9g scaling_slack=%.9g method=%s"
               % (report.verdict, report.min_slack, report.scaling_slack, report.method))
    if report.witness is not None:
        click.echo("witness basis columns:")
        for row in report.witness.basis:
            click.echo("  " + " ".join("%+.6f" % x for x in row))
    if out:
        _write_text(out, report.to_json() + "\n")
    sys.exit(0)


@main.command()
@click.option("--datum", "datum_path", required=True, type=click.Path(exists=True))
@click.option("--radius", type=float, required=True)
@click.option("--samples", type=int, default=200)
@click.option("--seed", type=int, required=True)
@click.option("--mode", type=click.Choice(["global", "unitball"]), default="global")
@click.option("--tol", type=float, default=None)
@click.option("--max-iter", type=int, default=None)
@click.option("--out", type=click.Path(), default=None)
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="csv")
def stability(datum_path, radius, samples, seed, mode, tol, max_iter, out, fmt):
    """Re-optimize under random operator-norm perturbations of the maps."""
    policy = _policy_from(tol, max_iter)
    datum = _load_valid_datum(datum_path, policy)
    loc = _mode_from(mode, None)
    base = gaussopt.compute_bl(datum, loc, policy)
    if base.status == "diverging":
        _fail("base datum diverges; stability sweep needs a finite base", code=2)
    rows = []
    values = []
    statuses = []
    for s in range(samples):
        rng = stream(seed, s)
        perturbed = _perturb_datum(datum, radius, rng)
        try:
            res = gaussopt.compute_bl(datum.__class__(datum.n, perturbed, datum.exponents), loc, policy)
            value, status = res.value, res.status
        except gaussopt.UndeterminedError:
            value, status = math.nan, "undetermined"
        rows.append((s, value, status))
        values.append(value)
        statuses.append(status)
    finite = [v for v in values if math.isfinite(v)]
    summary = {
        "base_value": base.value,
        "samples": samples,
        "radius": radius,
        "finite": len(finite),
        "non_finite": samples - len(finite),
        "min": min(finite) if finite else None,
        "median": float(np.median(finite)) if finite else None,
        "max": max(finite) if finite else None,
        "sup": math.inf if len(finite) < samples else max(finite),
    }
    click.echo(json.dumps(summary, sort_keys=True, default=str))
    if out:
        if fmt == "csv":
            lines = ["sample,value,status"]
            lines += [_csv_line(r) for r in rows]
            _write_text(out, "\n".join(lines) + "\n")
        else:
            _write_text(out, json.dumps({"summary": summary, "rows": rows}, sort_keys=True, default=str) + "\n")
    sys.exit(0)


def _perturb_datum(datum, radius, rng, max_tries=10000):
    """Per-map perturbations uniform on the operator-norm ball, via rejection."""
    new_maps = []
    for mp in datum.maps:
        if radius == 0.0:
            new_maps.append(mp)
            continue
        delta = None
        for _ in range(max_tries):
            cand = rng.uniform(-radius, radius, size=mp.rows.shape)
            if np.linalg.norm(cand, 2) <= radius:
                delta = cand
                break
        if delta is None:
            raise RuntimeError("operator-ball rejection sampling failed")
        new_maps.append(core.LinearMap(mp.rows + delta))
    return tuple(new_maps)


@main.command()
@click.option("--datum", "datum_path", required=True, type=click.Path(exists=True))
@click.option("--mode", type=click.Choice(["localized", "partial"]), default="localized")
@click.option("--gfile", type=click.Path(exists=True), default=None)
@click.option("--samples", type=int, default=1000, help="frame samples for the c estimate")
@click.option("--a-random", "a_random", type=int, default=100, help="random SPD inputs to certify")
@click.option("--alpha", type=float, default=0.5)
@click.option("--deltahat", type=float, default=0.05)
@click.option("--seed", type=int, required=True)
@click.option("--out", type=click.Path(), default=None, help="trace output, JSON lines")
def certify(datum_path, mode, gfile, samples, a_random, alpha, deltahat, seed, out):
    """Replay the determinant-bound proof on random Gaussian inputs."""
    policy = core.DEFAULT_POLICY
    datum = _load_valid_datum(datum_path, policy)
    if any(p <= 0.0 for p in datum.exponents):
        _fail("certificates require every p_j > 0")
    loc = None
    if mode == "partial":
        if gfile is None:
            _fail("partial mode requires --gfile")
        loc = finiteness.PartialLocalization.from_matrix(_load_matrix(gfile), policy)
        est = frames.estimate_c_partial(datum, loc, alpha=alpha, samples=samples, seed=seed, policy=policy)
    else:
        est = frames.estimate_c(datum, None, alpha=alpha, samples=samples, seed=seed, policy=policy)
    if est.c_hat <= 0.0:
        _fail("estimated c is zero; certificates are vacuous for this datum", code=2)
    ok_count = 0
    lines = []
    for i in range(a_random):
        a = gaussopt.random_gaussian_input(datum, stream(seed, 10_000 + i))
        if mode == "partial":
            trace = frames.certify_partial(datum, loc, a, alpha, est.c_hat, deltahat, policy)
        else:
            trace = frames.certify_localized(datum, a, est.c_hat, policy)
        ok_count += trace.overall_ok
        lines.append(json.dumps(
            {"trace": i, "overall_ok": trace.overall_ok, "constant_used": trace.constant_used},
            sort_keys=True,
        ))
        lines.extend(trace.to_json_lines())
    click.echo("c_hat=%.9g traces_ok=%d/%d" % (est.c_hat, ok_count, a_random))
    if out:
        _write_text(out, "\n".join(lines) + "\n")
    sys.exit(0 if ok_count == a_random else 2)


def _load_config(path, required, optional=()):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh, parse_constant=core._reject_constant)
    except (OSError, json.JSONDecodeError, core.DatumFormatError) as exc:
        _fail("cannot read config %s: %s" % (path, exc))
    if not isinstance(obj, dict):
        _fail("config must be a JSON object")
    unknown = set(obj) - set(required) - set(optional)
    if unknown:
        _fail("unknown config keys: %s" % sorted(unknown))
    missing = set(required) - set(obj)
    if missing:
        _fail("missing config keys: %s" % sorted(missing))
    return obj


@main.command("kakeya")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--delta", type=float, default=None)
@click.option("--nu", type=float, default=None)
@click.option("--trials", type=int, default=None)
@click.option("--grid-res", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--kappa", is_flag=True, default=False, help="measure the two-scale factor instead")
@click.option("--out", type=click.Path(), default=None, help="per-trial CSV output")
def kakeya_cmd(config_path, delta, nu, trials, grid_res, seed, kappa, out):
    """Tube-overlap quadrature experiments from a config file."""
    cfg = _load_config(
        config_path, required=("datum", "delta", "nu", "counts", "grid_res", "trials", "seed")
    )
    base = Path(config_path).parent
    policy = core.DEFAULT_POLICY
    datum = _load_valid_datum(str((base / cfg["datum"])), policy)
    delta = cfg["delta"] if delta is None else delta
    nu = cfg["nu"] if nu is None else nu
    trials = cfg["trials"] if trials is None else trials
    grid_res = cfg["grid_res"] if grid_res is None else grid_res
    seed = cfg["seed"] if seed is None else seed
    counts = cfg["counts"]
    grid = kakeya.GridSpec(grid_res)
    p = datum.exponents
    if kappa:
        result = kakeya.measure_kappa(datum, delta, nu, trials, counts, grid, seed, policy)
        click.echo(json.dumps(
            {k: result[k] for k in ("c_fine", "c_coarse", "kappa_hat")}, sort_keys=True
        ))
        if out:
            lines = ["trial,delta,nu,ratio_fine,ratio_coarse"]
            for t, (rf, rc) in enumerate(zip(result["fine_ratios"], result["coarse_ratios"])):
                lines.append(_csv_line([t, delta, nu, rf, rc]))
            _write_text(out, "\n".join(lines) + "\n")
        sys.exit(0)
    rows = []
    for t in range(trials):
        fams = kakeya.random_families(datum, delta, nu, counts, stream(seed, t).integers(2**63), policy)
        res = kakeya.kakeya_ratio(fams, p, grid)
        rows.append((t, delta, nu, res.lhs, res.ratio))
    ratios = [r[4] for r in rows]
    click.echo(json.dumps(
        {"trials": trials, "delta": delta, "nu": nu,
         "max_ratio": max(ratios), "mean_ratio": float(np.mean(ratios))},
        sort_keys=True,
    ))
    if out:
        lines = ["trial,delta,nu,lhs,ratio"]
        lines += [_csv_line(r) for r in rows]
        _write_text(out, "\n".join(lines) + "\n")
    sys.exit(0)


@main.command("nonlinear")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(), default=None, help="per-draw CSV output")
def nonlinear_cmd(config_path, seed, out):
    """Nonlinear composition ratio sweep from a config file."""
    cfg = _load_config(
        config_path,
        required=("datum", "family", "u_halfwidth", "deltas", "seed"),
        optional=("quad", "draws", "resolution"),
    )
    base = Path(config_path).parent
    policy = core.DEFAULT_POLICY
    datum = _load_valid_datum(str(base / cfg["datum"]), policy)
    seed = cfg["seed"] if seed is None else seed
    family = cfg["family"]
    specs = []
    for j, mp in enumerate(datum.maps):
        if family == "linear":
            specs.append(nonlinear.SubmersionSpec("linear", mp.rows))
        elif family == "quadratic":
            quad = np.asarray(cfg["quad"][j], dtype=float) if "quad" in cfg else np.zeros(
                (mp.n_j, datum.n, datum.n)
            )
            specs.append(nonlinear.SubmersionSpec("quadratic", mp.rows, quad))
        else:
            _fail("unknown submersion family %r" % family)
    half = float(cfg["u_halfwidth"])
    box = (-half * np.ones(datum.n), half * np.ones(datum.n))
    try:
        result = nonlinear.nonlinear_ratio_sweep(
            specs,
            datum,
            datum.exponents,
            box,
            [float(d) for d in cfg["deltas"]],
            seed,
            draws=int(cfg.get("draws", 4)),
            resolution=int(cfg.get("resolution", 96)),
        )
    except ValueError as exc:
        _fail(str(exc))
    click.echo(json.dumps(
        {"slope": result["slope"], "points": result["points"]}, sort_keys=True
    ))
    if out:
        lines = ["delta,draw,ratio"]
        lines += [_csv_line(r) for r in result["rows"]]
        _write_text(out, "\n".join(lines) + "\n")
    sys.exit(0)


if __name__ == "__main__":
    main()
