"""
Flask CLI Command Extensions

``flask db-create`` rebuilds the run archive. Everything else lives in
the ``flask lab`` group; every lab command prints one JSON document on
stdout and exits with a code from ``passage_lab.common.status``.
"""
import json
import os
import time
from typing import Optional

import click
from flask.cli import AppGroup

from passage_lab import __version__, app, bounds, config, passage, quadrature
from passage_lab.errors import DataValidationError, InvariantViolation
from passage_lab.kernels import ProcessSpec, make_kernel
from passage_lab.manifest import (
    BOUNDS_FILE,
    EXPONENT_FILE,
    SURVIVAL_FILE,
    RunManifest,
    parse_config_file,
    parse_float_list,
    parse_kernel_option,
    parse_window,
    read_survival_csv,
    write_json,
    write_survival_csv,
)
from passage_lab.models import RunKind, RunRecord, db
from passage_lab.sampler import Validity, make_schedule
from .error_handlers import handle_errors
from . import status

DEFAULT_KERNEL = "bm"
DEFAULT_HORIZONS = "1:6:1"
DEFAULT_PATHS = 100_000
GEOMETRIC_NOTE = (
    "open question: whether survival on a geometric schedule decays at the "
    "continuous exponent is not known"
)


######################################################################
# Command to force tables to be rebuilt
# Usage: flask db-create
######################################################################
@app.cli.command("db-create")
def db_create():
    """
    Recreates a local database. You probably should not use this on
    production.
    """
    db.drop_all()
    db.create_all()
    db.session.commit()


######################################################################
# Lab command group
# Usage: flask lab <command> [options]
######################################################################
class LabGroup(AppGroup):
    """Command group whose usage errors exit with the config error code"""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except click.UsageError as error:
            error.exit_code = status.EXIT_1_CONFIG_ERROR
            raise


lab = LabGroup("lab", help="Boundary-crossing exponents of self-similar Gaussian processes.")
app.cli.add_command(lab)


def _emit(payload: dict):
    click.echo(json.dumps(payload, sort_keys=True))


def _result(inputs: dict, value, error_estimate, label: str, **extra) -> dict:
    document = {
        "inputs": inputs,
        "value": value,
        "error_estimate": error_estimate,
        "label": label,
    }
    document.update(extra)
    return document


def resolve_seed(seed: Optional[int]) -> int:
    """The seed from PASSAGE_LAB_SEED, else the flag, else the default"""
    override = os.getenv(config.SEED_ENV)
    if override:
        try:
            return int(override)
        except ValueError as error:
            raise DataValidationError(
                f"{config.SEED_ENV} must be an integer, got '{override}'"
            ) from error
    return config.DEFAULT_SEED if seed is None else seed


def _pick(flag, file_values: dict, key: str, default):
    if flag is not None:
        return flag
    return file_values.get(key, default)


def _quadrature_config(rel_tol: Optional[float]) -> quadrature.QuadratureConfig:
    return quadrature.QuadratureConfig(rel_tol=rel_tol or config.DEFAULT_REL_TOL)


######################################################################
# E S T I M A T E
######################################################################
def build_estimate_manifest(options: dict, file_values: dict = None) -> RunManifest:
    """Manifest of an estimate run from flags, then config file values, then defaults"""
    file_values = file_values or {}
    if options["kernel"] is not None:
        spec = parse_kernel_option(options["kernel"])
    else:
        spec = file_values.get("kernel") or parse_kernel_option(DEFAULT_KERNEL)
    c = _pick(options["c"], file_values, "c", None)
    if c is None:
        raise DataValidationError("the boundary level --c is required")
    horizons = options["horizons"]
    horizons = (
        parse_float_list(horizons, "horizons")
        if horizons is not None
        else file_values.get("horizons", parse_float_list(DEFAULT_HORIZONS))
    )
    window = parse_window(options["window"]) if options["window"] else file_values.get("window")
    seed = options["seed"] if options["seed"] is not None else file_values.get("seed")
    rel_tol = _pick(options["rel_tol"], file_values, "rel_tol", None)
    passage_options = {
        "c": float(c),
        "beta": float(_pick(options["beta"], file_values, "boundary_beta", spec.alpha)),
        "window": None if window is None else list(window),
        "lambda_star": options["lambda_star"],
    }
    sampler_options = {
        "step": float(_pick(options["delta"], file_values, "delta", config.DEFAULT_STEP)),
        "horizons": [float(u) for u in horizons],
        "n_paths": int(_pick(options["paths"], file_values, "paths", DEFAULT_PATHS)),
        "seed": resolve_seed(seed),
    }
    outputs = {"survival": SURVIVAL_FILE, "exponent": EXPONENT_FILE, "bounds": BOUNDS_FILE}
    return RunManifest(
        command="estimate",
        kernel=spec.serialize(),
        passage=passage_options,
        sampler=sampler_options,
        quadrature=_quadrature_config(rel_tol).serialize(),
        outputs=outputs,
        code_version=__version__,
    )


def run_estimate(manifest: RunManifest, out_dir: str, workers: int = None, record: bool = False):
    """
    Runs an estimate manifest and writes its artifacts

    The survival CSV and the exponent JSON are written before the bound
    checks, so a run that ends in an invariant violation still leaves
    its counts behind.
    """
    started = time.monotonic()
    cfg = quadrature.QuadratureConfig.deserialize(manifest.quadrature)
    kernel = make_kernel(manifest.spec, cfg)
    settings = manifest.passage
    sampling = manifest.sampler
    c = settings["c"]
    passage.PassageConfig(c, settings["beta"], kernel.alpha).require(passage.Regime.CRITICAL)
    window = tuple(settings["window"]) if settings.get("window") else None
    os.makedirs(out_dir, exist_ok=True)
    digest = manifest.manifest_hash
    app.logger.info("Running manifest %s for %s at c=%g", digest, kernel.spec.label, c)

    star = None
    star_curve = None
    if settings.get("lambda_star"):
        curve, star_curve = passage.coupled_survival(
            kernel,
            c,
            sampling["horizons"],
            int(settings["lambda_star"]),
            sampling["n_paths"],
            sampling["step"],
            sampling["seed"],
            workers,
        )
        star = passage.exponent_fit(star_curve)
    else:
        curve = passage.survival_estimate(
            kernel, c, sampling["horizons"], sampling["n_paths"], sampling["step"],
            sampling["seed"], workers,
        )
    write_survival_csv(os.path.join(out_dir, manifest.outputs["survival"]), curve, digest)
    estimate = passage.exponent_fit(curve, window)
    exponent_doc = estimate.serialize()
    exponent_doc["fekete_consistent"] = estimate.fekete_consistent
    exponent_doc["lambda_star"] = None if star is None else star.serialize()
    write_json(os.path.join(out_dir, manifest.outputs["exponent"]), exponent_doc, digest)

    if record:
        _record(manifest, RunKind.ESTIMATE, curve)
        if star_curve is not None:
            _record(manifest, RunKind.LAMBDA_STAR, star_curve)

    bounds_doc = {"c": c, "violations": []}
    violation = None
    try:
        report = bounds.build_bounds_report(kernel, c, curve)
        bounds_doc.update(report.serialize())
        report.check_estimate(estimate.lambda_hat, estimate.std_err)
        if not estimate.fekete_consistent:
            raise InvariantViolation(
                f"lambda_hat={estimate.lambda_hat:.6g} exceeds the finite-horizon values"
            )
    except InvariantViolation as error:
        bounds_doc["violations"].append(str(error))
        violation = error
    write_json(os.path.join(out_dir, manifest.outputs["bounds"]), bounds_doc, digest)

    manifest.wall_time = round(time.monotonic() - started, 3)
    manifest.write(out_dir)
    if violation is not None:
        raise violation
    return estimate, star, curve


def _record(manifest: RunManifest, kind: RunKind, curve: passage.SurvivalCurve) -> RunRecord:
    record = RunRecord(
        kind=kind,
        manifest_hash=manifest.manifest_hash,
        kernel=manifest.kernel,
        c=manifest.passage["c"],
        step=manifest.sampler["step"],
        seed=manifest.sampler["seed"],
        n_paths=curve.trials,
        horizons=list(curve.horizons),
        survivors=list(curve.survivors),
        code_version=manifest.code_version,
    )
    record.create()
    return record


@lab.command("estimate")
@click.option("--kernel", default=None, help="bm | fbm:H=.. | spde:d=..,gamma=..,beta=..,nu=..")
@click.option("--c", "c", type=float, default=None, help="Boundary level")
@click.option("--beta", type=float, default=None, help="Boundary exponent, defaults to alpha")
@click.option("--delta", type=float, default=None, help="Log-time grid step")
@click.option("--horizons", default=None, help="u values: a,b,c or start:stop:step")
@click.option("--paths", type=int, default=None, help="Number of Monte Carlo paths")
@click.option("--seed", type=int, default=None, help=f"Master seed ({config.SEED_ENV} wins)")
@click.option("--workers", type=int, default=None, help="Worker threads")
@click.option("--out-dir", default=config.DEFAULT_OUT_DIR, show_default=True)
@click.option("--rel-tol", type=float, default=None, help="Quadrature relative tolerance")
@click.option("--window", default=None, help="Fit window UMIN,UMAX")
@click.option("--config", "config_file", type=click.Path(dir_okay=False), default=None)
@click.option("--manifest", "manifest_file", type=click.Path(dir_okay=False), default=None)
@click.option("--lambda-star", type=int, default=None, help="Also fit on log-times 1..N")
@click.option("--record", is_flag=True, help="Archive the survivor counts")
@handle_errors
def estimate_command(**options):
    """Estimate lambda(c) with survival curve, fit and bounds sandwich"""
    file_values = parse_config_file(options["config_file"]) if options["config_file"] else {}
    if options["manifest_file"]:
        manifest = RunManifest.read(options["manifest_file"])
        if manifest.command != "estimate":
            raise DataValidationError(f"manifest is for '{manifest.command}', not 'estimate'")
    else:
        manifest = build_estimate_manifest(options, file_values)
    workers = _pick(options["workers"], file_values, "workers", None)
    estimate, star, _ = run_estimate(manifest, options["out_dir"], workers, options["record"])
    _emit(
        {
            "manifest_hash": manifest.manifest_hash,
            "lambda_hat": estimate.lambda_hat,
            "std_err": estimate.std_err,
            "lambda_star": None if star is None else star.lambda_hat,
            "out_dir": options["out_dir"],
        }
    )


######################################################################
# B O U N D S
######################################################################
@lab.command("bounds")
@click.option("--kernel", default=DEFAULT_KERNEL, show_default=True)
@click.option("--c", "c", type=float, required=True)
@click.option("--curve", "curve_file", type=click.Path(dir_okay=False), default=None,
              help="survival.csv whose Fekete values join the upper bounds")
@click.option("--rel-tol", type=float, default=None)
@handle_errors
def bounds_command(kernel, c, curve_file, rel_tol):
    """Every bound on lambda(c) for one kernel"""
    spec = parse_kernel_option(kernel)
    curve = read_survival_csv(curve_file)[1] if curve_file else None
    report = bounds.build_bounds_report(make_kernel(spec, _quadrature_config(rel_tol)), c, curve)
    _emit(_result({"kernel": spec.serialize(), "c": c}, report.serialize(), None, "lambda-bounds"))


######################################################################
# S P D E
######################################################################
SPDE_QUERIES = ("alpha", "well-posed", "cov", "k0", "comparison")


@lab.command("spde")
@click.option("--d", "d", type=int, required=True)
@click.option("--gamma", type=float, required=True)
@click.option("--beta", type=float, required=True)
@click.option("--nu", type=float, required=True)
@click.option("--query", "queries", type=click.Choice(SPDE_QUERIES), multiple=True, required=True)
@click.option("--t", "t", type=float, default=1.0, show_default=True)
@click.option("--h", "h", type=float, default=0.0, show_default=True)
@click.option("--c", "c", type=float, default=1.0, show_default=True)
@click.option("--paths", type=int, default=DEFAULT_PATHS, show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--workers", type=int, default=None)
@click.option("--rel-tol", type=float, default=None)
@handle_errors
def spde_command(d, gamma, beta, nu, queries, t, h, c, paths, seed, workers, rel_tol):
    """Queries on the SPDE trace: alpha, well-posedness, cov, K0, comparison"""
    cfg = _quadrature_config(rel_tol)
    inputs = {"d": d, "gamma": gamma, "beta": beta, "nu": nu}
    answers = {}
    for query in queries:
        if query == "alpha":
            answers[query] = _result(inputs, quadrature.spde_alpha(d, gamma, beta, nu), 0.0, "alpha")
        elif query == "well-posed":
            answers[query] = _result(
                inputs, quadrature.is_well_posed(d, gamma, beta, nu), None, "gamma > beta/(2-nu)"
            )
        elif query == "cov":
            result = quadrature.spde_trace_cov(d, gamma, beta, nu, t, h, cfg)
            answers[query] = _result(
                dict(inputs, t=t, h=h), result.value, result.error, "E[X(t)X(t+h)]"
            )
        elif query == "k0":
            result = quadrature.k0_constant(d, gamma, beta, cfg)
            answers[query] = _result(inputs, result.value, result.error, "K0")
        else:
            spec = ProcessSpec.spde_trace(d, gamma, beta, nu)
            comparison = bounds.comparison_bound(
                spec, c, n_paths=paths, seed=resolve_seed(seed), workers=workers, cfg=cfg
            )
            answers[query] = _result(
                dict(inputs, c=c),
                comparison.value,
                comparison.std_err,
                comparison.label,
                details=comparison.serialize(),
            )
    _emit(answers)


######################################################################
# S C H E D U L E
######################################################################
@lab.command("schedule")
@click.option("--family", type=click.Choice(["arithmetic", "geometric", "power-exp", "log-power"]),
              required=True)
@click.option("--q", "q", type=float, default=None)
@click.option("--alpha", type=float, default=0.5, show_default=True)
@click.option("--n-max", type=int, default=20, show_default=True)
@click.option("--c", "c", type=float, default=None, help="Level for the discretization budget")
@click.option("--epsilon", type=float, default=None)
@click.option("--m-index", type=int, default=None)
@click.option("--budget-k", type=float, default=config.DEFAULT_BUDGET_K, show_default=True)
@handle_errors
def schedule_command(family, q, alpha, n_max, c, epsilon, m_index, budget_k):
    """Materialize a sampling schedule and its discretization budget"""
    params = {} if q is None else {"q": q}
    schedule = make_schedule(family, params, alpha, n_max)
    document = _result(
        {"family": family, "q": q, "alpha": alpha, "n_max": n_max},
        schedule.serialize(),
        None,
        schedule.validity.value,
    )
    if schedule.validity is Validity.UNKNOWN:
        document["note"] = GEOMETRIC_NOTE
    if epsilon is not None:
        if c is None or m_index is None:
            raise DataValidationError("the budget needs --c, --epsilon and --m-index")
        budget = bounds.discretization_budget(schedule, alpha, c, epsilon, m_index, budget_k)
        document["budget"] = budget.serialize()
    _emit(document)


######################################################################
# K U M M E R   A N D   Z
######################################################################
@lab.command("kummer")
@click.option("--a", "a", type=float, required=True)
@click.option("--b", "b", type=float, required=True)
@click.option("--z", "z", type=float, required=True)
@handle_errors
def kummer_command(a, b, z):
    """Kummer's M(a, b, z) with its truncation bound"""
    result = bounds.kummer_m(a, b, z)
    _emit(
        _result(
            {"a": a, "b": b, "z": z},
            result.value,
            result.truncation_bound,
            "M(a,b,z)",
            terms_used=result.terms_used,
            precision_loss=result.precision_loss,
        )
    )


@lab.command("z")
@click.option("--mu", type=float, required=True)
@handle_errors
def z_command(mu):
    """Smallest positive root z(mu)"""
    _emit(_result({"mu": mu}, bounds.z_of_mu(mu), bounds.ROOT_XTOL, "z(mu)"))


@lab.command("zinv")
@click.option("--c", "c", type=float, required=True)
@handle_errors
def zinv_command(c):
    """Exact Brownian exponent z^-1(c)"""
    _emit(_result({"c": c}, bounds.z_inverse(c), bounds.ROOT_XTOL, "lambda_BM(c)"))


######################################################################
# P O O L
######################################################################
@lab.command("pool")
@click.option("--kernel", default=DEFAULT_KERNEL, show_default=True)
@click.option("--c", "c", type=float, required=True)
@click.option("--delta", type=float, default=config.DEFAULT_STEP, show_default=True)
@click.option("--horizons", default=DEFAULT_HORIZONS, show_default=True)
@click.option("--fit", is_flag=True, help="Fit lambda on the pooled curve")
@click.option("--window", default=None)
@handle_errors
def pool_command(kernel, c, delta, horizons, fit, window):
    """Pool archived runs that differ only in their seed"""
    spec = parse_kernel_option(kernel)
    records = RunRecord.find_matching(
        spec.serialize(), c, delta, parse_float_list(horizons, "horizons")
    )
    records = [record for record in records if record.kind is RunKind.ESTIMATE]
    curve = RunRecord.pool(records)
    estimate = None
    if fit:
        estimate = passage.exponent_fit(curve, parse_window(window) if window else None)
    _emit(
        {
            "records": [record.id for record in records],
            "curve": curve.serialize(),
            "estimate": None if estimate is None else estimate.serialize(),
        }
    )
