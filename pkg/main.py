import logging
from pathlib import Path
from typing import Optional, Sequence, Tuple

import click
import numpy as np
import orjson
import uvicorn

from config import LOG_LEVEL, SPDE_API_HOST, SPDE_API_PORT, SPDE_DEFAULT_LEVEL, SPDE_OUTPUT_DIR, SPDE_WORKERS
from src.change_point import kolmogorov_cdf, kolmogorov_quantile, kolmogorov_sf, run_test
from src.coordinates import approx_coordinate, partial_qv, thin_path
from src.errors import SpdeError
from src.estimators import MethodologyA, MethodologyB, TwoDimensional
from src.harness import ExperimentRunner, apply_assignments, config_hash, dataset_hash, load_config, situation
from src.models import NoiseSpec, OperatorParams, OptimizerConfig, SpaceTimeGrid, ThinningPlan, VolatilityProfile
from src.simulator import simulate_field
from src.utils.export import export_results
from src.utils.storage import export_field_csv, export_path_csv, load_dataset, load_path_csv, save_dataset

logging.basicConfig(
    level=getattr(logging, LOG_LEVEL),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

ESTIMATORS = {"A": MethodologyA, "B": MethodologyB, "2d": TwoDimensional}


def _echo_json(payload) -> None:
    click.echo(orjson.dumps(payload, option=orjson.OPT_INDENT_2 | orjson.OPT_SERIALIZE_NUMPY).decode())


def _parse_box(box: Sequence[str]) -> Tuple[Tuple[float, float], ...]:
    bounds = []
    for item in box:
        try:
            lower, upper = (float(v) for v in item.split(","))
        except ValueError:
            raise click.BadParameter(f"expected 'lower,upper', got '{item}'", param_hint="--box")
        bounds.append((lower, upper))
    return tuple(bounds)


def _optimizer_config(box: Sequence[str], coarse_grid: Optional[int], refine_tol: Optional[float], max_evals: Optional[int]) -> Optional[OptimizerConfig]:
    if not box:
        if coarse_grid is not None or refine_tol is not None or max_evals is not None:
            raise click.UsageError("--coarse-grid, --refine-tol and --max-evals need an explicit --box")
        return None
    fields = {"box": _parse_box(box)}
    if coarse_grid is not None:
        fields["coarse_grid"] = coarse_grid
    if refine_tol is not None:
        fields["refine_tol"] = refine_tol
    if max_evals is not None:
        fields["max_evals"] = max_evals
    return OptimizerConfig(**fields)


def optimizer_options(func):
    options = [
        click.option("--box", multiple=True, help="Per-coordinate search bounds 'lower,upper', in parameter order"),
        click.option("--coarse-grid", type=int, default=None, help="Grid points per axis of the coarse scan"),
        click.option("--refine-tol", type=float, default=None, help="Objective tolerance of the local refinement"),
        click.option("--max-evals", type=int, default=None, help="Objective evaluation budget"),
    ]
    for option in reversed(options):
        func = option(func)
    return func


@click.group()
def cli():
    """Simulate parabolic SPDEs, estimate their coefficients and test the volatility for change points."""


@cli.command()
@click.option("--theta0", type=float, default=0.0)
@click.option("--theta1", type=float, multiple=True, default=(0.2,), show_default=True, help="One value per space dimension")
@click.option("--theta2", type=float, default=0.2, show_default=True)
@click.option("--alpha", type=float, default=0.0)
@click.option("--gamma-rule", type=click.Choice(["cylindrical", "spectral", "polynomial"]), default="cylindrical")
@click.option("--mu0", type=float, default=0.0)
@click.option("--tau", type=float, multiple=True, help="Volatility change points")
@click.option("--sigma", type=float, multiple=True, default=(1.0,), show_default=True, help="Volatility levels")
@click.option("--N", "n_steps", type=int, default=1000, show_default=True)
@click.option("--M", "m_cells", type=int, multiple=True, default=(100,), show_default=True)
@click.option("--L", "truncation", type=int, multiple=True, help="Modes per axis (default: adaptive)")
@click.option("--seed", type=int, required=True)
@click.option("--replication", type=int, default=0)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True, help="Dataset file to write")
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False, path_type=Path), default=None, help="Also write a CSV export")
def simulate(theta0, theta1, theta2, alpha, gamma_rule, mu0, tau, sigma, n_steps, m_cells, truncation, seed, replication, out, csv_path):
    """Simulate a field on the space-time grid and write it as a dataset file."""
    try:
        params = OperatorParams(theta0=theta0, theta1=theta1, theta2=theta2)
        noise = NoiseSpec(alpha=alpha, gamma_rule=gamma_rule, mu0=mu0)
        profile = VolatilityProfile(change_points=tau, levels=sigma)
        grid = SpaceTimeGrid(N=n_steps, M=m_cells)
        ds, _ = simulate_field(params, noise, profile, grid, L=truncation or None, seed=seed, replication_id=replication)
        save_dataset(ds, out)
        if csv_path is not None:
            export_field_csv(ds, csv_path)
    except SpdeError as e:
        raise click.ClickException(str(e))
    click.echo(str(out))


@cli.command()
@click.argument("dataset", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--method", type=click.Choice(sorted(ESTIMATORS)), default="B", show_default=True)
@click.option("--b", type=float, default=0.1, show_default=True)
@click.option("--m", "m_points", type=int, multiple=True, required=True)
@click.option("--n", "n_steps", type=int, default=None, help="Thinned time count (default: full N)")
@optimizer_options
def estimate(dataset, method, b, m_points, n_steps, box, coarse_grid, refine_tol, max_evals):
    """Fit an estimator to a dataset and print the estimate as JSON."""
    try:
        ds = load_dataset(dataset)
        plan = ThinningPlan(b=b, m=m_points, n=n_steps or ds.grid.N)
        estimator = ESTIMATORS[method](_optimizer_config(box, coarse_grid, refine_tol, max_evals))
        result = estimator.execute(ds, plan)
    except SpdeError as e:
        raise click.ClickException(str(e))
    _echo_json(estimator.to_record(result, dataset_hash(ds)).model_dump(mode="json"))


@cli.command()
@click.argument("source", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--ell", type=int, multiple=True, help="Fourier mode (default: 1 per axis)")
@click.option("--kappa", type=float, multiple=True, help="kappa for the approximate coordinate (default: dataset provenance)")
@click.option("--b", type=float, default=0.1, show_default=True)
@click.option("--m", "m_points", type=int, multiple=True, help="Thinned spatial counts, dataset input only")
@click.option("--n", "n_steps", type=int, default=None, help="Thinned time count")
@click.option("--level", type=float, default=SPDE_DEFAULT_LEVEL, show_default=True)
@click.option("--beta-sq", type=float, default=None, help="Normalization (default: total quadratic variation)")
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False, path_type=Path), default=None, help="Write the tested path and its partial quadratic variation")
def test(source, ell, kappa, b, m_points, n_steps, level, beta_sq, csv_path):
    """Run the CUSUM change-point test on a dataset or a coordinate CSV."""
    try:
        if source.suffix.lower() == ".csv":
            path_ = load_path_csv(source, ell=ell or (1,))
            if n_steps is not None:
                path_ = thin_path(path_, path_.n, n_steps)
        else:
            ds = load_dataset(source)
            ell = ell or (1,) * ds.d
            if not kappa:
                if ds.meta is None:
                    raise click.UsageError("dataset has no provenance; pass --kappa")
                kappa = ds.meta.params.kappa
            if not m_points:
                raise click.UsageError("--m is required for dataset input")
            plan = ThinningPlan(b=b, m=m_points, n=n_steps or ds.grid.N)
            path_ = approx_coordinate(ds, ell, kappa, plan)
        qv = partial_qv(path_)
        result = run_test(qv, level, beta_sq=beta_sq)
        if csv_path is not None:
            export_path_csv(path_, qv, csv_path)
    except SpdeError as e:
        raise click.ClickException(str(e))
    _echo_json(result.model_dump(mode="json"))


@cli.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None, help="ExperimentConfig as JSON or YAML")
@click.option("--situation", "situation_index", type=click.IntRange(1, 3), default=None, help="Built-in simulation study preset")
@click.option("--seed", type=int, required=True)
@click.option("--replications", type=int, default=None)
@click.option("--N", "n_steps", type=int, default=None)
@click.option("--M", "m_cells", type=int, multiple=True)
@click.option("--L", "truncation", type=int, multiple=True)
@click.option("--b", type=float, default=None)
@click.option("--m", "m_points", type=int, multiple=True)
@click.option("--test-n", "test_ns", type=int, multiple=True, help="Thinned test grid sizes")
@click.option("--mode", type=click.Choice(["field", "coordinate"]), default=None)
@click.option("--estimator", type=click.Choice(["A", "B", "oracle", "2d"]), default=None)
@click.option("--beta", type=click.Choice(["total-qv", "regression"]), default=None)
@click.option("--level", type=float, default=None)
@optimizer_options
@click.option("--set", "assignments", multiple=True, metavar="KEY=VALUE", help="Config override, e.g. params.theta2=0.3 or noise.alpha=0.5; values are YAML")
@click.option("--workers", type=int, default=SPDE_WORKERS, show_default=True)
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), default=None, help="Result directory")
@click.option("--progress/--no-progress", default=True)
def mc(config_path, situation_index, seed, replications, n_steps, m_cells, truncation, b, m_points, test_ns, mode, estimator, beta, level,
       assignments, box, coarse_grid, refine_tol, max_evals, workers, out, progress):
    """Run a Monte Carlo experiment and export power tables, T_n samples and a manifest."""
    if (config_path is None) == (situation_index is None):
        raise click.UsageError("pass exactly one of --config and --situation")
    overrides = {
        "seed": seed,
        "replications": replications,
        "N": n_steps,
        "M": m_cells or None,
        "L": truncation or None,
        "b": b,
        "m": m_points or None,
        "test_ns": list(test_ns) or None,
        "mode": mode,
        "estimator": estimator,
        "beta": beta,
        "level": level,
        "optimizer": _optimizer_config(box, coarse_grid, refine_tol, max_evals),
    }
    try:
        if config_path is not None:
            cfg = load_config(config_path, **overrides)
        else:
            cfg = situation(situation_index, **{k: v for k, v in overrides.items() if v is not None})
        if assignments:
            cfg = apply_assignments(cfg, assignments)
        result, _ = ExperimentRunner().run_experiment(cfg, workers=workers, progress=progress)
        target = out or Path(SPDE_OUTPUT_DIR) / f"{cfg.name}-{config_hash(cfg)[:12]}"
        export_results(result, target)
    except SpdeError as e:
        logger.error(f"Experiment failed: {str(e)}")
        raise click.ClickException(str(e))
    for cell in result.table.cells:
        click.echo(f"{result.table.sweep_name or 'profile'}={cell.sweep_value:g} n={cell.n} rate={cell.rate:.3f}")
    click.echo(str(target))


@cli.command("table-kolmogorov")
@click.option("--start", type=float, default=0.3, show_default=True)
@click.option("--stop", type=float, default=2.5, show_default=True)
@click.option("--step", type=float, default=0.05, show_default=True)
@click.option("--quantile", "quantiles", type=float, multiple=True, default=(0.9, 0.95, 0.99), show_default=True)
def table_kolmogorov(start, stop, step, quantiles):
    """Print Kolmogorov CDF values and quantiles as CSV."""
    if step <= 0 or stop < start:
        raise click.UsageError("need step > 0 and stop >= start")
    xs = np.round(np.arange(start, stop + step / 2, step), 10)
    click.echo("x,cdf,sf")
    for x, cdf, sf in zip(xs, kolmogorov_cdf(xs), kolmogorov_sf(xs)):
        click.echo(f"{x:.6g},{cdf:.10f},{sf:.10f}")
    click.echo("p,quantile")
    try:
        for p in quantiles:
            click.echo(f"{p:.6g},{kolmogorov_quantile(p):.10f}")
    except SpdeError as e:
        raise click.ClickException(str(e))


@cli.command()
@click.option("--host", default=SPDE_API_HOST, show_default=True)
@click.option("--port", type=int, default=SPDE_API_PORT, show_default=True)
@click.option("--reload", is_flag=True)
def serve(host, port, reload):
    """Start the HTTP API."""
    logger.info("Starting FastAPI application")
    uvicorn.run("app:app", host=host, port=port, reload=reload)


if __name__ == "__main__":
    cli()
