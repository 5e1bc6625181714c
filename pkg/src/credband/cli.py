"""Command line entry point.

Exit codes: 0 success, 2 when a study's assertion band fails, 1 on error.
"""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from . import harness
from .credible import DEFAULT_DRAWS, l2_radius, sup_radius
from .fourier import GRID_CAP, Grid, default_grid_size, synthesize
from .inference import contraction_rate, posterior_variances
from .sequence import ModelConfig, RandomStream, parse_kappa
from .truths import generate_truth, parse_truth

EXIT_BAND = 2


def _config_from(ctx_params: dict, config_path: str | None, **fixed) -> harness.ExperimentConfig:
    """File values first, then any flag given on the command line."""
    base = {}
    if config_path:
        with open(config_path, encoding="utf-8") as fh:
            base = json.load(fh)
    flags = {
        "n_grid": ctx_params.get("n"),
        "prior_alpha": ctx_params.get("alpha"),
        "gamma": ctx_params.get("gamma"),
        "inflation_M": ctx_params.get("inflation"),
        "norm_kind": ctx_params.get("norm"),
        "truth": ctx_params.get("truth"),
        "reps": ctx_params.get("reps"),
        "draws": ctx_params.get("draws"),
        "master_seed": ctx_params.get("seed"),
        "grid_size": ctx_params.get("grid_size"),
        "kappa": ctx_params.get("kappa"),
    }
    for k, v in flags.items():
        if v is None or v == ():
            continue
        base[k] = list(v) if k == "n_grid" else v
    if isinstance(base.get("prior_alpha"), str) and base["prior_alpha"] != harness.EB:
        base["prior_alpha"] = float(base["prior_alpha"])
    base.update(fixed)
    return harness.ExperimentConfig.from_dict(base)


def _emit(report, out, fmt):
    if out:
        harness.emit_report(report, out, fmt)
        click.echo(f"wrote {out}", err=True)


def _summary(report):
    for c in report.cells:
        line = (
            f"n={c['n']:<10g} coverage={c['coverage_rate']:.3f} radius={c['mean_radius']:.5g} "
            f"rate_ratio={c['rate_ratio']:.4g} error={c['mean_error']:.5g}"
        )
        if "alpha_hat" in c:
            line += f" alpha_hat_median={c['alpha_hat']['q50']:.3f}"
        if "arm" in c:
            line = f"[{c['arm']}] " + line
        click.echo(line)
    for k, v in report.status.items():
        click.echo(f"{k}: {'PASS' if v else 'FAIL'}")


def study_options(fn):
    opts = [
        click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                     help="JSON config; flags override its values."),
        click.option("--n", multiple=True, type=float, help="Sample size (repeat for a grid)."),
        click.option("--alpha", type=str, help="Prior smoothness, or 'eb' for empirical Bayes."),
        click.option("--gamma", type=float),
        click.option("--inflation", type=float, help="Inflation factor M."),
        click.option("--norm", type=click.Choice(["l2", "sup"])),
        click.option("--truth", type=str, help="family:params, e.g. poly:alpha=1,c=1"),
        click.option("--reps", type=int),
        click.option("--draws", type=int),
        click.option("--seed", type=int),
        click.option("--grid-size", type=int),
        click.option("--kappa", type=str, help="direct or poly:<p>"),
        click.option("--workers", type=int, default=1, show_default=True),
        click.option("--out", type=click.Path(dir_okay=False)),
        click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv",
                     show_default=True),
    ]
    for o in reversed(opts):
        fn = o(fn)
    return fn


@click.group()
@click.option("-v", "--verbose", is_flag=True)
def cli(verbose):
    """Credible sets in the Gaussian sequence model and their coverage."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


@cli.command()
@click.option("--n", type=float, required=True)
@click.option("--alpha", type=float, required=True)
@click.option("--gamma", type=float, default=0.5, show_default=True)
@click.option("--norm", type=click.Choice(["l2", "sup"]), default="sup", show_default=True)
@click.option("--draws", type=int, default=DEFAULT_DRAWS, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--grid-size", type=int)
@click.option("--kappa", type=str, default="direct", show_default=True)
@click.option("--workers", type=int, default=1, show_default=True)
def radius(n, alpha, gamma, norm, draws, seed, grid_size, kappa, workers):
    """Print the credible radius h_n (sup) or the L2 ball radius."""
    model = ModelConfig(n, parse_kappa(kappa))
    v = posterior_variances(alpha, model)
    rng = RandomStream(seed).child("radius")
    if norm == "sup":
        G = grid_size or default_grid_size(alpha, n, model.n_trunc, cap=GRID_CAP)
        r = sup_radius(v, gamma, Grid(G), draws, rng, workers)
    else:
        r = l2_radius(v, gamma, draws, rng, workers)
    click.echo(f"{r:.10g}")
    click.echo(f"rate_ratio={r / contraction_rate(alpha, n):.6g}", err=True)


@cli.command()
@study_options
@click.pass_context
def coverage(ctx, config_path, workers, out, fmt, **_):
    """Frequentist coverage of the inflated credible set."""
    cfg = _config_from(ctx.params, config_path)
    report = harness.run_coverage(cfg, workers)
    _emit(report, out, fmt)
    _summary(report)
    sys.exit(0 if report.ok else EXIT_BAND)


@cli.command()
@study_options
@click.pass_context
def rates(ctx, config_path, workers, out, fmt, **_):
    """Radius against the contraction rate across n."""
    cfg = _config_from(ctx.params, config_path)
    report = harness.run_rate_study(cfg, workers)
    _emit(report, out, fmt)
    _summary(report)
    click.echo(f"rate_ratio max/min = {report.extra['rate_ratio_spread']:.4g} (band {cfg.rate_band:g})")
    sys.exit(0 if report.ok else EXIT_BAND)


@cli.command("cox-freedman")
@study_options
@click.option("--under-alpha", type=float, default=0.25, show_default=True,
              help="Prior smoothness of the undersmoothing arm.")
@click.pass_context
def cox_freedman(ctx, config_path, workers, out, fmt, under_alpha, **_):
    """Oversmoothed versus undersmoothed fixed-alpha sets (M = 1)."""
    cfg = _config_from(ctx.params, config_path)
    result = harness.run_cox_freedman_demo(cfg, under_alpha, workers)
    report = result.to_report()
    _emit(report, out, fmt)
    _summary(report)
    sys.exit(0 if result.ok else EXIT_BAND)


@cli.command("eb-study")
@study_options
@click.pass_context
def eb_study(ctx, config_path, workers, out, fmt, **_):
    """Plug-in empirical-Bayes credible sets."""
    cfg = _config_from(ctx.params, config_path, prior_alpha=harness.EB)
    report = harness.run_eb_study(cfg, workers)
    _emit(report, out, fmt)
    _summary(report)
    for b in report.extra["eb_brackets"]:
        click.echo(f"n={b['n']:<10g} alpha_hat in [{b['alpha_lo']:.3f}, {b['alpha_hi']:.3f}] iqr={b['iqr']:.4f}")
    sys.exit(0 if report.ok else EXIT_BAND)


@cli.command()
@click.option("--truth", type=str, required=True, help="family:params")
@click.option("--n-trunc", type=int, default=2048, show_default=True)
@click.option("--grid-size", type=int, help="Dump function values on this grid instead of coefficients.")
@click.option("--out", type=click.Path(dir_okay=False))
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv", show_default=True)
def truth(truth, n_trunc, grid_size, out, fmt):
    """Dump a truth's coefficients or function values."""
    spec = parse_truth(truth, n_trunc)
    theta = generate_truth(spec)
    if grid_size:
        g = Grid(grid_size)
        cols, data = ("x", "f"), list(zip(g.points.tolist(), synthesize(theta, g).tolist()))
    else:
        cols, data = ("i", "theta"), list(zip(range(1, len(theta) + 1), theta.coeffs.tolist()))
    if fmt == "json":
        text = json.dumps({"truth": spec.to_dict(), cols[0]: [d[0] for d in data],
                           cols[1]: [d[1] for d in data]}) + "\n"
    else:
        text = ",".join(cols) + "\n" + "".join(f"{a!r},{b!r}\n" for a, b in data)
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        click.echo(text, nl=False)


def main(argv=None):
    try:
        cli(args=argv, standalone_mode=False)
    except click.exceptions.Exit as e:
        sys.exit(e.exit_code)
    except click.ClickException as e:
        e.show()
        sys.exit(1)
    except (ValueError, OSError) as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(1)
    sys.exit(0)


if __name__ == "__main__":
    main()
