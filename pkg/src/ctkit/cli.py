"""Command-line front end.

Exit codes: 0 success, 1 usage or config error, 2 runtime or data error.
Angles and spans are degrees here; everything downstream is radians.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import raster
from .config import ConfigError, RunConfig, default_config
from .evaluation import METHODS, evaluate
from .extrapolation import Extrapolator, KnownMask
from .filtering import calibrate_fbp_scale, fbp
from .fno import init_params
from .model import FnoBpModel, load_checkpoint, reconstruct
from .phantoms import generate_dataset
from .projector import Sinogram
from .training import train


def _guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ConfigError, click.UsageError) as e:
            click.echo(f"error: {e}", err=True)
            sys.exit(1)
        except Exception as e:  # data / runtime errors
            click.echo(f"error: {e}", err=True)
            sys.exit(2)
    return wrapper


@click.group()
@click.option("--threads", type=int, default=None,
              help="Cap worker threads (compute is sequential by default).")
@click.option("--deterministic", is_flag=True,
              help="Force sequential reductions (already the default order).")
def main(threads, deterministic):
    """Fan-beam CT toolkit: FBP, range-condition extrapolation, learned filtering."""


@main.command("init-config")
@click.option("--out", type=click.Path(), default="ctkit.json", show_default=True)
@_guarded
def cmd_init_config(out):
    """Write the default configuration file."""
    Path(out).write_text(json.dumps(default_config(), indent=1, sort_keys=True))
    click.echo(f"wrote {out}")


@main.command("generate")
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--count", type=int, required=True)
@click.option("--span", type=float, required=True, help="Measured wedge span, degrees.")
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@_guarded
def cmd_generate(config_path, count, span, out_dir, seed):
    """Generate a synthetic phantom dataset."""
    cfg = RunConfig.load(config_path)
    manifest = generate_dataset(cfg.phantom_spec(), count, cfg.geometry(),
                                cfg.grid(), span, out_dir, base_seed=seed)
    click.echo(f"wrote {manifest['count']} samples to {out_dir}")


def _build_model(cfg: RunConfig, cache_dir=None) -> FnoBpModel:
    geom = cfg.geometry()
    grid = cfg.grid()
    channels, modes, seed = cfg.fno_dims(geom)
    params = init_params(np.random.default_rng(seed), geom.n_angles, channels, modes)
    scale = cfg.fbp_scale
    if scale is None:
        scale = calibrate_fbp_scale(geom, grid, cfg.filter_spec())
    extrap = Extrapolator(geom, cfg.basis_spec(), lam=cfg.ridge_lambda,
                          cache_dir=cache_dir)
    return FnoBpModel(geom, grid, extrap, cfg.filter_spec(), params, scale)


@main.command("train")
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--data", "data_dir", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--epochs", type=int, default=None)
@click.option("--lr", "learning_rate", type=float, default=None)
@click.option("--batch", "batch_size", type=int, default=None)
@click.option("--resume", "resume_from", type=click.Path(exists=True), default=None)
@_guarded
def cmd_train(config_path, data_dir, out_dir, epochs, learning_rate, batch_size,
              resume_from):
    """Train the learned filter on a generated dataset."""
    cfg = RunConfig.load(config_path)
    model = _build_model(cfg)
    tc = cfg.train_config(epochs=epochs, learning_rate=learning_rate,
                          batch_size=batch_size)
    summary = train(data_dir, tc, model, out_dir, resume_from=resume_from,
                    log=click.echo)
    click.echo(f"final checkpoint: {summary['checkpoint']}")


def _write_png(path, values: np.ndarray) -> None:
    from PIL import Image as PilImage

    lo, hi = float(values.min()), float(values.max())
    norm = np.zeros_like(values) if hi == lo else (values - lo) / (hi - lo)
    PilImage.fromarray((norm * 255).astype(np.uint8), mode="L").save(path)


@main.command("reconstruct")
@click.option("--method", type=click.Choice(METHODS), required=True)
@click.option("--sino", "sino_path", type=click.Path(exists=True), required=True)
@click.option("--mask", "mask_path", type=click.Path(exists=True), default=None)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--ckpt", "ckpt_path", type=click.Path(exists=True), default=None)
@click.option("--out", "out_path", type=click.Path(allow_dash=True), required=True)
@click.option("--png", "png_path", type=click.Path(), default=None)
@_guarded
def cmd_reconstruct(method, sino_path, mask_path, config_path, ckpt_path,
                    out_path, png_path):
    """Reconstruct one sinogram file; '--out -' streams the raster to stdout."""
    if method == "fnobp":
        if ckpt_path is None:
            raise click.UsageError("--method fnobp requires --ckpt")
        model, _ = load_checkpoint(ckpt_path)
        geom, grid = model.geom, model.grid
    else:
        if config_path is None:
            raise click.UsageError(f"--method {method} requires --config")
        cfg = RunConfig.load(config_path)
        geom, grid = cfg.geometry(), cfg.grid()
    g = Sinogram(geom, raster.read(sino_path))
    if method == "fbp":
        if config_path:
            cfg = RunConfig.load(config_path)
            scale = cfg.fbp_scale or calibrate_fbp_scale(geom, grid, cfg.filter_spec())
            rec = fbp(g, grid, cfg.filter_spec(), scale=scale)
        else:
            rec = fbp(g, grid, model.filter_spec, scale=model.fbp_scale)
    else:
        if mask_path is None:
            raise click.UsageError(f"--method {method} requires --mask")
        mask = KnownMask(raster.read(mask_path).astype(bool))
        if method == "fbp-range":
            cfg = RunConfig.load(config_path)
            extrap = Extrapolator(geom, cfg.basis_spec(), lam=cfg.ridge_lambda)
            g_ext = extrap.extrapolate(g, mask)
            scale = cfg.fbp_scale or calibrate_fbp_scale(geom, grid, cfg.filter_spec())
            rec = fbp(g_ext, grid, cfg.filter_spec(), scale=scale)
        else:
            rec = reconstruct(g, mask, model)
    raster.write(out_path, rec.values, meta={"geometry": geom.to_json_dict()})
    if png_path:
        _write_png(png_path, rec.values)
    if out_path != "-":
        click.echo(f"wrote {out_path}")


@main.command("evaluate")
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--methods", default="fbp,fbp-range,fnobp", show_default=True)
@click.option("--spans", default="90,80,70,60,50,40,30", show_default=True)
@click.option("--data", "data_dir", type=click.Path(exists=True), required=True)
@click.option("--ckpt", "ckpt_path", type=click.Path(exists=True), default=None)
@click.option("--report", "report_path", type=click.Path(), required=True)
@click.option("--png-dir", type=click.Path(), default=None)
@_guarded
def cmd_evaluate(config_path, methods, spans, data_dir, ckpt_path, report_path,
                 png_dir):
    """Score reconstruction methods per angular span; emits CSV plus a table."""
    method_list = [m.strip() for m in methods.split(",") if m.strip()]
    for m in method_list:
        if m not in METHODS:
            raise click.UsageError(f"unknown method {m!r}; valid: {', '.join(METHODS)}")
    span_list = [float(s) for s in spans.split(",") if s.strip()]
    cfg = RunConfig.load(config_path)
    model = None
    if "fnobp" in method_list:
        if ckpt_path is None:
            raise click.UsageError("--methods containing fnobp requires --ckpt")
        model, _ = load_checkpoint(ckpt_path)
    geom, grid = cfg.geometry(), cfg.grid()
    scale = cfg.fbp_scale or calibrate_fbp_scale(geom, grid, cfg.filter_spec())
    extrap = Extrapolator(geom, cfg.basis_spec(), lam=cfg.ridge_lambda)
    report = evaluate(method_list, data_dir, span_list, model=model,
                      fbp_scale=scale, filter_spec=cfg.filter_spec(),
                      extrapolator=extrap, log=click.echo)
    report.write_csv(report_path)
    click.echo(report.format_table())
    click.echo(f"wrote {report_path}")


if __name__ == "__main__":
    main()
