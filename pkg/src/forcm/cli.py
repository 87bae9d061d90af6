"""Command-line front end.

Subcommands mirror the library stages: ``segment``, ``run``, ``synth``,
``pseudo-heatmap``, ``evaluate``, ``compare``. stdout carries only the
machine-readable payload (JSON, or the comparison table); diagnostics go to
stderr. Exit codes: 0 success, 1 processing error, 2 usage error.

Radius units: ``--range-radius`` is given in raw 8-bit sample units exactly
as in GIS tooling (the default 5 matches the usual mean-shift setting) and is
divided by 255 internally, because the pipeline operates on imagery
normalized to [0, 1].

Option precedence: command-line flag > ``--config`` file (key=value lines,
keys named like the flags with underscores) > built-in default. The resolved
configuration is echoed into the run manifest.
"""

from __future__ import annotations

import hashlib
import json
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import __version__
from .errors import ForcmError
from .features import FeatureSpec
from .meanshift import MeanShiftParams, segment as run_segmentation
from .metrics import MetricsReport, compare_runs, compute_metrics, confusion
from .pipeline import MODE_FORCM, PipelineConfig, run_pipeline
from .raster_io import (
    Raster,
    normalize_image,
    read_heatmap,
    read_image,
    read_mask,
    sample_dtype,
    write_binary_map,
    write_heatmap,
    write_image,
    write_label_raster,
    write_mask_png,
)
from .svm import SvmParams, save_model
from .synth import SceneSpec, generate_scene, ndvi_pseudo_heatmap, oracle_heatmap

_NORMALIZE_BY_DTYPE = {"uint8": 255.0, "uint16": 65535.0}


def _fail(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


def _emit(payload: dict) -> None:
    click.echo(json.dumps(payload, indent=2))


def _parse_config_file(path: str | None) -> dict[str, str]:
    if path is None:
        return {}
    values: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise click.UsageError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def _resolve(cli_value, file_values: dict[str, str], key: str, default, cast):
    if cli_value is not None:
        return cli_value
    if key in file_values:
        try:
            return cast(file_values[key])
        except ValueError as exc:
            raise click.UsageError(f"config key {key}: {exc}") from exc
    return default


def _load_normalized(path: str, max_value: float | None) -> Raster:
    """Read an image and normalize by the sensor maximum (inferred from dtype)."""
    img = read_image(path)
    if max_value is None:
        max_value = _NORMALIZE_BY_DTYPE.get(sample_dtype(path).name, 1.0)
    if max_value != 1.0:
        img = normalize_image(img, max_value)
    return img


def _meanshift_params(spatial_radius, range_radius_raw, min_size,
                      max_iterations, convergence_eps) -> MeanShiftParams:
    return MeanShiftParams(
        spatial_radius=spatial_radius,
        range_radius=range_radius_raw / 255.0,
        min_segment_size=min_size,
        max_iterations=max_iterations,
        convergence_eps=convergence_eps,
    )


@click.group()
@click.version_option(version=__version__, prog_name="forcm")
def main() -> None:
    """Forest cover mapping: segmentation, fusion classification, evaluation."""


_config_opt = click.option("--config", "config_path", type=click.Path(exists=True),
                           default=None, help="key=value file; flags override it.")
_threads_opt = click.option("--threads", type=int, default=None,
                            help="Upper bound on internal parallelism (results "
                                 "are identical for any value). [default: 1]")


@main.command("segment")
@click.option("--input", "input_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True,
              help="Output uint32 label GeoTIFF.")
@click.option("--spatial-radius", type=float, default=None,
              help="Window radius in pixels. [default: 5]")
@click.option("--range-radius", type=float, default=None,
              help="Spectral radius in raw 8-bit units; divided by 255 "
                   "internally. [default: 5]")
@click.option("--min-size", type=int, default=None,
              help="Minimum segment size in pixels. [default: 100]")
@click.option("--max-iterations", type=int, default=None)
@click.option("--convergence-eps", type=float, default=None)
@click.option("--max-value", type=float, default=None,
              help="Normalization divisor; inferred from the sample type "
                   "when omitted (uint8: 255, uint16: 65535, float: 1).")
@_threads_opt
@_config_opt
def cmd_segment(input_path, out_path, spatial_radius, range_radius, min_size,
                max_iterations, convergence_eps, max_value, threads, config_path):
    """Segment an image and write the label raster plus a stats line."""
    file_values = _parse_config_file(config_path)
    params = _meanshift_params(
        _resolve(spatial_radius, file_values, "spatial_radius", 5.0, float),
        _resolve(range_radius, file_values, "range_radius", 5.0, float),
        _resolve(min_size, file_values, "min_size", 100, int),
        _resolve(max_iterations, file_values, "max_iterations", 100, int),
        _resolve(convergence_eps, file_values, "convergence_eps", 1e-3, float),
    )
    threads = _resolve(threads, file_values, "threads", 1, int)
    try:
        img = _load_normalized(input_path, max_value)
        seg = run_segmentation(img, params, threads=threads)
        write_label_raster(seg.labels, img.geotransform, out_path)
        sizes = np.sort(seg.segment_sizes)
        payload = {
            "out": str(out_path),
            "segment_count": seg.segment_count,
            "min_size": int(sizes[0]),
            "median_size": float(np.median(sizes)),
            "max_size": int(sizes[-1]),
        }
    except (ForcmError, FileNotFoundError, OSError) as exc:
        _fail(str(exc))
    _emit(payload)


@main.command("run")
@click.option("--mode", type=click.Choice(["obia", "forcm"]), default="obia",
              show_default=True)
@click.option("--input", "input_path", type=click.Path(exists=True), required=True)
@click.option("--truth", "truth_path", type=click.Path(exists=True), required=True,
              help="Ground-truth mask (PNG or GeoTIFF).")
@click.option("--heatmap", "heatmap_path", type=click.Path(exists=True), default=None,
              help="Probability heatmap; required in forcm mode.")
@click.option("--out-dir", type=click.Path(), required=True)
@click.option("--seed", type=int, default=None, help="[default: 0]")
@click.option("--threshold", type=float, default=None,
              help="Decision-value cutoff for forest. [default: 0]")
@click.option("--train-fraction", type=float, default=None, help="[default: 0.1]")
@click.option("--min-train-segments", type=int, default=None, help="[default: 50]")
@click.option("--spatial-radius", type=float, default=None)
@click.option("--range-radius", type=float, default=None,
              help="Raw 8-bit units, divided by 255 internally. [default: 5]")
@click.option("--min-size", type=int, default=None)
@click.option("--max-iterations", type=int, default=None)
@click.option("--convergence-eps", type=float, default=None)
@click.option("--svm-c", type=float, default=None, help="[default: 1.0]")
@click.option("--svm-max-epochs", type=int, default=None)
@click.option("--svm-tol", type=float, default=None)
@click.option("--max-value", type=float, default=None,
              help="Normalization divisor (see `segment`).")
@_threads_opt
@_config_opt
@click.pass_context
def cmd_run(ctx, mode, input_path, truth_path, heatmap_path, out_dir, seed,
            threshold, train_fraction, min_train_segments, spatial_radius,
            range_radius, min_size, max_iterations, convergence_eps, svm_c,
            svm_max_epochs, svm_tol, max_value, threads, config_path):
    """Classify one scene end to end; write prediction, metrics, manifest."""
    file_values = _parse_config_file(config_path)
    if ctx.get_parameter_source("mode") != click.core.ParameterSource.COMMANDLINE:
        mode = file_values.get("mode", mode)
    if mode not in ("obia", "forcm"):
        raise click.UsageError(f"mode must be obia or forcm, got {mode!r}")
    if mode == MODE_FORCM and heatmap_path is None:
        raise click.UsageError("--heatmap is required in forcm mode")
    if mode != MODE_FORCM and heatmap_path is not None:
        raise click.UsageError("--heatmap is only valid in forcm mode")

    seed = _resolve(seed, file_values, "seed", 0, int)
    cfg = PipelineConfig(
        mode=mode,
        train_fraction=_resolve(train_fraction, file_values, "train_fraction", 0.10, float),
        min_train_segments=_resolve(min_train_segments, file_values,
                                    "min_train_segments", 50, int),
        seed=seed,
        threshold=_resolve(threshold, file_values, "threshold", 0.0, float),
        meanshift=_meanshift_params(
            _resolve(spatial_radius, file_values, "spatial_radius", 5.0, float),
            _resolve(range_radius, file_values, "range_radius", 5.0, float),
            _resolve(min_size, file_values, "min_size", 100, int),
            _resolve(max_iterations, file_values, "max_iterations", 100, int),
            _resolve(convergence_eps, file_values, "convergence_eps", 1e-3, float),
        ),
        svm=SvmParams(
            C=_resolve(svm_c, file_values, "svm_c", 1.0, float),
            max_epochs=_resolve(svm_max_epochs, file_values, "svm_max_epochs", 1000, int),
            tol=_resolve(svm_tol, file_values, "svm_tol", 1e-4, float),
            seed=seed + 1,  # sampling and epoch permutation use distinct streams
        ),
        features=FeatureSpec(),
    )
    threads = _resolve(threads, file_values, "threads", 1, int)

    out = Path(out_dir)
    timings: dict[str, float] = {}
    try:
        out.mkdir(parents=True, exist_ok=True)
        t0 = time.perf_counter()
        img = _load_normalized(input_path, max_value)
        truth = read_mask(truth_path)
        heat = read_heatmap(heatmap_path) if heatmap_path else None
        timings["read_ms"] = (time.perf_counter() - t0) * 1000.0

        prediction, classified, report = run_pipeline(
            img, heat, truth, cfg, threads=threads, stage_timings=timings)

        t0 = time.perf_counter()
        write_binary_map(prediction, img.geotransform, out / "prediction.tif")
        save_model(classified.model, out / "model.txt")
        (out / "metrics.json").write_text(report.to_json() + "\n")
        timings["write_ms"] = (time.perf_counter() - t0) * 1000.0

        manifest = {
            "tool_version": __version__,
            "config_hash": report.config_hash,
            "inputs": {
                "image": str(input_path),
                "truth": str(truth_path),
                "heatmap": str(heatmap_path) if heatmap_path else None,
            },
            "seeds": {"sampling": cfg.seed, "svm": cfg.svm.seed},
            "config": _describe_config(cfg, threads),
            "timings_ms": {k: round(v, 3) for k, v in timings.items()},
        }
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    except (ForcmError, FileNotFoundError, OSError) as exc:
        _fail(str(exc))
    _emit(report.to_dict())


def _describe_config(cfg: PipelineConfig, threads: int) -> dict:
    return {
        "mode": cfg.mode,
        "train_fraction": cfg.train_fraction,
        "min_train_segments": cfg.min_train_segments,
        "seed": cfg.seed,
        "threshold": cfg.threshold,
        "spatial_radius": cfg.meanshift.spatial_radius,
        "range_radius_normalized": cfg.meanshift.range_radius,
        "min_size": cfg.meanshift.min_segment_size,
        "max_iterations": cfg.meanshift.max_iterations,
        "convergence_eps": cfg.meanshift.convergence_eps,
        "svm_c": cfg.svm.C,
        "svm_max_epochs": cfg.svm.max_epochs,
        "svm_tol": cfg.svm.tol,
        "threads": threads,
    }


@main.command("synth")
@click.option("--seed", type=int, default=None, help="[default: 0]")
@click.option("--size", type=int, default=None,
              help="Scene width and height in pixels. [default: 128]")
@click.option("--bands", type=click.Choice(["3", "4"]), default=None,
              help="[default: 4]")
@click.option("--n-blobs", type=int, default=None, help="[default: 4]")
@click.option("--blob-scale", type=float, default=None,
              help="Typical blob radius in pixels. [default: size/5]")
@click.option("--noise-sigma", type=float, default=None, help="[default: 0]")
@click.option("--boundary-blur", type=int, default=None, help="[default: 0]")
@click.option("--out-image", type=click.Path(), required=True)
@click.option("--out-mask", type=click.Path(), required=True,
              help="Truth mask; written as PNG if the path ends in .png.")
@click.option("--out-heatmap", type=click.Path(), default=None,
              help="Also write a degraded-oracle heatmap.")
@click.option("--heatmap-error-rate", type=float, default=0.0, show_default=True)
@click.option("--heatmap-blur", type=int, default=0, show_default=True)
@_config_opt
def cmd_synth(seed, size, bands, n_blobs, blob_scale, noise_sigma, boundary_blur,
              out_image, out_mask, out_heatmap, heatmap_error_rate, heatmap_blur,
              config_path):
    """Generate a reproducible synthetic scene with exact ground truth."""
    file_values = _parse_config_file(config_path)
    seed = _resolve(seed, file_values, "seed", 0, int)
    size = _resolve(size, file_values, "size", 128, int)
    bands = _resolve(bands, file_values, "bands", "4", str)
    n_blobs = _resolve(n_blobs, file_values, "n_blobs", 4, int)
    blob_scale = _resolve(blob_scale, file_values, "blob_scale", size / 5.0, float)
    noise_sigma = _resolve(noise_sigma, file_values, "noise_sigma", 0.0, float)
    boundary_blur = _resolve(boundary_blur, file_values, "boundary_blur", 0, int)
    try:
        spec = SceneSpec(
            width=size, height=size, bands=int(bands), n_blobs=n_blobs,
            blob_scale=blob_scale, noise_sigma=noise_sigma,
            boundary_blur=boundary_blur, seed=seed,
        )
        img, mask = generate_scene(spec)
        write_image(img, out_image)
        if str(out_mask).lower().endswith(".png"):
            write_mask_png(mask, out_mask)
        else:
            write_binary_map(mask, img.geotransform, out_mask)
        payload = {
            "image": str(out_image),
            "mask": str(out_mask),
            "image_sha256": hashlib.sha256(img.samples.tobytes()).hexdigest(),
            "mask_sha256": hashlib.sha256(mask.labels.tobytes()).hexdigest(),
        }
        if out_heatmap is not None:
            heat = oracle_heatmap(mask, heatmap_error_rate, heatmap_blur, seed=seed)
            write_heatmap(heat, img.geotransform, out_heatmap)
            payload["heatmap"] = str(out_heatmap)
            payload["heatmap_sha256"] = hashlib.sha256(heat.prob.tobytes()).hexdigest()
    except (ForcmError, OSError) as exc:
        _fail(str(exc))
    _emit(payload)


@main.command("pseudo-heatmap")
@click.option("--input", "input_path", type=click.Path(exists=True), required=True,
              help="4-band (R,G,B,NIR) image.")
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--max-value", type=float, default=None,
              help="Normalization divisor (see `segment`).")
def cmd_pseudo_heatmap(input_path, out_path, max_value):
    """Write the NDVI-based stand-in heatmap for a 4-band image."""
    try:
        img = _load_normalized(input_path, max_value)
        heat = ndvi_pseudo_heatmap(img)
        write_heatmap(heat, img.geotransform, out_path)
    except (ForcmError, FileNotFoundError, OSError) as exc:
        _fail(str(exc))
    _emit({"out": str(out_path),
           "sha256": hashlib.sha256(heat.prob.tobytes()).hexdigest()})


@main.command("evaluate")
@click.option("--pred", "pred_path", type=click.Path(exists=True), required=True)
@click.option("--truth", "truth_path", type=click.Path(exists=True), required=True)
def cmd_evaluate(pred_path, truth_path):
    """Pixel-wise metrics between a predicted binary map and ground truth."""
    try:
        pred = read_mask(pred_path)
        truth = read_mask(truth_path)
        report = compute_metrics(confusion(pred, truth))
    except (ForcmError, FileNotFoundError, OSError) as exc:
        _fail(str(exc))
    _emit(report.to_dict())


@main.command("compare")
@click.argument("reports", nargs=-1, required=True,
                type=click.Path(exists=True))
@click.option("--json", "as_json", is_flag=True, default=False,
              help="Emit the JSON payload instead of the text table.")
def cmd_compare(reports, as_json):
    """Compare metrics JSON files; best value per metric is starred."""
    try:
        parsed = [MetricsReport.from_dict(json.loads(Path(p).read_text()))
                  for p in reports]
        names = [str(Path(p).with_suffix("")) for p in reports]
        table, payload = compare_runs(parsed, names=names)
    except (ForcmError, OSError, KeyError, json.JSONDecodeError) as exc:
        _fail(str(exc))
    if as_json:
        _emit(payload)
    else:
        click.echo(table)


if __name__ == "__main__":
    main()
