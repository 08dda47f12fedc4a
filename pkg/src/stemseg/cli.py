"""Command-line entry point: ``stemseg <subcommand> ...``.

Exit codes: 0 success, 2 configuration error, 3 stage error,
4 mask validation failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

from . import __version__, studies
from .denoise import GaussianParams, NlmParams, denoise, resolve_nlm
from .evaluate import PipelineSettings, evaluate, run_once
from .imagecore import (
    ImageIOError,
    LabelMapError,
    compute_histogram,
    load_image,
    load_labels,
    save_image,
    save_labels,
    write_histogram_csv,
)
from .pipeline import ConfigError, PipelineConfig, StageError, load_config, run_pipeline, write_json, write_size_csv
from .plots import accuracy_curve_svg, size_histogram_svg
from .scenesim import ParticleSampler, SceneError, SceneSpec, load_scene_spec, sample_scene, save_scene_spec, simulate
from .segment import DEFAULT_MIN_AREA, measure_instances, threshold_segment

log = logging.getLogger("stemseg")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3
EXIT_INVALID = 4


def _snr_value(text: str) -> float | None:
    if text.lower() in ("none", "inf", "infinity", "null"):
        return None
    v = float(text)
    if math.isinf(v):
        return None
    if not v > 0:
        raise argparse.ArgumentTypeError("SNR must be positive")
    return v


def _threshold_value(text: str) -> str | int:
    if text == "otsu":
        return text
    v = int(text)
    if not 0 <= v <= 255:
        raise argparse.ArgumentTypeError("fixed threshold must lie in 0..255")
    return v


# --- shared option groups -----------------------------------------------------

def _add_scene_options(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("scene")
    g.add_argument("--scene", type=Path, help="scene spec JSON (flags below override it)")
    g.add_argument("--width", type=int)
    g.add_argument("--height", type=int)
    g.add_argument("--pixel-size", type=float, help="nm per pixel")
    g.add_argument("--count", type=int, help="number of sampled particles")
    g.add_argument("--shape", choices=("sphere", "rod", "cube"))
    g.add_argument("--size-mean", type=float, help="diameter / length / edge in px")
    g.add_argument("--size-std", type=float)
    g.add_argument("--rod-width", type=float)
    g.add_argument("--concavity", type=float)
    g.add_argument("--min-gap", type=int, help="minimum particle separation in px")
    g.add_argument("--dose-rate", type=float)
    g.add_argument("--exposure", type=float)
    g.add_argument("--sin-thickness", type=float)
    g.add_argument("--liquid-thickness", type=float)
    g.add_argument("--texture", type=float, dest="background_texture_amplitude")
    g.add_argument("--contrast-exponent", type=float)
    g.add_argument("--snr", type=_snr_value, dest="target_snr", default=argparse.SUPPRESS,
                   help="target SNR; 'inf' for no Gaussian noise")
    g.add_argument("--seed", type=int)
    g.add_argument("--no-shot-noise", action="store_true")
    g.add_argument("--no-background", action="store_true")


_SCENE_SCALARS = ("width", "height", "pixel_size", "dose_rate", "exposure", "sin_thickness",
                  "liquid_thickness", "background_texture_amplitude", "contrast_exponent", "seed")
_SAMPLER_FIELDS = {"count": "count", "shape": "shape", "size_mean": "size_mean",
                   "size_std": "size_std", "rod_width": "rod_width", "concavity": "concavity",
                   "min_gap": "min_gap"}


def _scene_from_args(args, base: SceneSpec | None = None) -> SceneSpec:
    if getattr(args, "scene", None) is not None:
        if not args.scene.exists():
            raise ConfigError(f"scene file {args.scene} does not exist")
        base = load_scene_spec(args.scene)
    spec = base or SceneSpec()
    changes = {k: getattr(args, k) for k in _SCENE_SCALARS if getattr(args, k, None) is not None}
    if hasattr(args, "target_snr"):
        changes["target_snr"] = args.target_snr
    if args.no_shot_noise:
        changes["shot_noise"] = False
    if args.no_background:
        changes["background"] = False
    sampler_changes = {f: getattr(args, a) for a, f in _SAMPLER_FIELDS.items()
                       if getattr(args, a, None) is not None}
    if sampler_changes:
        current = spec.particles if isinstance(spec.particles, ParticleSampler) else None
        if current is None and "count" not in sampler_changes:
            raise ConfigError("sampler flags need --count when the scene lists explicit particles")
        fields = asdict(current) if current else {}
        fields.update(sampler_changes)
        changes["particles"] = ParticleSampler(**fields)
    return spec.with_(**changes) if changes else spec


def _add_denoise_options(p: argparse.ArgumentParser, with_method: bool = True) -> None:
    g = p.add_argument_group("denoiser")
    if with_method:
        g.add_argument("--denoiser", choices=("none", "gaussian", "nlm"))
    g.add_argument("--sigma", type=float, help="Gaussian sigma (px)")
    g.add_argument("--kernel", type=int, nargs=2, metavar=("W", "H"), help="Gaussian kernel size")
    g.add_argument("--patch-radius", type=int)
    g.add_argument("--search-radius", type=int)
    g.add_argument("--h", type=float, help="NLM filtering strength (default 0.8 * noise sigma)")
    g.add_argument("--noise-sigma", type=float, help="NLM noise level (default: estimated)")


def _denoiser_from_args(method: str | None, args, current=None):
    if method is None:
        if current is None:
            return None
        method = "gaussian" if isinstance(current, GaussianParams) else "nlm"
    if method == "none":
        return None
    if method == "gaussian":
        base = asdict(current) if isinstance(current, GaussianParams) else {}
        if args.sigma is not None:
            base["sigma"] = args.sigma
        if args.kernel is not None:
            base["kernel"] = tuple(args.kernel)
        return GaussianParams(**base)
    base = asdict(current) if isinstance(current, NlmParams) else {}
    for flag, fld in (("patch_radius", "patch_radius"), ("search_radius", "search_radius"),
                      ("h", "h"), ("noise_sigma", "sigma")):
        if getattr(args, flag) is not None:
            base[fld] = getattr(args, flag)
    return NlmParams(**base)


def _add_segment_options(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("segmentation / scoring")
    g.add_argument("--threshold", type=_threshold_value, help="'otsu' or a fixed level 0..255")
    g.add_argument("--min-area", type=int, help="drop instances smaller than this (px^2)")
    g.add_argument("--iou-min", type=float, help="IoU needed for a match")
    g.add_argument("--bin-width", type=float, help="size histogram bin width (px^2)")


def _settings_from_args(args, base: PipelineSettings | None = None) -> PipelineSettings:
    base = base or PipelineSettings()
    den = _denoiser_from_args(getattr(args, "denoiser", None), args, base.denoiser)
    fields = {"denoiser": den}
    for name in ("threshold", "min_area", "iou_min", "bin_width"):
        v = getattr(args, name, None)
        fields[name] = getattr(base, name) if v is None else v
    return PipelineSettings(**fields)


# --- subcommands --------------------------------------------------------------

def cmd_simulate(args) -> int:
    spec = _scene_from_args(args)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    scene = simulate(spec, sample_scene(spec))
    prov = {"tool": "stemseg", "version": __version__, "seed": spec.seed, "scene": spec.to_dict()}
    save_image(scene.clean, out / "clean.png", args.depth, prov)
    save_image(scene.noisy, out / "noisy.png", args.depth, prov)
    save_labels(scene.truth, out / "truth_labels.png", prov)
    save_scene_spec(spec, out / "scene.json", {
        "provenance": prov,
        "particles": [p.to_dict() for p in scene.particles],
        "noise": scene.noise.to_dict(),
    })
    log.info("wrote %d particles to %s", len(scene.particles), out)
    return EXIT_OK


def cmd_denoise(args) -> int:
    img = load_image(args.input)
    params = _denoiser_from_args(args.method, args)
    out_img = denoise(img, params)
    save_image(out_img, args.output, args.depth)
    if args.report:
        echo = params.to_dict() if params else {"type": "none"}
        if isinstance(params, NlmParams):
            sigma, h = resolve_nlm(img, params)
            echo["resolved"] = {"sigma": sigma, "h": h}
        write_json({"input": str(args.input), "output": str(args.output), "denoiser": echo,
                    "version": __version__}, args.report)
    return EXIT_OK


def cmd_segment(args) -> int:
    img = load_image(args.input)
    labels, level = threshold_segment(img, args.threshold, args.min_area)
    save_labels(labels, args.output)
    if args.instances:
        write_json({"threshold_level": level, "min_area": args.min_area,
                    "instances": [i.to_dict() for i in measure_instances(labels)]}, args.instances)
    log.info("threshold %s, %d instances", level, int(labels.max(initial=0)))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    truth = load_labels(args.truth, compact=args.compact)
    pred = load_labels(args.pred, compact=args.compact)
    settings = _settings_from_args(args)
    report = evaluate(truth, pred, settings.iou_min, settings.bin_width,
                      {"truth": str(args.truth), "pred": str(args.pred)})
    doc = report.to_dict()
    if args.output:
        write_json(doc, args.output)
        stem = args.output.with_suffix("")
        write_size_csv(report.size_histogram, stem.with_name(stem.name + "_sizes.csv"))
        if args.plots:
            size_histogram_svg(report.size_histogram, stem.with_name(stem.name + "_sizes.svg"))
    else:
        json.dump({k: doc[k] for k in ("tp", "fp", "fn", "precision", "recall", "f1",
                                       "pixel_accuracy", "mean_iou")}, sys.stdout, indent=2)
        print()
    return EXIT_OK


def cmd_pipeline(args) -> int:
    if args.config is not None:
        if not args.config.exists():
            raise ConfigError(f"config file {args.config} does not exist")
        cfg = load_config(args.config)
    else:
        cfg = PipelineConfig(SceneSpec())
    cfg = PipelineConfig(_scene_from_args(args, cfg.scene), _settings_from_args(args, cfg.settings),
                         args.out or cfg.output_dir)
    report = run_pipeline(cfg)
    print(f"recall={report.recall:.4f} precision={report.precision:.4f} "
          f"pixel_accuracy={report.pixel_accuracy:.4f} mean_iou={report.mean_iou:.4f} -> {cfg.output_dir}")
    return EXIT_OK


def _sweep_job(job):
    name, spec, settings = job
    return name, run_once(spec, settings).report.to_dict()


def cmd_sweep(args) -> int:
    settings = _settings_from_args(args)
    seed = args.seed if args.seed is not None else studies.GOLDEN_SEED
    if args.study == "noise":
        base = studies.noise_scene(seed)
        particles = tuple(sample_scene(base))
        jobs = [(snr, base.with_(target_snr=snr, particles=particles), settings)
                for snr in studies.NOISE_LEVELS]
    elif args.study == "size":
        base = studies.noise_scene(seed, studies.SIZE_STUDY_SNR)
        jobs = []
        for d in studies.SIZE_DIAMETERS:
            s = base.particles
            jobs.append((d, base.with_(particles=ParticleSampler(
                **{**asdict(s), "size_mean": d, "size_std": s.size_std * d / s.size_mean})), settings))
    elif args.study == "shape":
        jobs = [(n, spec, settings) for n, spec in studies.shape_scenes(seed).items()]
    else:
        if not args.snr_list:
            raise ConfigError("--snr-list is required for a custom SNR sweep")
        base = _scene_from_args(args)
        particles = tuple(sample_scene(base))
        jobs = [(snr, base.with_(target_snr=snr, particles=particles), settings) for snr in args.snr_list]

    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_sweep_job, jobs))
    else:
        results = [_sweep_job(j) for j in jobs]

    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    doc = {"version": __version__, "study": args.study, "seed": seed, "settings": settings.to_dict(),
           "runs": [{"condition": name, "report": rep} for name, rep in results]}
    write_json(doc, out / "sweep.json")
    xs = [name for name, _ in results]
    accuracy_curve_svg(xs, {
        "pixel accuracy": [r["pixel_accuracy"] for _, r in results],
        "recall": [r["recall"] for _, r in results],
        "mean IoU": [r["mean_iou"] for _, r in results],
    }, out / "sweep.svg", xlabel=args.study)
    for name, r in results:
        print(f"{'inf' if name is None else name!s:>10}  recall={r['recall']:.4f}  pixel_accuracy={r['pixel_accuracy']:.4f}  "
              f"mean_iou={r['mean_iou']:.4f}  tp={r['tp']} fp={r['fp']} fn={r['fn']}")
    return EXIT_OK


def cmd_hist(args) -> int:
    hist = compute_histogram(load_image(args.input))
    if args.output:
        write_histogram_csv(hist, args.output)
    else:
        print("bin,count")
        for b, c in enumerate(hist):
            print(f"{b},{c}")
    return EXIT_OK


def cmd_validate_masks(args) -> int:
    ok = True
    for path in args.inputs:
        try:
            labels = load_labels(path)
            print(f"{path}: ok ({int(labels.max(initial=0))} instances)")
            continue
        except LabelMapError as exc:
            reason = str(exc)
        except ImageIOError as exc:
            print(f"{path}: INVALID ({exc})")
            ok = False
            continue
        if args.fix_dir is None:
            print(f"{path}: INVALID ({reason})")
            ok = False
            continue
        args.fix_dir.mkdir(parents=True, exist_ok=True)
        target = args.fix_dir / Path(path).name
        save_labels(load_labels(path, compact=True), target)
        print(f"{path}: not compact, renumbered copy written to {target}")
    return EXIT_OK if ok else EXIT_INVALID


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stemseg", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"stemseg {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="render a synthetic scene with ground truth")
    _add_scene_options(p)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--depth", type=int, choices=(8, 16), default=16)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("denoise", help="Gaussian or NLM filter an image")
    p.add_argument("input", type=Path)
    p.add_argument("output", type=Path)
    p.add_argument("--method", choices=("gaussian", "nlm"), default="nlm")
    _add_denoise_options(p, with_method=False)
    p.add_argument("--depth", type=int, choices=(8, 16), default=16)
    p.add_argument("--report", type=Path, help="write the parameters used as JSON")
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("segment", help="threshold + label an image")
    p.add_argument("input", type=Path)
    p.add_argument("output", type=Path, help="16-bit label PNG")
    p.add_argument("--threshold", type=_threshold_value, default="otsu")
    p.add_argument("--min-area", type=int, default=DEFAULT_MIN_AREA)
    p.add_argument("--instances", type=Path, help="write the instance table as JSON")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("evaluate", help="score a predicted label map against truth")
    p.add_argument("--truth", type=Path, required=True)
    p.add_argument("--pred", type=Path, required=True)
    p.add_argument("--iou-min", type=float)
    p.add_argument("--bin-width", type=float)
    p.add_argument("--compact", action="store_true", help="renumber non-compact label maps instead of failing")
    p.add_argument("--output", type=Path, help="report JSON (size CSV written alongside)")
    p.add_argument("--plots", action="store_true", help="also write an SVG size histogram")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("pipeline", help="simulate -> denoise -> segment -> evaluate")
    p.add_argument("--config", type=Path, help="pipeline config JSON; flags override it")
    _add_scene_options(p)
    _add_denoise_options(p)
    _add_segment_options(p)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("sweep", help="noise / size / shape studies or a custom SNR sweep")
    p.add_argument("--study", choices=("noise", "size", "shape", "snr"), default="noise")
    p.add_argument("--snr-list", type=lambda s: [_snr_value(x) for x in s.split(",")],
                   help="comma-separated SNRs for --study snr, e.g. inf,14.5497,7.487")
    _add_scene_options(p)
    _add_denoise_options(p)
    _add_segment_options(p)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("hist", help="256-bin intensity histogram as CSV")
    p.add_argument("input", type=Path)
    p.add_argument("--output", type=Path)
    p.set_defaults(func=cmd_hist)

    p = sub.add_parser("validate-masks", help="check imported label PNGs (and optionally compact them)")
    p.add_argument("inputs", type=Path, nargs="+")
    p.add_argument("--fix-dir", type=Path, help="write compacted copies here instead of failing")
    p.set_defaults(func=cmd_validate_masks)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, SceneError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except (ImageIOError, LabelMapError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
