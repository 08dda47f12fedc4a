"""End-to-end runs: simulate, denoise, segment, evaluate, write artifacts."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .denoise import denoise
from .evaluate import PipelineSettings, evaluate
from .imagecore import compute_histogram, save_image, save_labels, write_histogram_csv
from .plots import size_histogram_svg
from .scenesim import SceneError, SceneSpec, load_scene_spec, measure_snr, sample_scene, simulate
from .segment import measure_instances, threshold_segment

CONFIG_SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class PipelineConfig:
    scene: SceneSpec
    settings: PipelineSettings = field(default_factory=PipelineSettings)
    output_dir: Path = Path("out")

    def to_dict(self) -> dict:
        return {
            "schema_version": CONFIG_SCHEMA_VERSION,
            "scene": self.scene.to_dict(),
            **self.settings.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | None = None, output_dir=None) -> "PipelineConfig":
        """Build a config from a JSON document.

        ``scene`` may be an inline object or ``scene_file`` a path (resolved
        against ``base_dir``).
        """
        d = dict(d)
        version = d.pop("schema_version", CONFIG_SCHEMA_VERSION)
        if version != CONFIG_SCHEMA_VERSION:
            raise ConfigError(f"unsupported config schema_version {version}")
        try:
            if "scene_file" in d:
                p = Path(d.pop("scene_file"))
                if base_dir is not None and not p.is_absolute():
                    p = base_dir / p
                if not p.exists():
                    raise ConfigError(f"scene file {p} does not exist")
                scene = load_scene_spec(p)
            elif "scene" in d:
                scene = SceneSpec.from_dict(d.pop("scene"))
            else:
                scene = SceneSpec()
            out = d.pop("output_dir", None)
            settings = PipelineSettings.from_dict(d)
        except (SceneError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc
        return cls(scene, settings, Path(output_dir or out or "out"))


def load_config(path: str | Path, output_dir=None) -> PipelineConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return PipelineConfig.from_dict(doc, path.parent, output_dir)


def provenance(cfg: PipelineConfig) -> dict:
    return {"tool": "stemseg", "version": __version__, "seed": cfg.scene.seed, "config": cfg.to_dict()}


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o)}")


def write_json(obj, path: Path) -> None:
    """Write ``obj`` as sorted, NaN-free JSON; objects get a ``schema_version``."""
    if isinstance(obj, dict) and "schema_version" not in obj:
        obj = {"schema_version": CONFIG_SCHEMA_VERSION, **obj}
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default,
                               allow_nan=False) + "\n")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_pipeline(cfg: PipelineConfig):
    """Run the full workflow and write every artifact into ``cfg.output_dir``.

    Stage failures raise :class:`StageError` naming the stage; files written
    before the failure are left in place.
    """
    out = Path(cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from exc
    prov = provenance(cfg)
    s = cfg.settings
    written: list[Path] = []

    def stage(name, fn, *args):
        try:
            return fn(*args)
        except Exception as exc:  # surfaced with the stage name
            raise StageError(name, exc) from exc

    def keep(p: Path) -> Path:
        written.append(p)
        return p

    particles = stage("simulate", sample_scene, cfg.scene)
    scene = stage("simulate", simulate, cfg.scene, particles)
    save_image(scene.clean, keep(out / "clean.png"), 16, prov)
    save_image(scene.noisy, keep(out / "noisy.png"), 16, prov)
    save_labels(scene.truth, keep(out / "truth_labels.png"), prov)
    write_histogram_csv(compute_histogram(scene.noisy), keep(out / "intensity_hist.csv"))
    snr_est = None
    if scene.truth.any() and not scene.truth.all():
        snr_est = measure_snr(scene.noisy, scene.truth)
    write_json({
        "provenance": prov,
        "scene": cfg.scene.to_dict(),
        "particles": [p.to_dict() for p in scene.particles],
        "noise": scene.noise.to_dict(),
        "measured_snr": None if snr_est is None or math.isinf(snr_est) else snr_est,
    }, keep(out / "scene.json"))

    den = stage("denoise", denoise, scene.noisy, s.denoiser)
    save_image(den, keep(out / "denoised.png"), 16, prov)

    pred, level = stage("segment", threshold_segment, den, s.threshold, s.min_area)
    save_labels(pred, keep(out / "pred_labels.png"), prov)
    write_json({"provenance": prov, "threshold_level": level,
                "instances": [i.to_dict() for i in measure_instances(pred)]},
               keep(out / "instances.json"))

    config = {**s.to_dict(), "threshold_level": level, "seed": cfg.scene.seed,
              "target_snr": cfg.scene.target_snr, "noise": scene.noise.to_dict(),
              "measured_snr": None if snr_est is None or math.isinf(snr_est) else snr_est}
    report = stage("evaluate", evaluate, scene.truth, pred, s.iou_min, s.bin_width, config)
    write_json({**report.to_dict(), "provenance": prov}, keep(out / "report.json"))
    write_size_csv(report.size_histogram, keep(out / "size_hist.csv"))
    size_histogram_svg(report.size_histogram, keep(out / "size_hist.svg"), "Predicted instance area")

    write_json({"provenance": prov,
                "artifacts": {p.name: _sha256(p) for p in written}}, out / "manifest.json")
    return report


def write_size_csv(hist: dict, path: Path) -> None:
    lines = ["bin_start,bin_end,count"]
    edges = hist["edges"]
    for k, c in enumerate(hist["counts"]):
        lines.append(f"{edges[k]:g},{edges[k + 1]:g},{c}")
    path.write_text("\n".join(lines) + "\n")
