"""Scoring predicted label maps against ground truth, and study sweeps."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .denoise import GaussianParams, NlmParams, denoise, denoiser_from_dict
from .imagecore import as_labels, check_same_shape
from .scenesim import ParticleSampler, SceneSpec, measure_snr, sample_scene, simulate
from .segment import DEFAULT_MIN_AREA, InstanceStats, measure_instances, threshold_segment

REPORT_SCHEMA_VERSION = 1
DEFAULT_IOU_MIN = 0.5
DEFAULT_BIN_WIDTH = 250


def iou(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection over union of two boolean regions."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    check_same_shape(a, b, "regions")
    union = np.count_nonzero(a | b)
    if union == 0:
        raise ValueError("IoU is undefined for two empty regions")
    return np.count_nonzero(a & b) / union


def overlap_table(truth: np.ndarray, pred: np.ndarray) -> np.ndarray:
    """Contingency counts ``c[t, p]`` of pixels with truth label t and pred label p."""
    nt = int(truth.max(initial=0))
    npred = int(pred.max(initial=0))
    idx = truth.ravel() * (npred + 1) + pred.ravel()
    return np.bincount(idx, minlength=(nt + 1) * (npred + 1)).reshape(nt + 1, npred + 1)


def iou_matrix(truth: np.ndarray, pred: np.ndarray) -> np.ndarray:
    """IoU of every (truth instance, predicted instance) pair, shape (Nt, Np)."""
    c = overlap_table(truth, pred)
    inter = c[1:, 1:].astype(np.float64)
    at = c[1:, :].sum(axis=1)
    ap = c[:, 1:].sum(axis=0)
    union = at[:, None] + ap[None, :] - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(union > 0, inter / union, 0.0)


@dataclass
class MatchTable:
    pairs: list[tuple[int, int, float]]
    unmatched_truth: list[int]
    unmatched_pred: list[int]
    n_truth: int
    n_pred: int
    iou_min: float

    def to_dict(self) -> dict:
        return {
            "pairs": [{"truth": t, "pred": p, "iou": v} for t, p, v in self.pairs],
            "unmatched_truth": self.unmatched_truth,
            "unmatched_pred": self.unmatched_pred,
            "iou_min": self.iou_min,
        }


def match_instances(truth: np.ndarray, pred: np.ndarray, iou_min: float = DEFAULT_IOU_MIN) -> MatchTable:
    """Greedy one-to-one matching in descending IoU order.

    Only pairs with IoU >= ``iou_min`` (and a nonzero overlap) are eligible.
    Equal IoUs are resolved by ascending (truth label, pred label).
    """
    truth = as_labels(truth)
    pred = as_labels(pred)
    check_same_shape(truth, pred, "truth and prediction")
    m = iou_matrix(truth, pred)
    nt, npred = m.shape
    ti, pi = np.nonzero((m >= iou_min) & (m > 0))
    vals = m[ti, pi]
    order = np.lexsort((pi, ti, -vals))
    used_t = np.zeros(nt, dtype=bool)
    used_p = np.zeros(npred, dtype=bool)
    pairs = []
    for k in order:
        t, p = ti[k], pi[k]
        if used_t[t] or used_p[p]:
            continue
        used_t[t] = used_p[p] = True
        pairs.append((int(t) + 1, int(p) + 1, float(vals[k])))
    pairs.sort()
    return MatchTable(
        pairs=pairs,
        unmatched_truth=[int(t) + 1 for t in np.flatnonzero(~used_t)],
        unmatched_pred=[int(p) + 1 for p in np.flatnonzero(~used_p)],
        n_truth=nt,
        n_pred=npred,
        iou_min=float(iou_min),
    )


def detection_metrics(m: MatchTable) -> dict:
    tp = len(m.pairs)
    fp = len(m.unmatched_pred)
    fn = len(m.unmatched_truth)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {"tp": tp, "fp": fp, "fn": fn, "precision": precision, "recall": recall, "f1": f1}


def pixel_accuracy(truth: np.ndarray, pred: np.ndarray) -> float:
    """Fraction of pixels whose foreground/background class agrees."""
    truth = np.asarray(truth)
    pred = np.asarray(pred)
    check_same_shape(truth, pred, "truth and prediction")
    return float(np.mean((truth != 0) == (pred != 0)))


def per_instance_iou(m: MatchTable) -> list[float]:
    """IoU for each truth instance in label order; 0 where unmatched."""
    out = [0.0] * m.n_truth
    for t, _, v in m.pairs:
        out[t - 1] = v
    return out


def size_distribution(stats: list[InstanceStats], bin_width: float = DEFAULT_BIN_WIDTH) -> dict:
    """Histogram of instance areas in bins ``[k w, (k+1) w)`` starting at 0."""
    if not bin_width > 0:
        raise ValueError("bin_width must be positive")
    areas = np.array([s.area for s in stats], dtype=np.float64)
    if areas.size == 0:
        return {"bin_width": bin_width, "edges": [0.0, float(bin_width)], "counts": [0],
                "mean_area": None, "std_area": None, "n": 0}
    nbins = int(areas.max() // bin_width) + 1
    idx = (areas // bin_width).astype(np.int64)
    counts = np.bincount(idx, minlength=nbins)
    return {
        "bin_width": bin_width,
        "edges": [float(k * bin_width) for k in range(nbins + 1)],
        "counts": [int(c) for c in counts],
        "mean_area": float(areas.mean()),
        "std_area": float(areas.std()),
        "n": int(areas.size),
    }


@dataclass
class EvaluationReport:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float
    pixel_accuracy: float
    mean_iou: float
    instance_iou: list[float]
    n_truth: int
    n_pred: int
    truth_mean_area: float | None
    pred_mean_area: float | None
    size_histogram: dict
    truth_size_histogram: dict
    matches: dict
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["schema_version"] = REPORT_SCHEMA_VERSION
        return d


def evaluate(
    truth: np.ndarray,
    pred: np.ndarray,
    iou_min: float = DEFAULT_IOU_MIN,
    bin_width: float = DEFAULT_BIN_WIDTH,
    config: dict | None = None,
) -> EvaluationReport:
    """Full comparison of a predicted label map with the truth.

    ``mean_iou`` averages the per-truth-instance IoU, counting missed
    instances as 0, so it penalises both poor masks and missed particles.
    """
    truth = as_labels(truth)
    pred = as_labels(pred)
    m = match_instances(truth, pred, iou_min)
    det = detection_metrics(m)
    inst = per_instance_iou(m)
    pred_stats = measure_instances(pred)
    truth_stats = measure_instances(truth)
    hist_p = size_distribution(pred_stats, bin_width)
    hist_t = size_distribution(truth_stats, bin_width)
    return EvaluationReport(
        **det,
        pixel_accuracy=pixel_accuracy(truth, pred),
        mean_iou=float(np.mean(inst)) if inst else 0.0,
        instance_iou=inst,
        n_truth=m.n_truth,
        n_pred=m.n_pred,
        truth_mean_area=hist_t["mean_area"],
        pred_mean_area=hist_p["mean_area"],
        size_histogram=hist_p,
        truth_size_histogram=hist_t,
        matches=m.to_dict(),
        config={"iou_min": iou_min, "bin_width": bin_width, **(config or {})},
    )


# --- sweeps -----------------------------------------------------------------

@dataclass(frozen=True)
class PipelineSettings:
    """Denoise + threshold + filter + scoring settings shared by all runs."""

    denoiser: GaussianParams | NlmParams | None = None
    threshold: str | int = "otsu"
    min_area: int = DEFAULT_MIN_AREA
    iou_min: float = DEFAULT_IOU_MIN
    bin_width: float = DEFAULT_BIN_WIDTH

    def to_dict(self) -> dict:
        return {
            "denoiser": None if self.denoiser is None else self.denoiser.to_dict(),
            "threshold": self.threshold,
            "min_area": self.min_area,
            "iou_min": self.iou_min,
            "bin_width": self.bin_width,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineSettings":
        d = dict(d)
        d["denoiser"] = denoiser_from_dict(d.get("denoiser"))
        return cls(**d)


@dataclass
class RunResult:
    """Everything produced by one simulate -> denoise -> segment -> evaluate run."""

    report: EvaluationReport
    clean: np.ndarray
    noisy: np.ndarray
    denoised: np.ndarray
    truth: np.ndarray
    pred: np.ndarray
    threshold_level: int | None


def run_once(spec: SceneSpec, settings: PipelineSettings, particles=None) -> RunResult:
    scene = simulate(spec, particles)
    den = denoise(scene.noisy, settings.denoiser)
    pred, level = threshold_segment(den, settings.threshold, settings.min_area)
    snr_est = measure_snr(scene.noisy, scene.truth) if scene.truth.any() and not scene.truth.all() else None
    config = {
        **settings.to_dict(),
        "threshold_level": level,
        "seed": spec.seed,
        "target_snr": spec.target_snr,
        "noise": scene.noise.to_dict(),
        "measured_snr": None if snr_est is None or math.isinf(snr_est) else snr_est,
    }
    report = evaluate(scene.truth, pred, settings.iou_min, settings.bin_width, config)
    return RunResult(report, scene.clean, scene.noisy, den, scene.truth, pred, level)


def snr_sweep(
    base: SceneSpec,
    snr_list: list[float | None],
    settings: PipelineSettings = PipelineSettings(),
) -> list[tuple[float | None, EvaluationReport]]:
    """Evaluate the pipeline on one particle layout at several target SNRs.

    ``None`` stands for the noise-free case. The layout, background texture
    and shot noise come from ``base.seed`` and are shared by every entry;
    the Gaussian draw is likewise re-derived from the seed, so entries
    differ only in noise amplitude.
    """
    if not snr_list:
        raise ValueError("snr_list must not be empty")
    particles = sample_scene(base)
    return [
        (snr, run_once(base.with_(target_snr=snr), settings, particles).report)
        for snr in snr_list
    ]


def size_sweep(
    base: SceneSpec,
    diameters: list[float],
    settings: PipelineSettings = PipelineSettings(),
) -> list[tuple[float, EvaluationReport]]:
    """Vary the mean particle size of ``base``'s sampler; each size gets its own layout."""
    if not isinstance(base.particles, ParticleSampler):
        raise ValueError("size sweep needs a sampler-based scene")
    out = []
    for d in diameters:
        sampler = base.particles.__class__(**{**asdict(base.particles), "size_mean": float(d),
                                              "size_std": base.particles.size_std * d / base.particles.size_mean})
        out.append((d, run_once(base.with_(particles=sampler), settings).report))
    return out


def scene_sweep(
    scenes: dict[str, SceneSpec],
    settings: PipelineSettings = PipelineSettings(),
) -> list[tuple[str, EvaluationReport]]:
    """Evaluate a named set of scenes (e.g. one per particle shape)."""
    return [(name, run_once(spec, settings).report) for name, spec in scenes.items()]
