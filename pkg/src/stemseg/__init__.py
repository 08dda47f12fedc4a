"""Synthetic STEM-HAADF nanoparticle scenes, classical denoise/segment
baselines, and instance-mask evaluation."""

__version__ = "0.1.0"

from .denoise import GaussianParams, NlmParams, gaussian_blur, nlm_denoise  # noqa: E402
from .evaluate import (  # noqa: E402
    EvaluationReport,
    MatchTable,
    PipelineSettings,
    detection_metrics,
    evaluate,
    iou,
    match_instances,
    pixel_accuracy,
    size_distribution,
    snr_sweep,
)
from .imagecore import compute_histogram, image_stats, load_image, load_labels, save_image, save_labels  # noqa: E402
from .scenesim import (  # noqa: E402
    ConcaveCube,
    ParticleSampler,
    ParticleSpec,
    Rod,
    SceneSpec,
    Sphere,
    add_background,
    add_gaussian_noise_for_snr,
    add_shot_noise,
    measure_snr,
    render_scene,
    sample_scene,
    simulate,
)
from .segment import (  # noqa: E402
    InstanceStats,
    apply_threshold,
    compute_rba,
    connected_components,
    filter_min_area,
    measure_instances,
    otsu_threshold,
)
