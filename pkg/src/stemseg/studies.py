"""Preset scenes for the noise, size and shape studies.

All study scenes use well-separated particles (6 px minimum gap) so that
instance counts reflect segmentation quality rather than accidental
merging of neighbours.
"""

from __future__ import annotations

from .evaluate import PipelineSettings, scene_sweep, size_sweep, snr_sweep
from .scenesim import ParticleSampler, SceneSpec

GOLDEN_SEED = 7
STUDY_GAP = 6

# reported noise levels (linear mean-foreground / noise-std ratios); None = noise-free
NOISE_LEVELS = (None, 14.5497, 7.4870)
SIZE_DIAMETERS = (30.0, 50.0, 70.0)
SIZE_STUDY_SNR = 14.5497
SHAPE_STUDY_SNR = 14.5497


def noise_scene(seed: int = GOLDEN_SEED, target_snr: float | None = None) -> SceneSpec:
    """24 spheres of 50 px mean diameter on a 512 x 512 field."""
    return SceneSpec(
        seed=seed,
        target_snr=target_snr,
        particles=ParticleSampler(count=24, shape="sphere", size_mean=50.0, size_std=2.5,
                                  min_gap=STUDY_GAP),
    )


def shape_scenes(seed: int = GOLDEN_SEED, target_snr: float | None = SHAPE_STUDY_SNR) -> dict[str, SceneSpec]:
    """Sphere r=60, rod 65x10 and cube a=50 scenes at matched SNR."""
    def make(**kw):
        return SceneSpec(seed=seed, target_snr=target_snr,
                         particles=ParticleSampler(min_gap=STUDY_GAP, **kw))

    return {
        "sphere": make(count=8, shape="sphere", size_mean=120.0, size_std=6.0),
        "cube": make(count=24, shape="cube", size_mean=50.0, size_std=2.5),
        "rod": make(count=24, shape="rod", size_mean=65.0, size_std=3.25, rod_width=10.0),
    }


def run_noise_study(settings=PipelineSettings(), seed: int = GOLDEN_SEED, levels=NOISE_LEVELS):
    return snr_sweep(noise_scene(seed), list(levels), settings)


def run_size_study(settings=PipelineSettings(), seed: int = GOLDEN_SEED, diameters=SIZE_DIAMETERS):
    return size_sweep(noise_scene(seed, SIZE_STUDY_SNR), list(diameters), settings)


def run_shape_study(settings=PipelineSettings(), seed: int = GOLDEN_SEED):
    return scene_sweep(shape_scenes(seed), settings)
