"""Seeded, mask-consistent image augmentation."""
from caunet.augment.pipeline import (
    HEAVY_EXTRA,
    LIGHT_STEPS,
    PROFILES,
    REGISTRY,
    AugPipelineSpec,
    AugStep,
    apply_pipeline,
    apply_pipeline_traced,
    profile,
    replay_mask,
    step_rng,
)

__all__ = [
    "HEAVY_EXTRA", "LIGHT_STEPS", "PROFILES", "REGISTRY", "AugPipelineSpec", "AugStep", "apply_pipeline",
    "apply_pipeline_traced", "profile", "replay_mask", "step_rng",
]
