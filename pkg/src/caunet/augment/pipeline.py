"""Seeded augmentation pipelines.

Every step gets its own generator keyed by (master_seed, epoch, sample_index,
step_index), so results do not depend on the order samples are processed in.
A step first decides whether it fires, then draws concrete parameters; the
transform itself is a pure function of those recorded parameters.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from caunet.augment import degrade, geometric, photometric, weather
from caunet.data.cityscapes import Sample
from caunet.errors import ParameterError

PROFILES = ("none", "light", "heavy")


def step_rng(master_seed: int, epoch: int, sample_index: int, step_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([master_seed, epoch, sample_index, step_index]))


def _uniform(rng, bounds) -> float:
    lo, hi = float(bounds[0]), float(bounds[1])
    return lo if lo == hi else float(rng.uniform(lo, hi))


def _seed(rng) -> int:
    return int(rng.integers(0, 2**63 - 1))


@dataclass(frozen=True)
class TransformDef:
    kind: str
    family: str  # geometric | photometric | degrade | weather | mix
    defaults: dict
    draw: Callable[[np.random.Generator, dict, Sample], dict | None]
    apply: Callable[[Sample, dict], Sample]
    bounds: dict = field(default_factory=dict)  # param name -> (lo, hi) allowed for every value in it
    mask_fn: Callable[[np.ndarray, dict], np.ndarray] | None = None


def _odd_choice(rng, bounds) -> int:
    odd = [v for v in range(int(bounds[0]), int(bounds[1]) + 1) if v % 2 == 1]
    if not odd:
        raise ParameterError(f"no odd kernel length in {bounds}")
    return int(rng.choice(odd))


def _draw_crop(rng, p, s):
    return geometric.draw_crop(rng, s.mask, size=p.get("size"), scale_range=tuple(p.get("scale", (0.6, 1.0))))


def _glass(s, c):
    h, w = s.mask.shape
    offsets = np.random.default_rng(c["offset_seed"]).integers(-c["max_delta"], c["max_delta"] + 1, size=(h, w, 2))
    return degrade.glass_blur(s, c["sigma"], c["max_delta"], offsets)


def _rain(s, c):
    h, w = s.mask.shape
    rng = np.random.default_rng(c["drop_seed"])
    drops = np.stack([rng.integers(-c["length"], h, size=c["count"]), rng.integers(0, w, size=c["count"])], axis=1)
    return weather.rain(s, drops, c["slant"], c["length"])


def _draw_rain(rng, p, s):
    h, w = s.mask.shape
    return {"slant": _uniform(rng, p["slant"]), "length": int(rng.integers(p["length"][0], p["length"][1] + 1)),
            "count": max(1, int(round(p["drops_per_kpx"] * h * w / 1000))), "drop_seed": _seed(rng)}


REGISTRY: dict[str, TransformDef] = {t.kind: t for t in [
    TransformDef("hflip", "geometric", {}, lambda r, p, s: {}, lambda s, c: geometric.hflip(s),
                 mask_fn=lambda m, c: geometric.hflip_mask(m)),
    TransformDef("rotate", "geometric", {"limit": [-15.0, 15.0]},
                 lambda r, p, s: {"degrees": _uniform(r, p["limit"])},
                 lambda s, c: geometric.rotate(s, c["degrees"]), {"limit": (-180, 180)},
                 mask_fn=lambda m, c: geometric.rotate_mask(m, c["degrees"])),
    TransformDef("random_crop", "geometric", {"scale": [0.6, 1.0]}, _draw_crop,
                 lambda s, c: geometric.crop(s, c["top"], c["left"], c["height"], c["width"]), {"scale": (1e-3, 1.0)},
                 mask_fn=lambda m, c: geometric.crop_mask(m, c["top"], c["left"], c["height"], c["width"])),
    TransformDef("random_scale", "geometric", {"range": [0.8, 1.2]},
                 lambda r, p, s: {"factor": _uniform(r, p["range"])},
                 lambda s, c: geometric.scale(s, c["factor"]), {"range": (0.1, 10.0)},
                 mask_fn=lambda m, c: geometric.scale_mask(m, c["factor"])),
    TransformDef("mixcut", "mix", {"area": [0.1, 0.4]}, None, None, {"area": (1e-6, 1.0)}),
    TransformDef("clahe", "photometric", {"clip_limit": 2.0, "tiles": [8, 8]},
                 lambda r, p, s: {"clip_limit": float(p["clip_limit"]), "tiles": list(p["tiles"])},
                 lambda s, c: photometric.clahe(s, c["clip_limit"], tuple(c["tiles"])), {"clip_limit": (0.0, 256.0)}),
    TransformDef("random_gamma", "photometric", {"range": [0.7, 1.5]},
                 lambda r, p, s: {"gamma": _uniform(r, p["range"])},
                 lambda s, c: photometric.random_gamma(s, c["gamma"]), {"range": photometric.GAMMA_RANGE}),
    TransformDef("color_jitter", "photometric", {"brightness": 0.2, "contrast": 0.2, "saturation": 0.2},
                 lambda r, p, s: {k: _uniform(r, (1 - p[k], 1 + p[k])) for k in ("brightness", "contrast", "saturation")},
                 lambda s, c: photometric.color_jitter(s, c["brightness"], c["contrast"], c["saturation"]),
                 {"brightness": (0.0, 1.0), "contrast": (0.0, 1.0), "saturation": (0.0, 1.0)}),
    TransformDef("posterize", "photometric", {"bits": [4, 7]},
                 lambda r, p, s: {"bits": int(r.integers(p["bits"][0], p["bits"][1] + 1))},
                 lambda s, c: photometric.posterize(s, c["bits"]), {"bits": (1, 8)}),
    TransformDef("downscale", "photometric", {"range": [0.5, 0.9]},
                 lambda r, p, s: {"factor": _uniform(r, p["range"])},
                 lambda s, c: photometric.downscale(s, c["factor"]), {"range": photometric.DOWNSCALE_RANGE}),
    TransformDef("hue_saturation", "photometric", {"hue": 0.05, "saturation": 0.15, "value": 0.1},
                 lambda r, p, s: {"hue_shift": _uniform(r, (-p["hue"], p["hue"])),
                                  "sat_shift": _uniform(r, (-p["saturation"], p["saturation"])),
                                  "val_shift": _uniform(r, (-p["value"], p["value"]))},
                 lambda s, c: photometric.hue_saturation(s, c["hue_shift"], c["sat_shift"], c["val_shift"]),
                 {"hue": (0.0, 0.5), "saturation": (0.0, 1.0), "value": (0.0, 1.0)}),
    TransformDef("gaussian_blur", "degrade", {"sigma": [0.5, 1.5]},
                 lambda r, p, s: {"sigma": _uniform(r, p["sigma"])},
                 lambda s, c: degrade.gaussian_blur(s, c["sigma"]), {"sigma": (1e-3, 20.0)}),
    TransformDef("glass_blur", "degrade", {"sigma": 0.7, "max_delta": 1},
                 lambda r, p, s: {"sigma": float(p["sigma"]), "max_delta": int(p["max_delta"]), "offset_seed": _seed(r)},
                 _glass, {"sigma": (1e-3, 20.0), "max_delta": (1, 16)}),
    TransformDef("motion_blur", "degrade", {"length": [3, 7], "angle": [0.0, 180.0]},
                 lambda r, p, s: {"length": _odd_choice(r, p["length"]), "angle": _uniform(r, p["angle"])},
                 lambda s, c: degrade.motion_blur(s, c["length"], c["angle"]), {"length": (1, 99)}),
    TransformDef("iso_noise", "degrade", {"sigma_lum": [2.0, 8.0], "sigma_col": [1.0, 4.0]},
                 lambda r, p, s: {"sigma_lum": _uniform(r, p["sigma_lum"]), "sigma_col": _uniform(r, p["sigma_col"]),
                                  "noise_seed": _seed(r)},
                 lambda s, c: degrade.iso_noise(s, c["sigma_lum"], c["sigma_col"], np.random.default_rng(c["noise_seed"])),
                 {"sigma_lum": (0.0, 128.0), "sigma_col": (0.0, 128.0)}),
    TransformDef("optical_distortion", "degrade", {"k": [-0.3, 0.3]},
                 lambda r, p, s: {"k": _uniform(r, p["k"])},
                 lambda s, c: degrade.optical_distortion(s, c["k"]), {"k": (-1.0, 1.0)}),
    TransformDef("fog", "weather", {"density": [0.2, 0.6]},
                 lambda r, p, s: {"density": _uniform(r, p["density"]), "center": [float(r.random()), float(r.random())]},
                 lambda s, c: weather.fog(s, c["density"], tuple(c["center"])), {"density": (0.0, 1.0)}),
    TransformDef("rain", "weather", {"slant": [-0.5, 0.5], "length": [4, 10], "drops_per_kpx": 4.0}, _draw_rain,
                 _rain, {"slant": (-3.0, 3.0), "length": (1, 1000), "drops_per_kpx": (0.0, 1000.0)}),
    TransformDef("snow", "weather", {"coeff": [0.1, 0.5]},
                 lambda r, p, s: {"coeff": _uniform(r, p["coeff"])},
                 lambda s, c: weather.snow(s, c["coeff"]), {"coeff": (0.0, 1.0)}),
    TransformDef("sunflare", "weather", {"radius": [0.15, 0.35], "intensity": [0.4, 0.8]},
                 lambda r, p, s: {"center": [_uniform(r, (0.0, 0.5)), float(r.random())],
                                  "radius": _uniform(r, p["radius"]), "intensity": _uniform(r, p["intensity"])},
                 lambda s, c: weather.sunflare(s, tuple(c["center"]), c["radius"], c["intensity"]),
                 {"radius": (1e-3, 4.0), "intensity": (0.0, 1.0)}),
]}


@dataclass(frozen=True)
class AugStep:
    kind: str
    p: float = 1.0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in REGISTRY:
            raise ParameterError(f"unknown augmentation kind {self.kind!r}")
        if not 0.0 <= self.p <= 1.0:
            raise ParameterError(f"{self.kind}: probability {self.p} outside [0, 1]")
        merged = {**REGISTRY[self.kind].defaults, **self.params}
        unknown = set(self.params) - set(REGISTRY[self.kind].defaults) - {"size"}
        if unknown:
            raise ParameterError(f"{self.kind}: unknown parameters {sorted(unknown)}")
        for name, (lo, hi) in REGISTRY[self.kind].bounds.items():
            values = np.atleast_1d(np.asarray(merged[name], dtype=np.float64))
            if values.size == 2 and values[0] > values[1]:
                raise ParameterError(f"{self.kind}.{name}: empty range {list(values)}")
            if (values < lo).any() or (values > hi).any():
                raise ParameterError(f"{self.kind}.{name}={merged[name]} outside [{lo}, {hi}]")
        object.__setattr__(self, "params", merged)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "p": self.p, "params": self.params}


@dataclass(frozen=True)
class AugPipelineSpec:
    steps: tuple[AugStep, ...] = ()
    master_seed: int = 0
    profile: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        if not 0 <= int(self.master_seed) < 2**64:
            raise ParameterError("master_seed must be a 64-bit unsigned integer")

    def to_dict(self) -> dict:
        return {"master_seed": self.master_seed, "profile": self.profile, "steps": [s.to_dict() for s in self.steps]}

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def from_dict(cls, d: dict) -> "AugPipelineSpec":
        steps = [AugStep(s["kind"], float(s.get("p", 1.0)), dict(s.get("params", {}))) for s in d.get("steps", [])]
        return cls(tuple(steps), int(d.get("master_seed", 0)), d.get("profile", "custom"))

    @classmethod
    def from_json(cls, path: str | Path) -> "AugPipelineSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


LIGHT_STEPS = (AugStep("random_crop", 0.5), AugStep("rotate", 0.5), AugStep("hflip", 0.5))
HEAVY_EXTRA = (
    AugStep("clahe", 0.3), AugStep("random_gamma", 0.3), AugStep("color_jitter", 0.3), AugStep("posterize", 0.2),
    AugStep("downscale", 0.2), AugStep("hue_saturation", 0.3), AugStep("gaussian_blur", 0.25),
    AugStep("glass_blur", 0.1), AugStep("motion_blur", 0.25), AugStep("iso_noise", 0.3),
    AugStep("optical_distortion", 0.2), AugStep("fog", 0.3), AugStep("rain", 0.2), AugStep("snow", 0.1),
    AugStep("sunflare", 0.1),
)


def profile(name: str, master_seed: int = 0) -> AugPipelineSpec:
    if name == "none":
        return AugPipelineSpec((), master_seed, "none")
    if name == "light":
        return AugPipelineSpec(LIGHT_STEPS, master_seed, "light")
    if name == "heavy":
        return AugPipelineSpec(LIGHT_STEPS + HEAVY_EXTRA, master_seed, "heavy")
    raise ParameterError(f"unknown augmentation profile {name!r}; expected one of {PROFILES}")


def apply_pipeline_traced(spec: AugPipelineSpec, sample: Sample, sample_index: int, epoch: int,
                          partners: Sequence[Sample] | None = None) -> tuple[Sample, list[dict]]:
    """Run the pipeline; also return one provenance record per step."""
    out = sample.replace(sample.image.copy(), sample.mask.copy())
    records = []
    for i, step in enumerate(spec.steps):
        rng = step_rng(spec.master_seed, epoch, sample_index, i)
        rec = {"step": i, "kind": step.kind, "fired": False, "params": None}
        records.append(rec)
        if not rng.random() < step.p:
            continue
        t = REGISTRY[step.kind]
        if t.family == "mix":
            if not partners:
                rec["skipped"] = "no mixcut partner"
                continue
            j = int(rng.integers(0, len(partners)))
            concrete = {"partner": j, **geometric.draw_mixcut(rng, out.mask.shape, tuple(step.params["area"]))}
            out = geometric.paste(out, partners[j], concrete["top"], concrete["left"], concrete["height"],
                                  concrete["width"])
        else:
            concrete = t.draw(rng, step.params, out)
            if concrete is None:
                rec["skipped"] = "degenerate draws exhausted"
                continue
            out = t.apply(out, concrete)
        rec["fired"], rec["params"] = True, concrete
    return out, records


def apply_pipeline(spec: AugPipelineSpec, sample: Sample, sample_index: int, epoch: int,
                   partners: Sequence[Sample] | None = None) -> Sample:
    return apply_pipeline_traced(spec, sample, sample_index, epoch, partners)[0]


def replay_mask(records: list[dict], mask: np.ndarray, partners: Sequence[Sample] | None = None) -> np.ndarray:
    """Apply only the recorded geometric (and mixcut) steps to a mask."""
    m = mask.copy()
    for rec in records:
        if not rec["fired"]:
            continue
        t = REGISTRY[rec["kind"]]
        c = rec["params"]
        if t.mask_fn is not None:
            m = t.mask_fn(m, c)
        elif t.family == "mix":
            if partners is None:
                raise ParameterError("replaying a mixcut step needs the partner samples")
            src = partners[c["partner"]].mask
            m[c["top"]:c["top"] + c["height"], c["left"]:c["left"] + c["width"]] = \
                src[c["top"]:c["top"] + c["height"], c["left"]:c["left"] + c["width"]]
    return m
