"""Cityscapes directory layout: scanning, indexing and sample loading."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from caunet.data.png import read_png, write_png
from caunet.errors import ConfigurationError

IMAGE_SUFFIX = "_leftImg8bit.png"
LABEL_SUFFIX = "_gtFine_labelIds.png"
SPLITS = ("train", "val", "test")
ROAD_ID = 7


@dataclass(frozen=True)
class LabelMapping:
    drivable_ids: frozenset[int] = frozenset({ROAD_ID})

    def __post_init__(self):
        ids = frozenset(int(i) for i in self.drivable_ids)
        if not ids:
            raise ConfigurationError("LabelMapping needs at least one drivable id")
        object.__setattr__(self, "drivable_ids", ids)

    def apply(self, labels: np.ndarray) -> np.ndarray:
        return np.isin(labels, sorted(self.drivable_ids)).astype(np.uint8)


@dataclass(frozen=True)
class IndexEntry:
    split: str
    city: str
    frame: str
    image_path: Path
    label_path: Path


@dataclass
class DatasetIndex:
    root: Path
    entries: list[IndexEntry] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def split(self, name: str) -> list[IndexEntry]:
        return [e for e in self.entries if e.split == name]

    def totals(self) -> dict[str, int]:
        return {s: len(self.split(s)) for s in SPLITS}

    def to_json(self, path: str | Path) -> None:
        rows = [{"split": e.split, "city": e.city, "frame": e.frame,
                 "image": str(e.image_path.relative_to(self.root)),
                 "label": str(e.label_path.relative_to(self.root))} for e in self.entries]
        Path(path).write_text(json.dumps({"root": str(self.root), "entries": rows, "warnings": self.warnings},
                                         indent=1))

    @classmethod
    def from_json(cls, path: str | Path) -> "DatasetIndex":
        d = json.loads(Path(path).read_text())
        root = Path(d["root"])
        entries = [IndexEntry(r["split"], r["city"], r["frame"], root / r["image"], root / r["label"])
                   for r in d["entries"]]
        return cls(root, entries, list(d.get("warnings", [])))


def scan(root: str | Path) -> DatasetIndex:
    """Pair every ``leftImg8bit`` frame with its ``gtFine`` labelIds file, in lexicographic order."""
    root = Path(root)
    if not root.is_dir():
        raise ConfigurationError(f"dataset root {root} does not exist")
    index = DatasetIndex(root)
    for split in SPLITS:
        split_dir = root / "leftImg8bit" / split
        if not split_dir.is_dir():
            continue
        for city_dir in sorted(p for p in split_dir.iterdir() if p.is_dir()):
            for img in sorted(city_dir.glob("*" + IMAGE_SUFFIX)):
                frame = img.name[: -len(IMAGE_SUFFIX)]
                label = root / "gtFine" / split / city_dir.name / (frame + LABEL_SUFFIX)
                if label.is_file():
                    index.entries.append(IndexEntry(split, city_dir.name, frame, img, label))
                else:
                    index.warnings.append(f"unpaired image {img.relative_to(root)}")
    return index


@dataclass
class Sample:
    image: np.ndarray  # H×W×3 uint8
    mask: np.ndarray  # H×W uint8 in {0, 1}
    name: str = ""
    meta: dict = field(default_factory=dict)  # source id, city, split

    def replace(self, image: np.ndarray | None = None, mask: np.ndarray | None = None) -> "Sample":
        return Sample(self.image if image is None else image, self.mask if mask is None else mask,
                      self.name, dict(self.meta))


def _resize(arr: np.ndarray, target: tuple[int, int], resample) -> np.ndarray:
    if (arr.shape[1], arr.shape[0]) == tuple(target):
        return arr
    return np.asarray(Image.fromarray(arr).resize(tuple(target), resample=resample))


def load_sample(entry: IndexEntry, mapping: LabelMapping | None = None,
                target: tuple[int, int] | None = None) -> Sample:
    """Decode one frame. ``target`` is (width, height): image bilinear, labels nearest."""
    mapping = mapping or LabelMapping()
    image = read_png(entry.image_path, mode="rgb")
    labels = read_png(entry.label_path, mode="gray")
    if target is not None:
        image = _resize(image, target, Image.BILINEAR)
        labels = _resize(labels, target, Image.NEAREST)
    meta = {"source": entry.frame, "city": entry.city, "split": entry.split}
    return Sample(image, mapping.apply(labels), entry.frame, meta)


def write_sample(sample: Sample, root: str | Path, split: str, city: str, frame: str,
                 label_ids: np.ndarray | None = None) -> IndexEntry:
    """Write a sample into the Cityscapes layout. Without ``label_ids`` the mask becomes road/0."""
    root = Path(root)
    img = root / "leftImg8bit" / split / city / (frame + IMAGE_SUFFIX)
    lab = root / "gtFine" / split / city / (frame + LABEL_SUFFIX)
    labels = label_ids if label_ids is not None else (sample.mask.astype(np.uint8) * ROAD_ID)
    write_png(img, sample.image)
    write_png(lab, labels.astype(np.uint8))
    return IndexEntry(split, city, frame, img, lab)
