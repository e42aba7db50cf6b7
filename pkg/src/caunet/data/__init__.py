from caunet.data.cityscapes import (
    IMAGE_SUFFIX,
    LABEL_SUFFIX,
    ROAD_ID,
    DatasetIndex,
    IndexEntry,
    LabelMapping,
    Sample,
    load_sample,
    scan,
    write_sample,
)
from caunet.data.png import read_png, write_png
from caunet.data.synth import SynthConfig, corrupt, generate_one, synth_generate, write_corpus

__all__ = [
    "IMAGE_SUFFIX", "LABEL_SUFFIX", "ROAD_ID", "DatasetIndex", "IndexEntry", "LabelMapping", "Sample",
    "load_sample", "scan", "write_sample", "read_png", "write_png", "SynthConfig", "corrupt", "generate_one",
    "synth_generate", "write_corpus",
]
