from aiosod.data.loading import PairedBatch, Sample, assemble_batch, load_sample
from aiosod.data.manifest import MODALITIES, ManifestError, SampleRecord, load_manifest
from aiosod.data.sampler import Draw, load_draw, mixed_sampler

__all__ = ["Draw", "MODALITIES", "ManifestError", "PairedBatch", "Sample", "SampleRecord",
           "assemble_batch", "load_draw", "load_manifest", "load_sample", "mixed_sampler"]
