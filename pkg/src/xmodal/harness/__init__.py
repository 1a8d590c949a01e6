from xmodal.harness.dataset import PairedDataset, generate_synthetic_dataset, ingest_dataset
from xmodal.harness.rng import derive_rng_stream, derive_seed

__all__ = ["PairedDataset", "derive_rng_stream", "derive_seed", "generate_synthetic_dataset", "ingest_dataset"]
