from .checkpoint import (
    FORMAT_VERSION,
    Checkpoint,
    CheckpointError,
    MethodTag,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    save_checkpoint,
)
from .run_store import (
    BEST_NAME,
    MANIFEST_NAME,
    RunManifest,
    RunStore,
    SnapshotEntry,
    SnapshotRecorder,
    checkpoint_name,
    load_manifest,
)
from .seed_bank import (
    INITIAL_SEED,
    SeedBank,
    SeedEvent,
    maybe_save_seed,
    pick_seed,
    update_moving_average,
)

__all__ = [
    "BEST_NAME",
    "FORMAT_VERSION",
    "INITIAL_SEED",
    "MANIFEST_NAME",
    "Checkpoint",
    "CheckpointError",
    "MethodTag",
    "RunManifest",
    "RunStore",
    "SeedBank",
    "SeedEvent",
    "SnapshotEntry",
    "SnapshotRecorder",
    "checkpoint_name",
    "decode_checkpoint",
    "encode_checkpoint",
    "load_checkpoint",
    "load_manifest",
    "maybe_save_seed",
    "pick_seed",
    "save_checkpoint",
    "update_moving_average",
]
