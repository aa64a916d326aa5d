"""Online streaming anomaly detection with a learnable prototype memory."""

from ._lemo import (
    ConfigError,
    DimensionError,
    EmptyShapeError,
    Engine,
    FormatError,
    InsufficientPointsError,
    IoError,
    LemoError,
    NumericalError,
    UndefinedMetricError,
    ValidationError,
    add_coords,
    anomaly_map,
    anonce_loss,
    aupro,
    auroc,
    decode_tensor,
    encode_tensor,
    load_manifest,
    orthonormal_rows,
    read_tensor,
    run,
    synth_frame,
    write_tensor,
)

__all__ = [name for name in dir() if not name.startswith("_")]
