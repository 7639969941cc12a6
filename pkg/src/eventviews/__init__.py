"""Dense multi-view encoding, temporal-warp augmentation and late-fusion math for event streams."""

from .dtw import WarpFamily, WarpPlan, WarpSpec, apply_warp, density_profile, sample_plan, warp_unit
from .errors import (
    ConfigError,
    ContractError,
    DegenerateInputError,
    DomainError,
    EventInvariantError,
    EventViewsError,
    FormatError,
    NumericError,
)
from .events import Event, EventStream, ViewAxis, in_bounds_after_shift, shift_along_axis
from .fusion import (
    AttentionHead,
    FusionWeights,
    Logits,
    SemanticVector,
    ToyBranch,
    attention_forward,
    fuse_average,
    fuse_class_weighted,
    fuse_sample_weighted,
    fuse_view_weighted,
    gradient_check,
    pipeline_forward,
)
from .tism import (
    GLOBAL,
    AggregationFn,
    ConversionSpec,
    DenseMap,
    EncoderConfig,
    MeasurementFn,
    WindowFn,
    check_invariance,
    compact_spec_set,
    encode_channel,
    encode_view,
    invariant_spec_set,
    quantize_time,
)

__all__ = [
    "Event",
    "EventStream",
    "ViewAxis",
    "in_bounds_after_shift",
    "shift_along_axis",
    "AggregationFn",
    "AttentionHead",
    "ConfigError",
    "ContractError",
    "ConversionSpec",
    "DegenerateInputError",
    "DenseMap",
    "DomainError",
    "EncoderConfig",
    "EventInvariantError",
    "EventViewsError",
    "FormatError",
    "FusionWeights",
    "GLOBAL",
    "Logits",
    "MeasurementFn",
    "NumericError",
    "SemanticVector",
    "ToyBranch",
    "WarpFamily",
    "WarpPlan",
    "WarpSpec",
    "WindowFn",
    "apply_warp",
    "attention_forward",
    "check_invariance",
    "compact_spec_set",
    "density_profile",
    "encode_channel",
    "encode_view",
    "fuse_average",
    "fuse_class_weighted",
    "fuse_sample_weighted",
    "fuse_view_weighted",
    "gradient_check",
    "invariant_spec_set",
    "pipeline_forward",
    "quantize_time",
    "sample_plan",
    "warp_unit",
]

__version__ = "0.1.0"
