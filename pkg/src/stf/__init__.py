"""stf: sketch-steered text-to-video generation.

Draw a few keyframe sketches, pin them to frame indices, and the pipeline
interpolates them into a per-frame control video that steers a zero-shot
text-to-video diffusion process: one shared latent warped along a motion
direction per frame, cross-frame attention anchoring appearance to the first
frame, and a control branch injecting the sketch structure as residuals.
"""

from .errors import StfError, ValidationError
from .models import ModelBundle, ResidualStack, build_toy_bundle, load_models
from .motion import MotionParams, apply_motion, sample_base_latent, warp
from .pipeline import (
    ControlPipeline,
    DdimSchedule,
    GenerationConfig,
    GenerationRequest,
    VideoFrames,
    control_residuals,
    denoise_step,
    encode_prompt,
)
from .request import RequestDocument, parse_request_document
from .sketch import (
    KeyframeSketch,
    SketchSequence,
    load_sketch,
    rasterize_strokes,
    validate_sequence,
)
from .tween import (
    ControlSequence,
    blend_fields,
    distance_transform,
    extract_sketch,
    interpolate_sequence,
)

__version__ = "0.1.0"

__all__ = [
    "ControlPipeline",
    "ControlSequence",
    "DdimSchedule",
    "GenerationConfig",
    "GenerationRequest",
    "KeyframeSketch",
    "ModelBundle",
    "MotionParams",
    "RequestDocument",
    "ResidualStack",
    "SketchSequence",
    "StfError",
    "ValidationError",
    "VideoFrames",
    "apply_motion",
    "blend_fields",
    "build_toy_bundle",
    "control_residuals",
    "denoise_step",
    "distance_transform",
    "encode_prompt",
    "extract_sketch",
    "interpolate_sequence",
    "load_models",
    "load_sketch",
    "parse_request_document",
    "rasterize_strokes",
    "sample_base_latent",
    "validate_sequence",
    "warp",
]
