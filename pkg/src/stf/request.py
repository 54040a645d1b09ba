"""Request document parsing: the JSON job schema shared by service and CLI.

Schema (all JSON):
    {
      "prompt": str,                      required, non-empty
      "negative_prompt": str,             optional, default ""
      "total_frames": int,                required, >= 1
      "resolution": [H, W],               required, multiples of 8
      "steps": int,                       optional, default 20
      "guidance_scale": number,           optional, default 7.5
      "control_scale": number,            optional, default 1.0, in [0, 2]
      "seed": int,                        optional, default 0
      "band": number,                     optional, default 1.0, > 0
      "motion": "auto" | {"lambda": number, "direction": [ux, uy]},
                                          optional, default "auto"
      "model": "toy:<seed>" | weights-id, required
      "keyframes": [                      required, >= 1 entries
        {"frame_index": int, "png_base64": str}
        | {"frame_index": int,
           "strokes": [{"points": [[x, y], ...], "width": px}, ...]}
      ]
    }

Unknown top-level keys are rejected. Validation failures raise
ValidationError carrying field-level details (field, message, and an error
code naming the underlying condition where one exists).
"""

from __future__ import annotations

import base64
import binascii
import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptySketch, StfError, ValidationError
from .motion import MotionParams
from .pipeline import (
    DEFAULT_CONTROL_SCALE,
    DEFAULT_GUIDANCE,
    DEFAULT_STEPS,
    GenerationConfig,
    GenerationRequest,
)
from .sketch import KeyframeSketch, load_sketch, rasterize_strokes, validate_sequence

_KNOWN_KEYS = {
    "prompt",
    "negative_prompt",
    "total_frames",
    "resolution",
    "steps",
    "guidance_scale",
    "control_scale",
    "seed",
    "band",
    "motion",
    "model",
    "keyframes",
}


@dataclass(frozen=True)
class RequestDocument:
    """A parsed job: the validated request plus the model identifier."""

    request: GenerationRequest
    model: str


def _want_int(doc, key, details, default=None, minimum=None):
    if key not in doc:
        if default is None:
            details.append({"field": key, "message": f"{key} is required"})
            return None
        return default
    val = doc[key]
    if isinstance(val, bool) or not isinstance(val, int):
        details.append({"field": key, "message": f"{key} must be an integer"})
        return None
    if minimum is not None and val < minimum:
        details.append({"field": key, "message": f"{key} must be >= {minimum}"})
        return None
    return val


def _want_number(doc, key, details, default):
    if key not in doc:
        return default
    val = doc[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        details.append({"field": key, "message": f"{key} must be a number"})
        return None
    return float(val)


def _parse_motion(doc, details):
    motion = doc.get("motion", "auto")
    if motion is None or motion == "auto":
        return "auto"
    if not isinstance(motion, dict):
        details.append(
            {"field": "motion", "message": "motion must be \"auto\" or {lambda, direction}"}
        )
        return None
    lam = motion.get("lambda")
    direction = motion.get("direction")
    if not isinstance(lam, (int, float)) or isinstance(lam, bool) or lam < 0:
        details.append({"field": "motion.lambda", "message": "lambda must be a number >= 0"})
        return None
    if (
        not isinstance(direction, (list, tuple))
        or len(direction) != 2
        or not all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in direction)
    ):
        details.append(
            {"field": "motion.direction", "message": "direction must be [ux, uy]"}
        )
        return None
    norm = math.hypot(float(direction[0]), float(direction[1]))
    if norm == 0.0:
        details.append(
            {"field": "motion.direction", "message": "direction must be non-zero"}
        )
        return None
    # Normalize on ingestion; MotionParams requires an exact unit vector.
    return MotionParams(
        lam=float(lam),
        direction=(float(direction[0]) / norm, float(direction[1]) / norm),
        enabled=True,
    )


def _parse_keyframe(entry, i, resolution, details) -> KeyframeSketch | None:
    prefix = f"keyframes[{i}]"
    if not isinstance(entry, dict):
        details.append({"field": prefix, "message": "keyframe must be an object"})
        return None
    idx = entry.get("frame_index")
    if isinstance(idx, bool) or not isinstance(idx, int) or idx < 0:
        details.append(
            {"field": f"{prefix}.frame_index", "message": "frame_index must be an integer >= 0"}
        )
        return None
    has_png = "png_base64" in entry
    has_strokes = "strokes" in entry
    if has_png == has_strokes:
        details.append(
            {
                "field": prefix,
                "message": "exactly one of png_base64 or strokes is required",
            }
        )
        return None
    try:
        if has_png:
            return _keyframe_from_png(entry["png_base64"], idx, resolution)
        return _keyframe_from_strokes(entry["strokes"], idx, resolution, prefix)
    except ValidationError as exc:
        details.extend(exc.details)
        return None
    except StfError as exc:
        details.append(
            {"field": prefix, "message": str(exc), "code": type(exc).__name__}
        )
        return None


def _keyframe_from_png(payload, idx, resolution) -> KeyframeSketch:
    if not isinstance(payload, str):
        raise ValidationError.single("png_base64", "png_base64 must be a string")
    try:
        raw = base64.b64decode(payload, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise ValidationError.single(
            "png_base64", f"invalid base64: {exc}", code="UndecodableImage"
        ) from exc
    return load_sketch(raw, idx, resolution)


def _keyframe_from_strokes(strokes, idx, resolution, prefix) -> KeyframeSketch:
    if not isinstance(strokes, list) or not strokes:
        raise ValidationError.single(
            f"{prefix}.strokes", "strokes must be a non-empty list"
        )
    grid = np.zeros(resolution, dtype=np.uint8)
    for j, stroke in enumerate(strokes):
        field = f"{prefix}.strokes[{j}]"
        if not isinstance(stroke, dict):
            raise ValidationError.single(field, "stroke must be an object")
        points = stroke.get("points")
        width = stroke.get("width")
        if not isinstance(points, list) or len(points) < 2:
            raise ValidationError.single(f"{field}.points", "need at least 2 points")
        for pt in points:
            if (
                not isinstance(pt, (list, tuple))
                or len(pt) != 2
                or not all(
                    isinstance(c, (int, float)) and not isinstance(c, bool) for c in pt
                )
                or not all(0.0 <= float(c) <= 1.0 for c in pt)
            ):
                raise ValidationError.single(
                    f"{field}.points", "points must be [x, y] pairs in [0, 1]"
                )
        if isinstance(width, bool) or not isinstance(width, (int, float)) or width <= 0:
            raise ValidationError.single(f"{field}.width", "width must be a number > 0")
        try:
            part = rasterize_strokes(
                [[(float(x), float(y)) for x, y in points]],
                float(width),
                resolution,
                frame_index=idx,
            )
        except EmptySketch:
            continue  # this stroke covered no pixel centers; others may
        grid |= part.grid
    if not grid.any():
        raise ValidationError.single(
            prefix, "strokes cover no pixels at this resolution", code="EmptySketch"
        )
    return KeyframeSketch(grid=grid, frame_index=idx)


def parse_request_document(doc) -> RequestDocument:
    """Validate a raw JSON document into a RequestDocument, or raise ValidationError."""
    if not isinstance(doc, dict):
        raise ValidationError.single("", "request body must be a JSON object")
    details: list[dict] = []

    for key in doc:
        if key not in _KNOWN_KEYS:
            details.append(
                {"field": key, "message": f"unknown field {key!r}", "code": "UnknownField"}
            )

    prompt = doc.get("prompt")
    if not isinstance(prompt, str) or not prompt:
        details.append({"field": "prompt", "message": "prompt must be a non-empty string"})
    negative = doc.get("negative_prompt", "")
    if not isinstance(negative, str):
        details.append({"field": "negative_prompt", "message": "negative_prompt must be a string"})

    total_frames = _want_int(doc, "total_frames", details, minimum=1)
    steps = _want_int(doc, "steps", details, default=DEFAULT_STEPS, minimum=1)
    seed = _want_int(doc, "seed", details, default=0)
    guidance = _want_number(doc, "guidance_scale", details, DEFAULT_GUIDANCE)
    control_scale = _want_number(doc, "control_scale", details, DEFAULT_CONTROL_SCALE)
    band = _want_number(doc, "band", details, 1.0)

    resolution = None
    res = doc.get("resolution")
    if (
        not isinstance(res, (list, tuple))
        or len(res) != 2
        or not all(isinstance(v, int) and not isinstance(v, bool) for v in res)
    ):
        details.append({"field": "resolution", "message": "resolution must be [H, W] integers"})
    else:
        resolution = (res[0], res[1])

    motion = _parse_motion(doc, details)

    model = doc.get("model")
    if not isinstance(model, str) or not model:
        details.append({"field": "model", "message": "model identifier is required"})

    keyframes_doc = doc.get("keyframes")
    if not isinstance(keyframes_doc, list) or not keyframes_doc:
        details.append(
            {
                "field": "keyframes",
                "message": "keyframes must be a non-empty list",
                "code": "EmptyKeyframes",
            }
        )
        keyframes_doc = []

    if details:
        raise ValidationError(details)

    sketches = []
    for i, entry in enumerate(keyframes_doc):
        sk = _parse_keyframe(entry, i, resolution, details)
        if sk is not None:
            sketches.append(sk)
    if details:
        raise ValidationError(details)

    try:
        sequence = validate_sequence(sketches, total_frames)
    except StfError as exc:
        raise ValidationError.single(
            "keyframes", str(exc), code=type(exc).__name__
        ) from exc

    try:
        config = GenerationConfig(
            total_frames=total_frames,
            resolution=resolution,
            steps=steps,
            guidance_scale=guidance,
            control_scale=control_scale,
            seed=seed,
            band=band,
            motion=motion,
        )
        request = GenerationRequest(
            prompt=prompt,
            negative_prompt=negative,
            keyframes=sequence,
            config=config,
        )
    except ValidationError:
        raise
    except StfError as exc:
        raise ValidationError.single("", str(exc), code=type(exc).__name__) from exc

    return RequestDocument(request=request, model=model)
