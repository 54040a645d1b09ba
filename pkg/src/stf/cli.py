"""Command-line front door: generate, tween, and serve subcommands.

`generate` runs the full pipeline and writes frames, video, control strip,
overview figure, stats CSV, and a manifest.json that can be fed back via
--config to reproduce the run exactly (flags win over config values).
`tween` runs interpolation only. `serve` starts the HTTP service.

Exit codes: 0 success, 2 validation/input error, 1 pipeline failure.
"""

from __future__ import annotations

import argparse
import base64
import json
import sys
from pathlib import Path

from .errors import StfError, UnknownModel, ValidationError
from .request import parse_request_document
from .runner import execute_request, execute_tween

_TWEEN_PROMPT = "tween preview"  # placeholder; tween never touches a model


def _parse_resolution(text: str) -> list[int]:
    try:
        h, w = text.lower().split("x")
        return [int(h), int(w)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"resolution must look like 128x128, got {text!r}")


def _parse_motion(text: str):
    if text == "auto":
        return "auto"
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(
            f"motion must be 'auto' or 'lambda,ux,uy', got {text!r}"
        )
    try:
        lam, ux, uy = (float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"motion components must be numbers: {text!r}")
    return {"lambda": lam, "direction": [ux, uy]}


def _parse_keyframe(text: str) -> tuple[int, Path]:
    idx, sep, path = text.partition(":")
    if not sep or not path:
        raise argparse.ArgumentTypeError(f"keyframe must look like INDEX:PATH, got {text!r}")
    try:
        index = int(idx)
    except ValueError:
        raise argparse.ArgumentTypeError(f"keyframe index must be an integer: {text!r}")
    return index, Path(path)


def _add_request_flags(parser: argparse.ArgumentParser, with_model: bool) -> None:
    parser.add_argument("--prompt")
    parser.add_argument("--negative-prompt", dest="negative_prompt")
    parser.add_argument(
        "--keyframe",
        action="append",
        type=_parse_keyframe,
        default=None,
        metavar="INDEX:PATH",
        help="keyframe sketch image pinned to a frame index (repeatable)",
    )
    parser.add_argument("--frames", type=int, help="total output frames")
    parser.add_argument("--resolution", type=_parse_resolution, metavar="HxW")
    parser.add_argument("--band", type=float, help="tween extraction band in pixels")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--config", help="JSON request document or manifest.json")
    if with_model:
        parser.add_argument("--steps", type=int, help="DDIM steps")
        parser.add_argument("--guidance", type=float, help="classifier-free guidance scale")
        parser.add_argument("--control-scale", dest="control_scale", type=float)
        parser.add_argument("--seed", type=int)
        parser.add_argument(
            "--motion", type=_parse_motion, help="'auto' or 'lambda,ux,uy'"
        )
        parser.add_argument("--model", help="model id: toy:<seed> or STF_MODEL_DIR entry")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stf",
        description="Sketch-steered text-to-video: tween sketches, generate clips, serve jobs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="run the full generation pipeline")
    _add_request_flags(gen, with_model=True)

    tween = sub.add_parser("tween", help="interpolate control frames only")
    _add_request_flags(tween, with_model=False)

    serve = sub.add_parser("serve", help="run the HTTP job service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--jobs-dir", dest="jobs_dir", default="jobs")

    return parser


def _load_config(path: str) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ValidationError.single("config", f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ValidationError.single("config", f"config is not valid JSON: {exc}")
    if isinstance(doc, dict) and isinstance(doc.get("request"), dict):
        return doc["request"]  # a manifest.json; round-trips the original request
    if not isinstance(doc, dict):
        raise ValidationError.single("config", "config must hold a JSON object")
    return doc


def _encode_keyframes(pairs: list[tuple[int, Path]]) -> list[dict]:
    entries = []
    for index, path in pairs:
        if not path.exists():
            raise ValidationError.single(
                "keyframe", f"keyframe file not found: {path}"
            )
        payload = base64.b64encode(path.read_bytes()).decode("ascii")
        entries.append({"frame_index": index, "png_base64": payload})
    return entries


def _build_document(args: argparse.Namespace, *, tween_only: bool) -> dict:
    doc = _load_config(args.config) if args.config else {}

    overrides = {
        "prompt": args.prompt,
        "negative_prompt": args.negative_prompt,
        "total_frames": args.frames,
        "resolution": args.resolution,
        "band": args.band,
    }
    if not tween_only:
        overrides.update(
            {
                "steps": args.steps,
                "guidance_scale": args.guidance,
                "control_scale": args.control_scale,
                "seed": args.seed,
                "motion": args.motion,
                "model": args.model,
            }
        )
    for key, value in overrides.items():
        if value is not None:
            doc[key] = value
    if args.keyframe:
        doc["keyframes"] = _encode_keyframes(args.keyframe)

    doc.setdefault("resolution", [64, 64])
    if tween_only:
        doc.setdefault("prompt", _TWEEN_PROMPT)
        doc.setdefault("model", "toy:0")
    return doc


def _write_manifest(out_dir: Path, doc: dict, artifacts: dict) -> None:
    manifest = {
        "request": doc,
        "artifacts": {k: v for k, v in artifacts.items() if k != "timings"},
        "timings": artifacts.get("timings", {}),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2))


def cmd_generate(args: argparse.Namespace) -> int:
    doc = _build_document(args, tween_only=False)
    parse_request_document(doc)  # fail fast before touching the model
    out_dir = Path(args.out)

    def progress(step: int, total: int, timestep: int) -> None:
        print(f"step {step}/{total} (timestep {timestep})", file=sys.stderr)

    artifacts = execute_request(doc, out_dir, progress=progress)
    _write_manifest(out_dir, doc, artifacts)
    print(artifacts["frames_dir"])
    print(artifacts["video"])
    return 0


def cmd_tween(args: argparse.Namespace) -> int:
    doc = _build_document(args, tween_only=True)
    parsed = parse_request_document(doc)
    out_dir = Path(args.out)
    artifacts = execute_tween(parsed, out_dir)
    _write_manifest(out_dir, doc, artifacts)
    print(artifacts["control_dir"])
    print(artifacts["control_strip"])
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    from .service import serve

    serve(args.host, args.port, args.jobs_dir)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"generate": cmd_generate, "tween": cmd_tween, "serve": cmd_serve}
    try:
        return handlers[args.command](args)
    except (ValidationError, UnknownModel) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except StfError as exc:
        print(f"pipeline failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
