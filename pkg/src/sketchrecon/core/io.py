"""Sketch file ingestion and saving.

The on-disk format is a single JSON document:

    {"name": str,
     "strokes": [{"ink_color": [r, g, b], "ink_width": w,
                  "camera_position": [x, y, z],
                  "camera_rotation": [x, y, z, w],
                  "canvas_id": str, "canvas_type": "Plane|Cube|Sphere|Cylinder",
                  "canvas_transform": [16 floats, row-major],
                  "label": 1 | 0 | -1 | null,
                  "vertices": [{"p": [x, y, z], "t": s, "pressure": f,
                                "tilt": [a, b], "twist": c,
                                "normal": [x, y, z]}, ...]}, ...],
     "oracle": optional object ignored by the pipeline}

All floats are 64-bit, written as shortest round-tripping decimal text, so
load(save(sketch)) reproduces every field bit-exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import ParseError, ValidationError
from .model import CanvasType, Sketch, StrokeLabel, StrokeRecord


def _stroke_to_dict(stroke: StrokeRecord) -> dict:
    label = None if stroke.label == StrokeLabel.UNLABELED else int(stroke.label)
    return {
        "ink_color": stroke.ink_color.tolist(),
        "ink_width": stroke.ink_width,
        "camera_position": stroke.camera_position.tolist(),
        "camera_rotation": stroke.camera_rotation.tolist(),
        "canvas_id": stroke.canvas_id,
        "canvas_type": stroke.canvas_type.value,
        "canvas_transform": stroke.canvas_transform.reshape(16).tolist(),
        "label": label,
        "vertices": [
            {
                "p": stroke.positions[i].tolist(),
                "t": float(stroke.timestamps[i]),
                "pressure": float(stroke.pressures[i]),
                "tilt": stroke.tilts[i].tolist(),
                "twist": float(stroke.twists[i]),
                "normal": stroke.normals[i].tolist(),
            }
            for i in range(len(stroke))
        ],
    }


def _stroke_from_dict(obj: dict) -> StrokeRecord:
    verts = obj["vertices"]
    label = obj.get("label")
    return StrokeRecord(
        positions=np.array([v["p"] for v in verts], dtype=np.float64),
        timestamps=np.array([v["t"] for v in verts], dtype=np.float64),
        pressures=np.array([v["pressure"] for v in verts], dtype=np.float64),
        tilts=np.array([v["tilt"] for v in verts], dtype=np.float64),
        twists=np.array([v["twist"] for v in verts], dtype=np.float64),
        normals=np.array([v["normal"] for v in verts], dtype=np.float64),
        ink_color=np.array(obj["ink_color"], dtype=np.float64),
        ink_width=float(obj["ink_width"]),
        camera_position=np.array(obj["camera_position"], dtype=np.float64),
        camera_rotation=np.array(obj["camera_rotation"], dtype=np.float64),
        canvas_id=str(obj["canvas_id"]),
        canvas_type=CanvasType(obj["canvas_type"]),
        canvas_transform=np.array(obj["canvas_transform"],
                                  dtype=np.float64).reshape(4, 4),
        label=StrokeLabel.UNLABELED if label is None else StrokeLabel(int(label)),
    )


def sketch_to_dict(sketch: Sketch) -> dict:
    doc = {
        "name": sketch.name,
        "strokes": [_stroke_to_dict(s) for s in sketch.strokes],
    }
    if sketch.oracle is not None:
        doc["oracle"] = sketch.oracle
    return doc


def sketch_from_dict(doc: dict) -> Sketch:
    try:
        strokes = tuple(_stroke_from_dict(s) for s in doc["strokes"])
        sketch = Sketch(strokes=strokes, name=str(doc.get("name", "")),
                        oracle=doc.get("oracle"))
    except (KeyError, TypeError, IndexError) as exc:
        raise ParseError(f"malformed sketch document: {exc!r}") from None
    except ValueError as exc:
        raise ParseError(f"malformed sketch document: {exc}") from None
    sketch.validate()
    return sketch


def load_sketch(path: str | Path) -> Sketch:
    """Load and validate a sketch JSON file.

    Raises ParseError on malformed files and ValidationError (naming the
    first violated invariant) on well-formed but inconsistent ones.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON in {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ParseError(f"sketch document must be a JSON object: {path}")
    return sketch_from_dict(doc)


def save_sketch(sketch: Sketch, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(sketch_to_dict(sketch), indent=1), encoding="utf-8"
    )


__all__ = ["load_sketch", "save_sketch", "sketch_to_dict", "sketch_from_dict"]
