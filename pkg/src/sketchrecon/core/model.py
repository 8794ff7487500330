"""Data model for 4D sketches.

A sketch is an ordered list of strokes; each stroke carries its polyline
vertices (positions plus timestamps and stylus channels, stored as column
arrays) and per-stroke ink/camera/canvas metadata. All containers are
treated as immutable after construction; operations elsewhere in the
package never mutate them.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import ValidationError

UNIT_TOL = 1e-6


class CanvasType(str, enum.Enum):
    PLANE = "Plane"
    CUBE = "Cube"
    SPHERE = "Sphere"
    CYLINDER = "Cylinder"


class StrokeLabel(enum.IntEnum):
    SCRIBBLE = 0
    SHAPE = 1
    NOISE = -1
    UNLABELED = -2


@dataclass(frozen=True)
class StrokeVertex:
    """A single polyline vertex view (positions are world-space meters)."""

    position: np.ndarray        # (3,)
    timestamp: float            # seconds since sketch start
    pressure: float             # in [0, 1]
    tilt: np.ndarray            # (2,) radians
    twist: float                # radians
    canvas_normal: np.ndarray   # unit (3,)


def _as_readonly(a: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(a, dtype=np.float64)
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class StrokeRecord:
    """One drawn stroke: vertex columns plus per-stroke metadata.

    Vertex data is stored as column arrays rather than per-vertex objects;
    ``vertex(i)`` materializes a :class:`StrokeVertex` view when needed.
    """

    positions: np.ndarray       # (n, 3)
    timestamps: np.ndarray      # (n,)
    pressures: np.ndarray       # (n,)
    tilts: np.ndarray           # (n, 2)
    twists: np.ndarray          # (n,)
    normals: np.ndarray         # (n, 3)
    ink_color: np.ndarray       # (3,) rgb in [0, 1]
    ink_width: float
    camera_position: np.ndarray  # (3,)
    camera_rotation: np.ndarray  # (4,) quaternion x, y, z, w
    canvas_id: str
    canvas_type: CanvasType
    canvas_transform: np.ndarray  # (4, 4) row-major affine
    label: StrokeLabel = StrokeLabel.UNLABELED

    def __post_init__(self) -> None:
        for name in ("positions", "timestamps", "pressures", "tilts",
                     "twists", "normals", "ink_color", "camera_position",
                     "camera_rotation", "canvas_transform"):
            object.__setattr__(self, name, _as_readonly(getattr(self, name)))
        object.__setattr__(self, "ink_width", float(self.ink_width))
        object.__setattr__(self, "canvas_type", CanvasType(self.canvas_type))
        object.__setattr__(self, "label", StrokeLabel(self.label))

    def __len__(self) -> int:
        return self.positions.shape[0]

    def vertex(self, i: int) -> StrokeVertex:
        return StrokeVertex(
            position=self.positions[i],
            timestamp=float(self.timestamps[i]),
            pressure=float(self.pressures[i]),
            tilt=self.tilts[i],
            twist=float(self.twists[i]),
            canvas_normal=self.normals[i],
        )

    def validate(self) -> None:
        """Raise ValidationError naming the first violated invariant."""
        n = len(self)
        if n < 2:
            raise ValidationError("vertices: stroke needs at least 2 vertices")
        if self.positions.shape != (n, 3):
            raise ValidationError("positions: expected shape (n, 3)")
        if self.tilts.shape != (n, 2):
            raise ValidationError("tilt: expected shape (n, 2)")
        if self.normals.shape != (n, 3):
            raise ValidationError("normal: expected shape (n, 3)")
        if np.any(self.timestamps < 0.0):
            raise ValidationError("timestamps: negative timestamp")
        if np.any(np.diff(self.timestamps) < 0.0):
            raise ValidationError("timestamps: decreasing along the stroke")
        if np.any(self.pressures < 0.0) or np.any(self.pressures > 1.0):
            raise ValidationError("pressure: outside [0, 1]")
        norms = np.linalg.norm(self.normals, axis=1)
        if np.any(np.abs(norms - 1.0) > UNIT_TOL):
            raise ValidationError("normal: not unit length")
        if np.any(self.ink_color < 0.0) or np.any(self.ink_color > 1.0):
            raise ValidationError("ink_color: outside [0, 1]")
        if not (0.01 <= self.ink_width <= 1.0):
            raise ValidationError("ink_width: outside [0.01, 1.0]")
        if self.canvas_transform.shape != (4, 4):
            raise ValidationError("canvas_transform: expected 4x4 matrix")
        if abs(np.linalg.det(self.canvas_transform[:3, :3])) == 0.0:
            raise ValidationError("canvas_transform: singular linear part")
        if self.camera_rotation.shape != (4,):
            raise ValidationError("camera_rotation: expected quaternion")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, StrokeRecord):
            return NotImplemented
        return (
            np.array_equal(self.positions, other.positions)
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.pressures, other.pressures)
            and np.array_equal(self.tilts, other.tilts)
            and np.array_equal(self.twists, other.twists)
            and np.array_equal(self.normals, other.normals)
            and np.array_equal(self.ink_color, other.ink_color)
            and self.ink_width == other.ink_width
            and np.array_equal(self.camera_position, other.camera_position)
            and np.array_equal(self.camera_rotation, other.camera_rotation)
            and self.canvas_id == other.canvas_id
            and self.canvas_type == other.canvas_type
            and np.array_equal(self.canvas_transform, other.canvas_transform)
            and self.label == other.label
        )


@dataclass(frozen=True, eq=False)
class Sketch:
    """An ordered collection of strokes (drawing order == list order)."""

    strokes: tuple[StrokeRecord, ...]
    name: str = ""
    oracle: dict | None = field(default=None)

    def __post_init__(self) -> None:
        object.__setattr__(self, "strokes", tuple(self.strokes))

    def __len__(self) -> int:
        return len(self.strokes)

    @property
    def scale(self) -> float:
        """Diameter of the axis-aligned bounding box of all vertices."""
        if not self.strokes:
            return 0.0
        lo = np.min([s.positions.min(axis=0) for s in self.strokes], axis=0)
        hi = np.max([s.positions.max(axis=0) for s in self.strokes], axis=0)
        return float(np.linalg.norm(hi - lo))

    def all_points(self) -> np.ndarray:
        return np.concatenate([s.positions for s in self.strokes], axis=0)

    def labels(self) -> np.ndarray:
        return np.array([int(s.label) for s in self.strokes], dtype=int)

    def with_labels(self, labels) -> "Sketch":
        """A copy of the sketch with per-stroke labels replaced."""
        if len(labels) != len(self.strokes):
            raise ValidationError("labels: one label per stroke required")
        strokes = tuple(
            replace(s, label=StrokeLabel(int(v)))
            for s, v in zip(self.strokes, labels)
        )
        return Sketch(strokes=strokes, name=self.name, oracle=self.oracle)

    def validate(self) -> None:
        for i, stroke in enumerate(self.strokes):
            try:
                stroke.validate()
            except ValidationError as exc:
                raise ValidationError(f"stroke {i}: {exc}") from None

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Sketch):
            return NotImplemented
        return (
            self.name == other.name
            and self.oracle == other.oracle
            and len(self.strokes) == len(other.strokes)
            and all(a == b for a, b in zip(self.strokes, other.strokes))
        )
