from .model import CanvasType, Sketch, StrokeLabel, StrokeRecord, StrokeVertex
from .geometry import SpatialIndex, arc_length, rdp
from .io import load_sketch, save_sketch, sketch_from_dict, sketch_to_dict
from .synth import SynthConfig, synth_sketch

__all__ = [
    "CanvasType", "Sketch", "StrokeLabel", "StrokeRecord", "StrokeVertex",
    "SpatialIndex", "arc_length", "rdp",
    "load_sketch", "save_sketch", "sketch_from_dict", "sketch_to_dict",
    "SynthConfig", "synth_sketch",
]
