"""sketchrecon: curve networks and surfaces from 4D design sketches."""

__version__ = "0.1.0"
