"""corridorpilot: a desk-scale monocular behavioral-cloning navigation sandbox.

Demonstrations are flown in a procedural corridor world, a small convolutional
classifier is fine-tuned to map frames to one of six flight commands, a
confidence-gated controller flies autonomously to a target, and gradient-based
visualizations explain what the model learned.
"""

__version__ = "0.1.0"

from .commands import FlightCommand

__all__ = ["FlightCommand", "__version__"]
