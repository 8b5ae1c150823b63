"""HDR environment reconstruction, ray-decoupled insertion rendering and shadow compositing."""

__version__ = "0.1.0"
