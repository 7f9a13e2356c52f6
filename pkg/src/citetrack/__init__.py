"""Vision-language single object tracking with image-text correlation."""

__version__ = "0.1.0"
