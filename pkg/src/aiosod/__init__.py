"""All-in-one salient object detection for RGB, RGB-D and RGB-T images."""

__version__ = "0.1.0"
