"""Extend 2D saliency models to 360-degree images through rotated cubemaps and CNN fusion."""

__version__ = "0.1.0"
