"""Desk-scale hybrid residual-CNN / windowed-attention lesion segmentation."""

__version__ = "0.1.0"
