"""Unsupervised OCR for low-resource abugida scripts: zone-aware segmentation,
glyph features, feature-grouped clustering, contrastive recognition and
linguistic post-processing."""

__version__ = "0.1.0"
