"""SAR image segmentation with GAN-generated optical fusion and external attention."""

__version__ = "0.1.0"
