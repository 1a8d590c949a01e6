"""Cross-modal grayscale/depth autoencoding and depth-robust navigation workbench."""

__version__ = "0.1.0"
