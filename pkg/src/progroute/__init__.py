"""Progressive autoencoder training for sparse grid-routing bitmaps."""

__version__ = "0.1.0"
