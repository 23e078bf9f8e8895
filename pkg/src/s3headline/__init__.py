"""Headline generation over a joint discourse (RST) and semantic (AMR) document graph."""

from .errors import S3Error, ValidationError

__version__ = "0.1.0"
__all__ = ["S3Error", "ValidationError", "__version__"]
