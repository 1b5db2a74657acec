# src/headmask/__init__.py

"""
headmask - Input-conditioned head masking for encoder-decoder summarizers.

Masks chosen encoder-decoder attention heads to the source tokens a saliency
tagger marks as important, and measures what that does to summary quality.
"""

from .__main__ import main
from .version import __version__

__all__ = ["__version__", "main"]
