"""End-to-end transcription of multi-view street-name signs."""

__version__ = "0.1.0"
