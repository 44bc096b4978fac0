"""Rule-embedded audio-visual voice activity detection."""

__version__ = "0.1.0"
