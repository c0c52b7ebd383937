"""Wideband ISAC transmitter design with spatial path index modulation under beam-split."""

from . import array_model, beamforming, channel, estimation, metrics, radar

__version__ = "0.1.0"

__all__ = ["array_model", "beamforming", "channel", "estimation", "metrics", "radar", "__version__"]
