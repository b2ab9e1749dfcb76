"""Joint beamforming and tag detection for backscatter ISAC links."""

__version__ = "0.1.0"
