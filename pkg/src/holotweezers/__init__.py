"""Dynamic holographic optical tweezers: hologram synthesis and single-atom transport simulation."""

__version__ = "0.1.0"
