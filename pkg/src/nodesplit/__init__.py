"""Layer-split planning and simulation for running one network across a wearable node and a hub."""

__version__ = "0.1.0"
