"""Robot-soccer reinforcement learning: simulator, environment, agents and sim-to-real tools."""

__version__ = "0.1.0"
