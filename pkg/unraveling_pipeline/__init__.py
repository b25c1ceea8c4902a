"""Two-period matching markets with late entrants: payoffs, stability, chaos and unraveling."""

__version__ = "1.0.0"
