"""trafficworld: a desk-scale closed-loop generative traffic world model."""

__version__ = "0.1.0"
