"""Two-cell downlink OFDMA allocation with partial frequency reuse."""

__version__ = "0.1.0"
