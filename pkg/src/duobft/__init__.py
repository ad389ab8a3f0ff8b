"""DuoBFT, Flexible MinBFT and multi-chain DuoBFT over a deterministic simulator."""

__version__ = "0.1.0"
