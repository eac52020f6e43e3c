"""Space-air-ground spectrum sharing with a two-tier consensus ledger."""

__version__ = "0.1.0"
