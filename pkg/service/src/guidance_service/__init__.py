"""Reference mock server for the guidance wire protocol (version 1)."""

__version__ = "0.1.0"
