"""Zero-false-positive classification and firewall rule synthesis."""

__version__ = "0.1.0"
