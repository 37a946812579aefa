"""Minimal-HTML corpus tooling and HTML prompting harness."""

__version__ = "0.1.0"
