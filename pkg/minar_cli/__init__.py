# minar-cli/minar_cli/__init__.py
"""Multivariate INAR(1) count models for outbreak surveillance."""

__version__ = "0.1.0"
