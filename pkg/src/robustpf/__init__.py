"""Robust rate adaptation and proportional fair scheduling with imperfect CSI."""

__version__ = "0.1.0"
