"""Desk-scale simulator of teacher-assisted federated learning on long-tailed data."""

__version__ = "0.1.0"
