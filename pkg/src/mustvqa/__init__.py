"""Multilingual scene-text VQA: data, encoders, models, metrics and protocols."""

__version__ = "0.1.0"
