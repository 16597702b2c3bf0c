"""Exponential-family random network models."""
