"""Desk-scale accuracy-first synthetic data pipeline."""
