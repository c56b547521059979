"""Synthetic and live chat backends."""
