"""Nonlocal diffusion on exterior domains."""
