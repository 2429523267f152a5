"""Packaged scenarios, presets and prompt templates."""
