"""Scenario definitions."""
