"""Test suite for the parley package."""
