"""Test package for formnet."""
