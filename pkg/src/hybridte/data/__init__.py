"""Bundled topologies."""
