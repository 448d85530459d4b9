"""Keyword search over the catalog."""
