"""Unit tests for the simulation services."""
