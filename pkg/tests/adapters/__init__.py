"""Tests for the adapters package."""
