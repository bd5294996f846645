"""Tests for the services package."""
