"""Tests for the federation package."""
