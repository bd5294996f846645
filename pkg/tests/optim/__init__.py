"""Tests for the optim package."""
