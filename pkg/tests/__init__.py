"""Test suite for fedftg-sim."""
