"""Tests for selbayes."""
