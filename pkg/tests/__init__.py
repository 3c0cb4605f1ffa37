"""Tests for ISR Platform."""
