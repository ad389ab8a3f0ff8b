"""Scenario loading, checkers, metrics and the command-line runner."""
