"""Experiment harness: configuration, experiments and the command line."""
