"""Experiment harness: oracle search, sweeps, plots and the command line."""
