"""Synthetic scenes, experiment runners, reports and the command line."""
