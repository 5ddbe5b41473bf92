"""Operational shell: configuration, data, views, training, checkpoints, export, CLI."""
