"""Bundled scenario files, see `coopoap.scenario` for the grammar."""
