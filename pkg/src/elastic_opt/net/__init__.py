"""Distributed runtime: framed TCP protocol, center server, worker clients."""
