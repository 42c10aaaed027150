"""Command-line interface for the driver action prediction toolkit."""
