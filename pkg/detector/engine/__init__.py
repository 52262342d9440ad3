"""Online monitor, overhead benchmark, experiment sweeps and the CLI."""
