"""Command-line front end and JSON instance/report I/O."""
