"""Configuration, training, evaluation and the command-line entry point."""
