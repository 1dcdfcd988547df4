"""Training, schedules, evaluation protocols, reporting and the CLI."""
