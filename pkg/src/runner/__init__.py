# Experiment configs, run artifacts and CLI commands
