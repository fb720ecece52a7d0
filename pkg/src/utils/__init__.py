# Settings, storage, logging, errors and checkpoints
