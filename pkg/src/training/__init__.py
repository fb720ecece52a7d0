# Sequential task training, evaluation and baselines
