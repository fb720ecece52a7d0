# Package root for the continual-learning engine
