# Task-conditioned hard attention: gates, masks, conditioning, regularizer
