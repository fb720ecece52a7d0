# Capacity monitoring and mask-driven pruning
