# Dense network kernel with explicit forward/backward passes
