# Forgetting arithmetic and multi-seed aggregation
