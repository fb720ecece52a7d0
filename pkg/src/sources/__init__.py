# Data loaders and task suites
