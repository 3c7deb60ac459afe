# Core data structures: datasets, MLP parameters, victim access
