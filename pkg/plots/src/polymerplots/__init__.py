"""Figure rendering for polymerlab CSV artifacts."""
