"""GraphHop semi-supervised node classification."""
