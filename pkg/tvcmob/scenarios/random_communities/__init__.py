"""50 Model 1 nodes whose local communities are placed at random per seed."""

NAME = "random_communities"
DESCRIPTION = "50 Model 1 nodes, random grid-aligned local communities"
DEFAULT_RANGE = 10.0
