"""Two groups of 25 Model 3 nodes; roaming dominates, so groups mix quickly."""

NAME = "model3_two_group"
DESCRIPTION = "2 x 25 Model 3 nodes, communities around (300,300) and (700,700)"
DEFAULT_RANGE = 10.0
