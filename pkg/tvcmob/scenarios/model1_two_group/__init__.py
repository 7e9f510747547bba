"""Two groups of 25 Model 1 nodes with disjoint local communities.

Group "a" lives around (300, 300), group "b" around (700, 700); they only
meet while roaming.
"""

NAME = "model1_two_group"
DESCRIPTION = "2 x 25 Model 1 nodes, communities around (300,300) and (700,700)"
DEFAULT_RANGE = 10.0
