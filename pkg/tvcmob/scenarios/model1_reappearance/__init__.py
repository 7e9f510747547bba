"""Model 1 nodes that are only observable while paused (AP association).

The local community sits on a 100 m grid cell so that a 100 m
visiting-preference grid lines up with it. Speed is fixed at Model 1's mean
of 10 m/s, so the time spent moving matches the occupancy formula exactly.
"""

NAME = "model1_reappearance"
DESCRIPTION = "10 Model 1 nodes, on only while paused, grid-aligned community"
DEFAULT_RANGE = 10.0
