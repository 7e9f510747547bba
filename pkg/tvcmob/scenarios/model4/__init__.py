"""Model 4: large local communities (200 m, then 250 m) with long epochs."""

NAME = "model4"
DESCRIPTION = "Local community 200 m then 250 m, periods 2000 s / 1000 s"
DEFAULT_RANGE = 10.0
