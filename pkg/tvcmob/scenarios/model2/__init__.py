"""Model 2: the local community shrinks from 200 m to a nested 50 m square."""

NAME = "model2"
DESCRIPTION = "Local community 200 m then nested 50 m, periods 3000 s / 2000 s"
DEFAULT_RANGE = 10.0
