"""Model 3: weakly attractive community (half of all epochs roam)."""

NAME = "model3"
DESCRIPTION = "Not attractive local community, periods 2000 s / 1000 s"
DEFAULT_RANGE = 10.0
