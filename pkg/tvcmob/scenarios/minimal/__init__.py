"""One roaming node: plain random-direction mobility over the field."""

NAME = "minimal"
DESCRIPTION = "Single node, one period, roaming community only"
DEFAULT_RANGE = 10.0
