"""Model 1: strong attachment to one small community, daily two-period cycle.

Matches the campus WLAN visiting pattern: a local 100 m community around
(300, 300) and occasional roaming over the whole field.
"""

NAME = "model1"
DESCRIPTION = "Local 100 m community + roaming, periods 5760 s / 2880 s"
DEFAULT_RANGE = 10.0
