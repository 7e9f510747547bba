"""tvcmob, time-variant community mobility: traces, formulas, validation.

Simulates nodes that move between community squares on a repeating daily
schedule, evaluates the closed-form occupancy, node degree, hitting time and
meeting time of that model, and checks the formulas against simulation.

Usage:
    python -m tvcmob list                                  # Bundled configs
    python -m tvcmob generate --config model1 --seed 1     # NS2 + CSV trace
    python -m tvcmob theory --config model3_two_group      # Analytic report
    python -m tvcmob validate --config model1 --iters 5000 # Theory vs simulation
"""

__version__ = "0.1.0"
