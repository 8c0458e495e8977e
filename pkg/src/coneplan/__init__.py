"""Shared-control navigation sandbox.

Pieces: occupancy-grid worlds, Voronoi-graph trajectory synthesis, intention-cone
subgoal prediction with two-stage replanning, a hybrid-action PPO trainer, a shared
dynamic-window controller, and a dual-rate closed-loop simulator with metrics.
"""

__version__ = "0.1.0"
