"""Quasiprobability trajectories for mutual-information fluctuation theorems."""
from . import circuits, interferometry, qlinalg, trajectories, tripartite
from .tripartite import TripartiteSetup, evolve, experiment_setup, random_setup
from .trajectories import quasiprobability, retrodiction_quasiprobability, stochastic_table

__all__ = [
    "circuits", "interferometry", "qlinalg", "trajectories", "tripartite",
    "TripartiteSetup", "evolve", "experiment_setup", "random_setup",
    "quasiprobability", "retrodiction_quasiprobability", "stochastic_table",
]
