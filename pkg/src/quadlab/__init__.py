"""Desk-scale quadruped locomotion lab: oscillators, simulation, rewards, metrics and PPO."""

__version__ = "0.1.0"
