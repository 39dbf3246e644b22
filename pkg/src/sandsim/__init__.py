"""Simulator and protocol library for SAND, decentralized energy-aware density management."""

from .config import Mode, SimConfig
from .protocol import EnergyState, RadioPower, TimingConstants
from .sim import Simulation, deploy, simulate

__all__ = ["EnergyState", "Mode", "RadioPower", "SimConfig", "Simulation", "TimingConstants", "deploy", "simulate"]
