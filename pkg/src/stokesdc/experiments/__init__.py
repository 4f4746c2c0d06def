"""Measurement harness, table reproduction and CLI."""

from .config import ExperimentConfig, load_table, table_cycles
from .measure import RhoEstimate, measure_rho, fit_tails, initial_guesses
