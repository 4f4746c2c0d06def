"""Local Fourier analysis of the defect-correction multigrid cycle."""

from .symbols import BlockSymbol, stencil_to_symbol, extract_symbol_numeric, lift, harmonic_transform
from .twogrid import two_grid_symbol, dc_symbol, rho_hat, sample_low
from .stokes import DefectCorrectionLFA, StokesSymbols, stokes_symbols, predict_rho
