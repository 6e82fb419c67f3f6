"""Simulation laboratory for central-limit-theorem convergence rates of
dependent stationary sequences, measured in minimal (Wasserstein) and ideal
(Zolotarev) distances."""

__version__ = "0.1.0"
