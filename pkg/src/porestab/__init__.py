"""Linear stability of surface-catalysed reaction-advection-diffusion in a
cylindrical pore: discretization, spectra and nonlinear time stepping."""

__version__ = "0.1.0"
