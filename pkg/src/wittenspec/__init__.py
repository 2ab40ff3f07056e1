"""Exponential asymptotics of low-lying Witten Laplacian spectra."""
