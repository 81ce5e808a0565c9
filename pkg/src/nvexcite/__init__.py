"""Laser-excitation characterization toolkit for single-NV confocal microscopy.

Fits beam caustics and knife-edge scans, photon correlations, saturation
and polarization sweeps, emission spectra, AOM pulse traces and ODMR dips,
with seeded synthetic generators for each.
"""

__version__ = "0.1.0"
