"""ICI-free PBCH-based channel estimation and Doppler gesture sensing on LTE signals."""

__version__ = "0.1.0"
