"""Time-modulated nonreciprocal filtering antenna: synthesis, harmonic balance,
time-domain verification, Yagi-Uda model and modulation search."""

__version__ = "0.1.0"
