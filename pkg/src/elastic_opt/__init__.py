"""Elastic-averaging SGD workbench.

Update kernels for the EASGD family and its baselines, a deterministic
discrete-event simulator, a quadratic-case stability/variance lab, and a
framed-TCP parameter-server runtime, all sharing one seeded RNG substrate.
"""

__version__ = "0.1.0"
