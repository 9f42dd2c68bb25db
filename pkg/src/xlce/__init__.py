"""Two-stage decentralized channel estimation for extremely large arrays.

The package is organized around the processing chain of a star-topology
baseband architecture: every subarray solves a local sparse recovery
problem (``sbl``, optionally driven by the learned prior in ``gnn_prior``),
and a central unit fuses the local estimates in a shared angular basis and
denoises them with a chain-structured variational refiner (``refine``).
``channel`` and ``measurement`` provide the near-field wideband simulator
that feeds everything, and ``harness`` holds the reproducible experiment
drivers plus the command line front end.
"""

from . import channel, measurement, numerics, refine, sbl

__all__ = ["channel", "measurement", "numerics", "refine", "sbl"]

__version__ = "0.1.0"
