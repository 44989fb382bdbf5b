"""Simulation and analysis of a heralded single-atom quantum memory in crossed fibre cavities.

Subpackages and modules
-----------------------
config, constants, levels
    Physical constants, Rb-87 level data and the validated system configuration.
cavity
    Fabry-Perot rates, Gaussian mode geometry, birefringence and spectra.
storage
    Closed-form storage and heralding efficiencies versus herald detuning.
dynamics
    Trajectory engine for write, storage, read-out and detection.
stats, tomography, fitting
    Click statistics, maximum-likelihood tomography and least-squares fits.
scenarios, report, cli
    Figure-sized scenario runs, their summaries and the command-line entry point.
"""

__version__ = "0.1.0"

from .config import ConfigError, SystemConfig, load_config, load_config_file, reference_config
from .results import ScanResult

__all__ = ["ConfigError", "ScanResult", "SystemConfig", "__version__", "load_config",
           "load_config_file", "reference_config"]
