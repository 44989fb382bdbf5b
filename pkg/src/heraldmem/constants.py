"""Physical constants used throughout the package.

Values are standard tabulated numbers for the rubidium-87 D2 line.
Angular rates are in rad/s, frequencies in Hz, lengths in metres.
"""

from dataclasses import dataclass
import math

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class PhysicalConstants:
    speed_of_light: float = 299_792_458.0
    rb87_d2_wavelength: float = 780.241e-9
    # amplitude decay rate of 5P3/2, i.e. half the natural linewidth 2pi*6.065 MHz
    gamma_atom: float = TWO_PI * 3.0325e6
    bohr_magneton_over_h: float = 1.39962e10  # Hz/T  (= 1.39962 MHz/G)
    g_factor_F2: float = 0.5

    def __post_init__(self):
        for name in ("speed_of_light", "rb87_d2_wavelength", "gamma_atom",
                     "bohr_magneton_over_h", "g_factor_F2"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")

    @property
    def natural_linewidth(self):
        """Energy decay rate Gamma = 2*gamma (rad/s)."""
        return 2.0 * self.gamma_atom

    def larmor_frequency(self, b_field):
        """Larmor frequency in Hz of the F=2 manifold for a field in tesla."""
        return self.g_factor_F2 * self.bohr_magneton_over_h * b_field


CONSTANTS = PhysicalConstants()

GAUSS = 1e-4  # tesla
