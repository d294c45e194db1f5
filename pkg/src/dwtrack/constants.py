"""Physical constants (SI) shared across the simulator."""

import math

MU0 = 4.0 * math.pi * 1e-7          # vacuum permeability [H/m]
QE = 1.602176634e-19                # elementary charge [C]
MU_B = 9.2740100783e-24             # Bohr magneton [J/T]
GAMMA_E = 1.7595e11                 # gyromagnetic ratio [rad/(s*T)]
