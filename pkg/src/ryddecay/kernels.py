"""Free-space photon-exchange kernels between a pair of emitters.

Dissipative kernel G(b) and coherent shift W(b) as functions of the
dimensionless separation b = 2 pi |r| / lambda_a and the squared projection
cos2 = (d_hat . r_hat)^2 of the dipole orientation onto the separation axis.
These are standalone evaluators: in the regime of lattice spacings large
against the transition wavelength the off-diagonal elements are negligible,
which is exactly what justifies a master equation with the bare on-site rate.
Wiring them into the dissipator would contradict that approximation, so they
only feed limit checks and rate estimates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# below this, cos(b)/b^2 - sin(b)/b^3 is evaluated by series: direct
# evaluation loses ~eps/b^2 absolute to cancellation, which is already a
# 1e-10 relative wobble at b = 1e-3; the truncated series is exact to
# machine precision throughout the branch
SERIES_THRESHOLD = 1e-3


@dataclass(frozen=True)
class KernelInputs:
    b: float
    cos2: float
    gamma_xi: float

    def __post_init__(self):
        if self.b <= 0:
            raise ValueError("b must be positive")
        if not 0.0 <= self.cos2 <= 1.0:
            raise ValueError("cos2 must lie in [0, 1]")
        if self.gamma_xi <= 0:
            raise ValueError("gamma_xi must be positive")

    @property
    def alpha(self) -> float:
        return 1.0 - self.cos2

    @property
    def beta(self) -> float:
        return 1.0 - 3.0 * self.cos2


def _cos_sin_combination(b: float) -> float:
    """cos(b)/b^2 - sin(b)/b^3, series-expanded below the threshold where
    the two terms cancel catastrophically."""
    if b < SERIES_THRESHOLD:
        b2 = b * b
        return -1.0 / 3.0 + b2 / 30.0 - b2 * b2 / 840.0
    return np.cos(b) / b**2 - np.sin(b) / b**3


def gamma_kernel(inputs: KernelInputs) -> float:
    """Dissipative pair kernel.

    (3 gamma_xi / 2) [alpha sin b / b + beta (cos b / b^2 - sin b / b^3)].
    At small b this tends to gamma_xi for every orientation because
    3 alpha - beta = 2 identically.
    """
    b = inputs.b
    sinc = np.sinc(b / np.pi)  # sin(b)/b without the 0/0 hazard
    return 1.5 * inputs.gamma_xi * (inputs.alpha * sinc + inputs.beta * _cos_sin_combination(b))


def v_kernel(inputs: KernelInputs) -> float:
    """Coherent pair shift.

    -(3 gamma_xi / 4) [alpha cos b / b - beta (sin b / b^2 + cos b / b^3)].
    Dominated by the 1/b^3 near-field term at small b; decays at least as
    1/b at large separation.
    """
    b = inputs.b
    bracket = inputs.alpha * np.cos(b) / b - inputs.beta * (
        np.sin(b) / b**2 + np.cos(b) / b**3
    )
    return -0.75 * inputs.gamma_xi * bracket


def gamma_xi_rate(gamma: float, omega_a: float, V: float, xi: int) -> float:
    """Emission rate on the interaction-shifted transition.

    The cubed-frequency scaling gives gamma ((omega_a + xi V)/omega_a)^3;
    for xi V much smaller than omega_a this collapses onto the bare rate.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if omega_a <= 0:
        raise ValueError("omega_a must be positive")
    shifted = omega_a + xi * V
    if shifted <= 0:
        raise ValueError(f"shifted frequency omega_a + {xi} V = {shifted} not positive")
    return gamma * (shifted / omega_a) ** 3
