"""Adaptive quadrature with tight tolerances and hard failure.

Thin wrapper over scipy's Gauss-Kronrod integrator: convergence warnings
become exceptions, non-finite results are rejected, and the default
tolerances (1e-10 absolute, 1e-8 relative) suit the distribution-level
accuracy targets used across the package.  Semi-infinite ranges go through
scipy's built-in variable transformation.
"""

from __future__ import annotations

import warnings

from scipy import integrate

__all__ = ["QuadratureError", "quad"]

EPSABS = 1e-10
EPSREL = 1e-8


class QuadratureError(RuntimeError):
    """An integral failed to converge or produced a non-finite value."""


def quad(
    f,
    a: float,
    b: float,
    *,
    epsabs: float = EPSABS,
    epsrel: float = EPSREL,
    limit: int = 200,
) -> float:
    """Integrate `f` over [a, b] (either end may be infinite).

    Raises QuadratureError instead of warning when the integrator cannot
    reach its tolerance or the value is not finite.
    """
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            val, _err = integrate.quad(f, a, b, epsabs=epsabs, epsrel=epsrel, limit=limit)
    except integrate.IntegrationWarning as exc:
        raise QuadratureError(f"integral over [{a}, {b}] did not converge: {exc}") from exc
    if not (val == val and abs(val) != float("inf")):
        raise QuadratureError(f"integral over [{a}, {b}] is not finite: {val}")
    return float(val)
