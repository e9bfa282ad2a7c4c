"""History functions turning past-event counts into intensity multipliers."""

from __future__ import annotations

import numpy as np


class DynamicCoeffs(np.ndarray):
    """Nonnegative coefficient vector (alpha_q or gamma), one entry per recurrent type."""

    def __new__(cls, values):
        arr = np.asarray(values, dtype=float).reshape(-1)
        if np.any(~np.isfinite(arr)) or np.any(arr < 0):
            raise ValueError("dynamic coefficients must be finite and nonnegative")
        return arr.view(cls)


def linear_rho(history, coeffs) -> np.ndarray:
    """1 + history . coeffs, broadcasting over leading axes of ``history``."""
    return 1.0 + np.asarray(history, dtype=float) @ np.asarray(coeffs, dtype=float)


_RHO_FORMS = {"linear": linear_rho}


def rho(history, coeffs, form: str = "linear") -> float:
    """Multiplicative intensity factor for a past-event count vector.

    Parameters
    ----------
    history : array_like of int, shape (Q,)
        Counts of each recurrent type strictly before the current time.
    coeffs : array_like, shape (Q,)
        Nonnegative dynamic coefficients.
    form : str
        Name of the history function. Only ``"linear"`` is provided.

    Returns
    -------
    float
        A value >= 1.
    """
    h = np.asarray(history)
    c = np.asarray(coeffs, dtype=float)
    if h.shape != c.shape or h.ndim != 1:
        raise ValueError(f"history shape {h.shape} does not match coefficient shape {c.shape}")
    if np.any(h < 0):
        raise ValueError("history counts must be nonnegative")
    if np.any(c < 0):
        raise ValueError("dynamic coefficients must be nonnegative")
    if form not in _RHO_FORMS:
        raise ValueError(f"unknown history function {form!r}")
    return float(_RHO_FORMS[form](h, c))
