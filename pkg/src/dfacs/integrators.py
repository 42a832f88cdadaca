"""Adaptive Dormand-Prince 4(5) integration with dense output.

The embedded pair propagates the 5th-order solution and controls the local
error with the 4th-order estimate. Output states are produced on a fixed
grid t0 + k*output_dt (built by multiplication, never repeated addition)
through the classic 4th-order continuous extension, so the integrator's
internal step sequence is decoupled from the sampling rate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

# Dormand-Prince 5(4) tableau.
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)
_E = _B5 - _B4
# Dense-output weights for the 4th-order interpolant.
_D = np.array(
    [
        -12715105075 / 11282082432,
        0.0,
        87487479700 / 32700410799,
        -10690763975 / 1880347072,
        701980252875 / 199316789632,
        -1453857185 / 822651844,
        69997945 / 29380423,
    ]
)

_ORDER_EXPONENT = -1.0 / 5.0


class IntegrationError(RuntimeError):
    """Raised when the step size underflows (stiffness or blow-up).

    Carries the last time and state that were advanced successfully.
    """

    def __init__(self, message: str, last_valid_time: float, last_state: np.ndarray):
        super().__init__(message)
        self.last_valid_time = last_valid_time
        self.last_state = last_state


@dataclass
class IntegratorConfig:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_step: float = np.inf
    output_dt: float = 0.1

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if not self.output_dt > 0:
            raise ValueError("output_dt must be positive")
        if not self.max_step > 0:
            raise ValueError("max_step must be positive")

    def to_dict(self) -> dict:
        return {
            "rel_tol": self.rel_tol,
            "abs_tol": self.abs_tol,
            "max_step": self.max_step,
            "output_dt": self.output_dt,
        }


def _error_norm(err: np.ndarray, scale: np.ndarray) -> float:
    return float(np.sqrt(np.mean((err / scale) ** 2)))


def _initial_step(f, t0, y0, f0, rel_tol, abs_tol, max_step, span):
    scale = abs_tol + rel_tol * np.abs(y0)
    d0 = _error_norm(y0, scale)
    d1 = _error_norm(f0, scale)
    h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    h0 = min(h0, 0.1 * span, max_step)
    y1 = y0 + h0 * f0
    f1 = f(t0 + h0, y1)
    d2 = _error_norm(f1 - f0, scale) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, span, max_step)


def _dense_eval(theta, y_old, y_new, h, k):
    """4th-order continuous extension on one accepted step."""
    dy = y_new - y_old
    r3 = h * k[0] - dy
    r4 = dy - h * k[6] - r3
    r5 = h * (_D @ k)
    return y_old + theta * (dy + (1 - theta) * (r3 + theta * (r4 + (1 - theta) * r5)))


def integrate(
    f: Callable[[float, np.ndarray], np.ndarray],
    x0: np.ndarray,
    t_span: tuple[float, float],
    config: Optional[IntegratorConfig] = None,
    u: Optional[Callable[[float], np.ndarray]] = None,
    first_step: Optional[float] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Integrate x' = f(t, x) (or f(t, x, u(t))) over t_span.

    Parameters
    ----------
    f : callable
        Derivative function ``f(t, x)``, or ``f(t, x, u_t)`` when ``u``
        is given.
    x0 : array
        Initial state.
    t_span : (t0, t_end)
        Increasing time interval.
    config : IntegratorConfig, optional
    u : callable, optional
        Input schedule ``u(t)``; evaluated at every stage time.
    first_step : float, optional
        Initial step-size hint; estimated automatically when omitted.

    Returns
    -------
    times : (n,) array
        The grid t0 + k*output_dt covering t_span.
    states : (n, dim) array
        Dense-output samples on that grid.

    Raises
    ------
    IntegrationError
        On step-size underflow; carries the last valid time and state.
    """
    cfg = config or IntegratorConfig()
    t0, t_end = float(t_span[0]), float(t_span[1])
    if not t_end > t0:
        raise ValueError("t_span must be increasing")
    y = np.asarray(x0, dtype=float).copy()
    if not np.all(np.isfinite(y)):
        raise ValueError("initial state must be finite")

    rhs = f if u is None else (lambda t, x: f(t, x, u(t)))

    n_out = int(np.floor((t_end - t0) / cfg.output_dt + 1e-9)) + 1
    times = t0 + np.arange(n_out) * cfg.output_dt
    states = np.empty((n_out, y.size))
    states[0] = y
    next_out = 1

    t = t0
    span = t_end - t0
    f0 = rhs(t, y)
    h = first_step if first_step is not None else _initial_step(
        rhs, t, y, f0, cfg.rel_tol, cfg.abs_tol, cfg.max_step, span
    )
    h = min(h, cfg.max_step, span)

    k = np.empty((7, y.size))
    k[0] = f0
    safety, min_factor, max_factor = 0.9, 0.2, 10.0
    h_floor = 16 * np.finfo(float).eps

    while t < t_end:
        h = min(h, cfg.max_step, t_end - t)
        if h < h_floor * max(abs(t), 1.0):
            raise IntegrationError(
                f"step size underflow at t={t:.6g}", last_valid_time=t, last_state=y
            )

        for s in range(1, 7):
            k[s] = rhs(t + _C[s] * h, y + h * (_A[s] @ k[:s]))
        y_new = y + h * (_B5 @ k)
        err = h * (_E @ k)
        scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(y), np.abs(y_new))
        norm = _error_norm(err, scale)

        if norm <= 1.0:
            t_new = t + h
            while next_out < n_out and times[next_out] <= t_new + h_floor * max(abs(t_new), 1.0):
                theta = (times[next_out] - t) / h
                states[next_out] = _dense_eval(min(theta, 1.0), y, y_new, h, k)
                next_out += 1
            y = y_new
            t = t_new
            k[0] = k[6]  # FSAL
            factor = max_factor if norm == 0.0 else min(
                max_factor, max(min_factor, safety * norm**_ORDER_EXPONENT)
            )
            h *= factor
        else:
            h *= max(min_factor, safety * norm**_ORDER_EXPONENT)

    if next_out < n_out:
        states[next_out:] = y
    return times, states


def integrate_fixed(
    f: Callable[[float, np.ndarray], np.ndarray],
    x0: np.ndarray,
    t_span: tuple[float, float],
    step: float,
    u: Optional[Callable[[float], np.ndarray]] = None,
) -> np.ndarray:
    """Propagate with a constant step (no error control); returns x(t_end).

    Exposed for convergence-order studies of the underlying pair.
    """
    t0, t_end = float(t_span[0]), float(t_span[1])
    rhs = f if u is None else (lambda t, x: f(t, x, u(t)))
    n_steps = int(round((t_end - t0) / step))
    if not np.isclose(t0 + n_steps * step, t_end):
        raise ValueError("t_span must be an integer number of steps")
    y = np.asarray(x0, dtype=float).copy()
    k = np.empty((7, y.size))
    for m in range(n_steps):
        t = t0 + m * step
        k[0] = rhs(t, y)
        for s in range(1, 7):
            k[s] = rhs(t + _C[s] * step, y + step * (_A[s] @ k[:s]))
        y = y + step * (_B5 @ k)
    return y
