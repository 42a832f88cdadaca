"""Box-constrained linear MPC on the discrete lifted models.

The predicted states are eliminated (condensed form), leaving the first
``Nc`` input blocks as the only decision variables; inputs beyond the
control horizon are held at the last block. The resulting strictly convex
box QP is solved by a projected-Newton active-set method whose bound
compliance is exact by construction (iterates are clipped, never merely
penalized).

The receding-horizon controller stacks the attitude and test-mass models
block-diagonally (their QPs are separable, so this is equivalent to solving
them independently), applies the first optimal input block through an
optional input transformation, and holds the previous command if the solver
ever fails.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .dynamics import DisturbanceModel, SatelliteParams, make_rhs
from .identify import LiftedModel
from .integrators import IntegratorConfig, integrate
from .states import INPUT_DIM, INPUT_NAMES, STATE_NAMES

log = logging.getLogger(__name__)

# Reference controller tuning for the capture experiment: weights by named
# dictionary block (entries of nonlinear observables are weighted zero) and
# symmetric input bounds per channel group.
CAPTURE_STATE_WEIGHTS = {
    "theta_SI": 600.0,
    "zeta": 10.0,
    "r_MO_1": 0.005,
    "theta_MO_1": 0.0004,
    "r_MO_2": 0.005,
    "theta_MO_2": 0.0004,
}
CAPTURE_INPUT_WEIGHTS = {
    "M_T": 18.0,
    "M_MOSA": 20.0,
    "F_E_1": 0.01,
    "M_E_1": 0.001,
    "F_E_2": 0.01,
    "M_E_2": 0.001,
}
CAPTURE_INPUT_BOUNDS = {
    "M_T": 2e-5,
    "M_MOSA": 2e-5,
    "F_E_1": 1e-6,
    "M_E_1": 1e-6,
    "F_E_2": 1e-6,
    "M_E_2": 1e-6,
}


def capture_initial_state() -> np.ndarray:
    """Release offsets of the capture experiment (micro-unit profile)."""
    x = np.zeros(34)
    x[0:3] = np.array([1.0, 2.0, 5.0]) * 1e-6  # theta_SI, urad
    x[6:8] = 0.01e-6  # zeta, urad
    for i in range(2):
        base = 10 + 12 * i
        x[base : base + 3] = 200e-6  # r_MO, um
        x[base + 3 : base + 6] = 5e-6  # r_dot_MO, um/s
        x[base + 6 : base + 9] = 2e-3  # theta_MO, mrad
        x[base + 9 : base + 12] = 600e-6  # omega_MO, urad/s
    return x


@dataclass
class MpcConfig:
    """Horizons, diagonal weights, and input box for the condensed QP."""

    q: np.ndarray  # (N,) state weights in lifted space
    r: np.ndarray  # (m,) input weights
    s: np.ndarray  # (m,) input-increment weights
    u_min: np.ndarray  # (m,)
    u_max: np.ndarray  # (m,)
    prediction_horizon: int = 50
    control_horizon: int = 1
    reference: Optional[np.ndarray] = None  # (N,), defaults to the origin

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.r = np.asarray(self.r, dtype=float)
        self.s = np.asarray(self.s, dtype=float)
        self.u_min = np.asarray(self.u_min, dtype=float)
        self.u_max = np.asarray(self.u_max, dtype=float)
        if self.reference is not None:
            self.reference = np.asarray(self.reference, dtype=float)
        if not (self.prediction_horizon >= self.control_horizon >= 1):
            raise ValueError("need prediction_horizon >= control_horizon >= 1")
        if np.any(self.q < 0) or np.any(self.r < 0) or np.any(self.s < 0):
            raise ValueError("weights must be non-negative")
        if np.any(self.r + self.s <= 0):
            raise ValueError("R + S must be positive element-wise (strict convexity)")
        if np.any(self.u_min >= self.u_max):
            raise ValueError("u_min must be below u_max element-wise")

    @property
    def n_inputs(self) -> int:
        return self.r.size


@dataclass
class QpProblem:
    """Dense strictly convex QP: min 0.5 v'Hv + g'v + const, lb <= v <= ub."""

    h: np.ndarray
    g: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    const: float = 0.0

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=float)
        self.g = np.asarray(self.g, dtype=float)
        self.lb = np.asarray(self.lb, dtype=float)
        self.ub = np.asarray(self.ub, dtype=float)
        if not np.all(np.isfinite(self.h)) or not np.all(np.isfinite(self.g)):
            raise ValueError("QP data must be finite")
        if np.linalg.norm(self.h - self.h.T) > 1e-10 * max(np.linalg.norm(self.h), 1.0):
            raise ValueError("Hessian must be symmetric")
        try:
            np.linalg.cholesky(self.h)
        except np.linalg.LinAlgError:
            raise ValueError("Hessian must be positive definite")
        if np.any(self.lb > self.ub):
            raise ValueError("lb must not exceed ub")

    def objective(self, v: np.ndarray) -> float:
        v = np.asarray(v, dtype=float)
        return float(0.5 * v @ self.h @ v + self.g @ v + self.const)


class QpSolverError(RuntimeError):
    """Solver did not reach the requested KKT residuals.

    Carries the best iterate and its residuals.
    """

    def __init__(self, message: str, best: np.ndarray, residuals: dict):
        super().__init__(message)
        self.best = best
        self.residuals = residuals


def kkt_residuals(qp: QpProblem, v: np.ndarray) -> dict:
    """Stationarity / feasibility / complementarity measures at a point."""
    grad = qp.h @ v + qp.g
    pg = grad.copy()
    at_lb = v <= qp.lb
    at_ub = v >= qp.ub
    pg[at_lb] = np.minimum(grad[at_lb], 0.0)
    pg[at_ub] = np.maximum(grad[at_ub], 0.0)
    slack = np.minimum(v - qp.lb, qp.ub - v)
    return {
        "stationarity": float(np.max(np.abs(pg))),
        "feasibility": float(max(np.max(qp.lb - v, initial=0.0), np.max(v - qp.ub, initial=0.0))),
        "complementarity": float(np.max(np.minimum(np.abs(grad), np.abs(slack)))),
    }


def solve_qp(
    qp: QpProblem,
    tol: float = 1e-8,
    max_iter: int = 100,
    x0: Optional[np.ndarray] = None,
) -> tuple[np.ndarray, dict]:
    """Projected-Newton active-set solve of a box QP.

    Bound feasibility of every iterate is exact (clipping); convergence is
    declared when the projected gradient drops below ``tol`` relative to
    the problem's gradient scale. Returns the solution and an info dict.

    Raises
    ------
    QpSolverError
        If the iteration or line-search limit is hit first.
    """
    h, g, lb, ub = qp.h, qp.g, qp.lb, qp.ub
    # convergence is relative to the problem's own gradient magnitude so
    # micro-scale and O(1) instances are treated alike
    grad_scale = float(np.max(np.abs(g)))
    if grad_scale == 0.0:
        box = np.maximum(np.abs(lb), np.abs(ub))
        grad_scale = float(np.max(np.abs(h)) * np.min(box[np.isfinite(box)], initial=1.0))
        grad_scale = max(grad_scale, 1e-300)

    if x0 is None:
        x = np.clip(np.linalg.solve(h, -g), lb, ub)
    else:
        x = np.clip(np.asarray(x0, dtype=float), lb, ub)
    value = qp.objective(x)

    for iteration in range(1, max_iter + 1):
        grad = h @ x + g
        at_lb, at_ub = x <= lb, x >= ub
        pg = grad.copy()
        pg[at_lb] = np.minimum(grad[at_lb], 0.0)
        pg[at_ub] = np.maximum(grad[at_ub], 0.0)
        if np.max(np.abs(pg)) <= tol * grad_scale:
            return x, {"iterations": iteration - 1, **kkt_residuals(qp, x)}

        clamped = (at_lb & (grad > 0)) | (at_ub & (grad < 0))
        free = ~clamped
        grad_clamped = g + h @ (x * clamped)
        search = np.zeros_like(x)
        h_ff = h[np.ix_(free, free)]
        search[free] = np.linalg.solve(h_ff, -grad_clamped[free]) - x[free]

        sdotg = float(search @ grad)
        if sdotg >= 0:
            break  # numerically no descent left

        step, armijo = 1.0, 0.1
        accepted = False
        while step >= 1e-20:
            xc = np.clip(x + step * search, lb, ub)
            vc = qp.objective(xc)
            if (vc - value) <= armijo * step * sdotg:
                x, value = xc, vc
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break

    residuals = kkt_residuals(qp, x)
    if residuals["stationarity"] <= tol * grad_scale:
        return x, {"iterations": max_iter, **residuals}
    raise QpSolverError(
        f"QP solver stalled with stationarity {residuals['stationarity']:.3e}",
        best=x,
        residuals=residuals,
    )


class CondensedMpc:
    """State-elimination of the MPC cost into a dense box QP.

    Everything that does not depend on the current lifted state or previous
    input is precomputed once, so a per-step build is two small matvecs.
    """

    def __init__(self, a_d: np.ndarray, b_d: np.ndarray, config: MpcConfig):
        a_d = np.asarray(a_d, dtype=float)
        b_d = np.asarray(b_d, dtype=float)
        n = a_d.shape[0]
        m = b_d.shape[1]
        if a_d.shape != (n, n) or b_d.shape[0] != n:
            raise ValueError("inconsistent model dimensions")
        if config.q.size != n:
            raise ValueError(f"q must have {n} entries, got {config.q.size}")
        if config.r.size != m:
            raise ValueError(f"r must have {m} entries, got {config.r.size}")
        if not (np.all(np.isfinite(a_d)) and np.all(np.isfinite(b_d))):
            raise ValueError("model matrices must be finite")
        self.n, self.m = n, m
        self.config = config
        np_h, nc = config.prediction_horizon, config.control_horizon
        d = m * nc
        self.dim = d
        ref = config.reference if config.reference is not None else np.zeros(n)
        q, r, s = config.q, config.r, config.s

        # prediction: chi_k = A^k chi0 + F_k v with blocked/held inputs
        a_pow = np.empty((np_h, n, n))
        a_pow[0] = np.eye(n)
        for k in range(1, np_h):
            a_pow[k] = a_d @ a_pow[k - 1]
        f_mats = np.zeros((np_h, n, d))
        for k in range(1, np_h):
            f_prev = f_mats[k - 1]
            f_mats[k] = a_d @ f_prev
            j = min(k - 1, nc - 1)
            f_mats[k][:, j * m : (j + 1) * m] += b_d

        h = np.zeros((d, d))
        w = np.zeros((d, n))  # gradient coupling to chi0
        f_q_sum = np.zeros((d, n))
        p_quad = np.zeros((n, n))  # chi0' P chi0 constant term
        for k in range(np_h):
            fq = f_mats[k].T * q  # F_k' Q
            h += fq @ f_mats[k]
            w += fq @ a_pow[k]
            f_q_sum += fq
            p_quad += (a_pow[k].T * q) @ a_pow[k]
            j = min(k, nc - 1)
            h[j * m : (j + 1) * m, j * m : (j + 1) * m] += np.diag(r)
        # input-increment terms: delta_0 = v_0 - u_prev, delta_k = v_k - v_{k-1}
        h[:m, :m] += np.diag(s)
        for j in range(1, nc):
            sl_j = slice(j * m, (j + 1) * m)
            sl_p = slice((j - 1) * m, j * m)
            h[sl_j, sl_j] += np.diag(s)
            h[sl_p, sl_p] += np.diag(s)
            h[sl_j, sl_p] -= np.diag(s)
            h[sl_p, sl_j] -= np.diag(s)
        h *= 2.0
        self._h = 0.5 * (h + h.T)
        self._w = 2.0 * w
        self._g_ref = -2.0 * (f_q_sum @ ref)
        self._ref = ref
        self._p_quad = p_quad
        self._p_ref = np.array([a_pow[k].T @ (q * ref) for k in range(np_h)]).sum(axis=0)
        self._ref_const = float(np_h * (ref @ (q * ref)))
        self._lb = np.tile(config.u_min, nc)
        self._ub = np.tile(config.u_max, nc)

    def build(self, chi0: np.ndarray, u_prev: np.ndarray) -> QpProblem:
        chi0 = np.asarray(chi0, dtype=float)
        u_prev = np.asarray(u_prev, dtype=float)
        if not np.all(np.isfinite(chi0)):
            raise ValueError("lifted state must be finite")
        g = self._w @ chi0 + self._g_ref
        g[: self.m] -= 2.0 * self.config.s * u_prev
        const = (
            float(chi0 @ self._p_quad @ chi0)
            - 2.0 * float(chi0 @ self._p_ref)
            + self._ref_const
            + float(u_prev @ (self.config.s * u_prev))
        )
        return QpProblem(h=self._h, g=g, lb=self._lb, ub=self._ub, const=const)


def condense(model, config: MpcConfig, chi0: np.ndarray, u_prev: np.ndarray) -> QpProblem:
    """One-shot condensation of an MPC instance into a box QP."""
    return CondensedMpc(model.a_d, model.b_d, config).build(chi0, u_prev)


def mpc_cost_recursive(
    a_d: np.ndarray,
    b_d: np.ndarray,
    config: MpcConfig,
    chi0: np.ndarray,
    u_prev: np.ndarray,
    v: np.ndarray,
) -> float:
    """Direct recursive evaluation of the MPC objective (test oracle).

    Rolls the model forward step by step and accumulates the stage costs,
    independent of the condensed form.
    """
    m = b_d.shape[1]
    nc = config.control_horizon
    ref = config.reference if config.reference is not None else np.zeros(a_d.shape[0])
    chi = np.asarray(chi0, dtype=float).copy()
    total = 0.0
    u_last = np.asarray(u_prev, dtype=float)
    for k in range(config.prediction_horizon):
        j = min(k, nc - 1)
        u_k = np.asarray(v, dtype=float)[j * m : (j + 1) * m]
        e_k = chi - ref
        du = u_k - u_last
        total += float(e_k @ (config.q * e_k) + u_k @ (config.r * u_k) + du @ (config.s * du))
        chi = a_d @ chi + b_d @ u_k
        u_last = u_k
    return total


@dataclass
class StackedModel:
    """Block-diagonal stack of the attitude and test-mass lifted models."""

    models: Sequence[LiftedModel]

    def __post_init__(self):
        if not self.models:
            raise ValueError("need at least one model")
        dts = {m.dt for m in self.models}
        if len(dts) != 1:
            raise ValueError(f"models disagree on dt: {sorted(dts)}")
        self.dt = self.models[0].dt
        ns = [m.n_observables for m in self.models]
        ms = [m.n_inputs for m in self.models]
        self.n = sum(ns)
        self.m = sum(ms)
        self.a_d = np.zeros((self.n, self.n))
        self.b_d = np.zeros((self.n, self.m))
        self.state_offsets = np.cumsum([0] + ns)
        self.input_offsets = np.cumsum([0] + ms)
        for i, mdl in enumerate(self.models):
            so, io = self.state_offsets[i], self.input_offsets[i]
            self.a_d[so : so + ns[i], so : so + ns[i]] = mdl.a_d
            self.b_d[so : so + ns[i], io : io + ms[i]] = mdl.b_d
        # physical input channel owned by each stacked input slot
        self.input_channel_indices = np.concatenate(
            [mdl.dictionary.input_channel_indices for mdl in self.models]
        )
        if len(set(self.input_channel_indices)) != self.m:
            raise ValueError("stacked models share physical input channels")

    def lift(self, x: np.ndarray) -> np.ndarray:
        return np.concatenate([mdl.dictionary.lift(x) for mdl in self.models])

    def state_weights(self, mapping: dict[str, float]) -> np.ndarray:
        parts = []
        for mdl in self.models:
            local = {
                k: v for k, v in mapping.items() if k in mdl.dictionary.block_slices
            }
            parts.append(mdl.dictionary.block_weights(local))
        covered = set().union(*(m.dictionary.block_slices for m in self.models))
        unknown = set(mapping) - covered
        if unknown:
            raise KeyError(f"unknown state block(s): {sorted(unknown)}")
        return np.concatenate(parts)

    def input_weights(self, mapping: dict[str, float]) -> np.ndarray:
        parts = []
        for mdl in self.models:
            local = {
                k: v for k, v in mapping.items() if k in mdl.dictionary.input_block_slices
            }
            parts.append(mdl.dictionary.input_weights(local))
        covered = set().union(*(m.dictionary.input_block_slices for m in self.models))
        unknown = set(mapping) - covered
        if unknown:
            raise KeyError(f"unknown input block(s): {sorted(unknown)}")
        return np.concatenate(parts)

    def to_physical_input(self, u_bar: np.ndarray) -> np.ndarray:
        """Scatter the stacked input block into the 20-channel vector.

        Channels not driven by any model (the thruster force) stay zero.
        """
        u = np.zeros(INPUT_DIM)
        u[self.input_channel_indices] = u_bar
        return u


def default_capture_config(stacked: StackedModel, reference=None) -> MpcConfig:
    """Reference tuning of the capture controller for the stacked model."""
    bounds = stacked.input_weights(CAPTURE_INPUT_BOUNDS)
    return MpcConfig(
        q=stacked.state_weights(CAPTURE_STATE_WEIGHTS),
        r=stacked.input_weights(CAPTURE_INPUT_WEIGHTS),
        s=np.zeros(stacked.m),
        u_min=-bounds,
        u_max=bounds,
        prediction_horizon=50,
        control_horizon=1,
        reference=reference,
    )


class MpcController:
    """Receding-horizon controller over the stacked lifted models.

    Parameters
    ----------
    models : sequence of LiftedModel
        Attitude and test-mass models (any order; input channels must not
        overlap).
    config : MpcConfig, optional
        Defaults to the reference capture tuning.
    transform : callable, optional
        Input transformation ``(x, u_bar) -> u_bar`` applied to the first
        optimal block before actuation; identity when omitted.
    qp_tol : float
        KKT tolerance handed to the QP solver.
    """

    def __init__(
        self,
        models: Sequence[LiftedModel],
        config: Optional[MpcConfig] = None,
        transform: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None,
        qp_tol: float = 1e-8,
    ):
        self.stacked = StackedModel(models)
        self.config = config or default_capture_config(self.stacked)
        self.condenser = CondensedMpc(self.stacked.a_d, self.stacked.b_d, self.config)
        self.transform = transform
        self.qp_tol = qp_tol
        self.u_prev = np.zeros(self.stacked.m)
        self.fault_count = 0
        self.last_qp_cost = np.nan
        self.last_qp_iterations = 0

    def reset(self):
        self.u_prev = np.zeros(self.stacked.m)
        self.fault_count = 0

    def control_step(self, x: np.ndarray) -> np.ndarray:
        """One receding-horizon step: measure, lift, solve, actuate."""
        x = np.asarray(x, dtype=float)
        chi0 = self.stacked.lift(x)
        qp = self.condenser.build(chi0, self.u_prev)
        try:
            v, info = solve_qp(
                qp, tol=self.qp_tol, x0=np.tile(self.u_prev, self.config.control_horizon)
            )
        except QpSolverError as err:
            self.fault_count += 1
            log.warning(
                "QP failure (%s); holding previous input (fault %d)", err, self.fault_count
            )
            return self.stacked.to_physical_input(self.u_prev)
        u_bar = v[: self.stacked.m]
        if self.transform is not None:
            u_bar = np.asarray(self.transform(x, u_bar), dtype=float)
        self.u_prev = u_bar.copy()
        self.last_qp_cost = qp.objective(v)
        self.last_qp_iterations = info["iterations"]
        return self.stacked.to_physical_input(u_bar)


@dataclass
class ClosedLoopLog:
    """One row per control step plus the terminal state."""

    times: np.ndarray  # (K,)
    states: np.ndarray  # (K, 34) at the decision instants
    inputs: np.ndarray  # (K, 20)
    qp_costs: np.ndarray  # (K,)
    qp_iterations: np.ndarray  # (K,)
    final_state: np.ndarray  # (34,)
    fault_count: int = 0
    u_bounds: Optional[tuple[np.ndarray, np.ndarray]] = None
    bound_channel_indices: Optional[np.ndarray] = None

    def to_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        header = ",".join(
            ["time"] + STATE_NAMES + INPUT_NAMES + ["qp_cost", "qp_iterations"]
        )
        body = np.column_stack(
            [self.times, self.states, self.inputs, self.qp_costs, self.qp_iterations]
        )
        fmt = ["%.17e"] * (1 + 34 + 20 + 1) + ["%d"]
        np.savetxt(path, body, delimiter=",", header=header, comments="", fmt=fmt)
        return path

    def bound_violations(self, atol: float = 0.0) -> int:
        """Count of commanded samples outside the input box."""
        if self.u_bounds is None or self.bound_channel_indices is None:
            return 0
        lo, hi = self.u_bounds
        u = self.inputs[:, self.bound_channel_indices]
        return int(np.sum((u < lo - atol) | (u > hi + atol)))

    def settling_time(self, state_indices, threshold: float) -> float:
        """First time after which |x_i| stays below threshold to the end.

        Returns inf if the signal never settles within the log.
        """
        sel = np.abs(self.states[:, state_indices]).max(axis=1)
        above = np.flatnonzero(sel >= threshold)
        if above.size == 0:
            return float(self.times[0])
        if above[-1] == len(self.times) - 1:
            return float("inf")
        return float(self.times[above[-1] + 1])

    def capture_summary(
        self, position_threshold: float = 1e-6, angle_threshold: float = 1e-5
    ) -> dict:
        summary: dict = {
            "duration": float(self.times[-1] - self.times[0]) + 0.0,
            "fault_count": self.fault_count,
            "bound_violations": self.bound_violations(),
            "max_abs_input": np.abs(self.inputs).max(axis=0).tolist(),
        }
        for i in (1, 2):
            base = 10 + 12 * (i - 1)
            r_idx = list(range(base, base + 3))
            th_idx = list(range(base + 6, base + 9))
            summary[f"tm{i}_max_abs_r"] = float(np.abs(self.states[:, r_idx]).max())
            summary[f"tm{i}_r_settling_time"] = self.settling_time(
                r_idx, position_threshold
            )
            summary[f"tm{i}_theta_settling_time"] = self.settling_time(
                th_idx, angle_threshold
            )
        return summary


def run_closed_loop(
    controller: MpcController,
    x0: np.ndarray,
    duration: float,
    dt: float = 0.1,
    params: Optional[SatelliteParams] = None,
    disturbances: Optional[DisturbanceModel] = None,
    integrator: Optional[IntegratorConfig] = None,
) -> ClosedLoopLog:
    """Drive the true nonlinear plant with the lifted-model controller.

    Each control interval applies the commanded input as a zero-order hold
    and integrates the full nonlinear dynamics; the controller never sees
    its own model's prediction as a measurement.
    """
    if not duration > 0:
        raise ValueError("duration must be positive")
    params = params or SatelliteParams()
    cfg = integrator or IntegratorConfig(output_dt=dt)
    if cfg.output_dt != dt:
        cfg = IntegratorConfig(
            rel_tol=cfg.rel_tol, abs_tol=cfg.abs_tol, max_step=cfg.max_step, output_dt=dt
        )
    n_steps = int(round(duration / dt))
    times = np.arange(n_steps) * dt
    states = np.empty((n_steps, 34))
    inputs = np.empty((n_steps, INPUT_DIM))
    costs = np.empty(n_steps)
    iters = np.empty(n_steps, dtype=int)

    x = np.asarray(x0, dtype=float).copy()
    for k in range(n_steps):
        u = controller.control_step(x)
        states[k] = x
        inputs[k] = u
        costs[k] = controller.last_qp_cost
        iters[k] = controller.last_qp_iterations
        rhs = make_rhs(params, disturbances, input_func=lambda t, _u=u: _u)
        _, segment = integrate(rhs, x, (times[k], times[k] + dt), cfg)
        x = segment[-1]
    return ClosedLoopLog(
        times=times,
        states=states,
        inputs=inputs,
        qp_costs=costs,
        qp_iterations=iters,
        final_state=x,
        fault_count=controller.fault_count,
        u_bounds=(controller.config.u_min, controller.config.u_max),
        bound_channel_indices=controller.stacked.input_channel_indices,
    )
