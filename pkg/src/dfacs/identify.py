"""Sparse identification of the lifted linear models.

The regression target is the analytic time derivative of each observable,
obtained by the chain rule from (state, estimated state-derivative) pairs;
differencing the lifted trajectory itself would compound the stencil error
through the nonlinear observables.

Sequential thresholded least squares (STLS): initialize with plain least
squares, zero every coefficient below the threshold, re-solve each target
column restricted to its surviving columns, and repeat until the support is
a fixed point. Library columns are normalized to unit RMS before
thresholding (raw column magnitudes span many decades here, so a single
threshold is only meaningful in scaled space) and coefficients are mapped
back afterwards.

The continuous-time coefficient matrix is split into (A, B) and discretized
by zero-order hold through the matrix exponential of the augmented block
[[A, B], [0, 0]] * dt.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import expm
from sklearn.base import BaseEstimator, MultiOutputMixin, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .data import TrajectoryDataset
from .lifting import Dictionary

DEFAULT_THRESHOLD = 1e-13


@dataclass
class RegressionProblem:
    """Library matrix and lifted-derivative targets for one subsystem."""

    theta: np.ndarray  # (P, N+M): evaluated [Psi, Psi_u] per snapshot
    targets: np.ndarray  # (P, N): chain-rule derivatives of Psi
    threshold: float = DEFAULT_THRESHOLD
    max_iter: int = 20
    normalize_columns: bool = True
    column_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        self.targets = np.asarray(self.targets, dtype=float)
        if self.theta.ndim != 2 or self.targets.ndim != 2:
            raise ValueError("theta and targets must be 2-D")
        if self.theta.shape[0] != self.targets.shape[0]:
            raise ValueError("theta and targets must have equal row counts")
        if self.threshold < 0:
            raise ValueError("threshold must be non-negative")
        if not np.all(np.isfinite(self.theta)) or not np.all(np.isfinite(self.targets)):
            raise ValueError("non-finite entries in regression data")


def lift_dataset(
    dataset: TrajectoryDataset, dictionary: Dictionary, split: str = "train"
) -> RegressionProblem:
    """Evaluate the library and chain-rule targets on a dataset split.

    One row per interior snapshot (edges trimmed by the derivative
    stencil); total rows are the sum of (T - 4) over the trajectories.
    """
    trajectories = [tr for tr in dataset.trajectories if tr.split == split]
    if not trajectories:
        raise ValueError(f"dataset has no {split!r} trajectories")
    theta_parts, target_parts = [], []
    for tr in trajectories:
        interior = tr.interior_slice
        X = tr.states[interior]
        U = tr.inputs[interior]
        X_dot = tr.derivatives
        if X.shape[0] != X_dot.shape[0]:
            raise ValueError(f"trajectory {tr.index}: misaligned derivative rows")
        lifted = dictionary.lift_batch(X)
        lifted_u = dictionary.lift_input_batch(U, X)
        theta_parts.append(np.hstack([lifted, lifted_u]))
        target_parts.append(dictionary.lift_derivative_batch(X, X_dot))
    return RegressionProblem(
        theta=np.vstack(theta_parts),
        targets=np.vstack(target_parts),
        column_names=list(dictionary.observable_names) + list(dictionary.input_names),
    )


def _stls_core(
    theta: np.ndarray,
    targets: np.ndarray,
    threshold: float,
    max_iter: int,
    normalize_columns: bool,
) -> tuple[np.ndarray, dict]:
    """Run STLS; returns the coefficient matrix and fit diagnostics."""
    P, n_cols = theta.shape
    n_targets = targets.shape[1]
    diagnostics: dict = {"warnings": []}
    if P < n_cols:
        msg = f"underdetermined fit: {P} rows for {n_cols} columns"
        diagnostics["warnings"].append(msg)
        warnings.warn(msg, stacklevel=2)

    if normalize_columns:
        scale = np.sqrt(np.mean(theta**2, axis=0))
        scale[scale == 0.0] = 1.0
    else:
        scale = np.ones(n_cols)
    th = theta / scale

    xi, _, rank, _ = np.linalg.lstsq(th, targets, rcond=None)
    lstsq_residual = float(np.linalg.norm(targets - th @ xi))
    if rank < n_cols:
        diagnostics["warnings"].append(f"library rank {rank} < {n_cols} columns")

    support = np.abs(xi) >= threshold
    support_history = [int(support.sum())]
    rank_deficient_cols: list[int] = []
    empty_cols: list[int] = []
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        xi_new = np.zeros_like(xi)
        rank_deficient_cols = []
        empty_cols = []
        for k in range(n_targets):
            idx = support[:, k]
            n_sel = int(idx.sum())
            if n_sel == 0:
                empty_cols.append(k)
                continue
            coef, _, sub_rank, _ = np.linalg.lstsq(th[:, idx], targets[:, k], rcond=None)
            if sub_rank < n_sel:
                rank_deficient_cols.append(k)
            xi_new[idx, k] = coef
        xi = xi_new
        new_support = support & (np.abs(xi) >= threshold)
        support_history.append(int(new_support.sum()))
        if np.array_equal(new_support, support):
            break
        support = new_support

    xi = np.where(support, xi, 0.0) / scale[:, None]
    residual = float(np.linalg.norm(targets - theta @ xi))
    diagnostics.update(
        {
            "iterations": n_iter,
            "support_history": support_history,
            "nonzeros_per_target": support.sum(axis=0).tolist(),
            "residual_fro": residual,
            "lstsq_residual_fro": lstsq_residual,
            "thresholding_excess": residual - lstsq_residual,
            "rank_deficient_targets": rank_deficient_cols,
            "empty_support_targets": empty_cols,
            "column_scale": scale.tolist(),
        }
    )
    return xi, diagnostics


def stls(problem: RegressionProblem) -> np.ndarray:
    """Sparse coefficient matrix of shape (N+M, N); exact zeros off-support."""
    xi, _ = _stls_core(
        problem.theta,
        problem.targets,
        problem.threshold,
        problem.max_iter,
        problem.normalize_columns,
    )
    return xi


class StlsRegressor(MultiOutputMixin, RegressorMixin, BaseEstimator):
    """Sequentially thresholded least squares, scikit-learn style.

    Parameters
    ----------
    threshold : float
        Coefficients below this magnitude (in column-normalized space when
        ``normalize_columns``) are zeroed.
    max_iter : int
        Iteration cap for the threshold/re-solve loop.
    normalize_columns : bool
        Normalize library columns to unit RMS before thresholding.

    Attributes
    ----------
    coef_ : (n_targets, n_features) array
        Recovered coefficients in raw (unscaled) space.
    support_ : (n_targets, n_features) bool array
    n_iter_ : int
    diagnostics_ : dict
    """

    def __init__(
        self,
        threshold: float = DEFAULT_THRESHOLD,
        max_iter: int = 20,
        normalize_columns: bool = True,
    ):
        self.threshold = threshold
        self.max_iter = max_iter
        self.normalize_columns = normalize_columns

    def fit(self, X, y):
        X = check_array(X)
        y = check_array(y, ensure_2d=False)
        if y.ndim == 1:
            y = y[:, None]
        if X.shape[0] != y.shape[0]:
            raise ValueError("X and y row counts differ")
        xi, diagnostics = _stls_core(
            X, y, self.threshold, self.max_iter, self.normalize_columns
        )
        self.coef_ = xi.T
        self.support_ = self.coef_ != 0.0
        self.n_iter_ = diagnostics["iterations"]
        self.diagnostics_ = diagnostics
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self)
        X = check_array(X)
        return X @ self.coef_.T


@dataclass
class LiftedModel:
    """Continuous and zero-order-hold discrete lifted linear model."""

    xi: np.ndarray  # (N+M, N)
    a: np.ndarray  # (N, N)
    b: np.ndarray  # (N, M)
    a_d: np.ndarray  # (N, N)
    b_d: np.ndarray  # (N, M)
    dt: float
    dictionary: Dictionary
    diagnostics: dict = field(default_factory=dict)

    @property
    def n_observables(self) -> int:
        return self.a.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.b.shape[1]

    def save(self, path) -> Path:
        path = Path(path)
        if path.suffix != ".npz":
            path = path.with_name(path.name + ".npz")
        meta = {
            "dt": self.dt,
            "dictionary": self.dictionary.to_dict(),
            "diagnostics": self.diagnostics,
        }
        np.savez(
            path,
            xi=self.xi,
            a=self.a,
            b=self.b,
            a_d=self.a_d,
            b_d=self.b_d,
            meta=np.array(json.dumps(meta, sort_keys=True)),
        )
        return path

    @classmethod
    def load(cls, path) -> "LiftedModel":
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["meta"]))
            return cls(
                xi=data["xi"],
                a=data["a"],
                b=data["b"],
                a_d=data["a_d"],
                b_d=data["b_d"],
                dt=float(meta["dt"]),
                dictionary=Dictionary.from_dict(meta["dictionary"]),
                diagnostics=meta.get("diagnostics", {}),
            )


def assemble_model(
    xi: np.ndarray,
    dictionary: Dictionary,
    dt: float = 0.1,
    diagnostics: Optional[dict] = None,
) -> LiftedModel:
    """Split the coefficient matrix and discretize by zero-order hold."""
    xi = np.asarray(xi, dtype=float)
    n, m = dictionary.n_observables, dictionary.n_inputs
    if xi.shape != (n + m, n):
        raise ValueError(f"xi must have shape ({n + m}, {n}), got {xi.shape}")
    if not np.all(np.isfinite(xi)):
        raise ValueError("xi contains non-finite entries")
    a = xi[:n, :].T
    b = xi[n:, :].T
    block = np.zeros((n + m, n + m))
    block[:n, :n] = a
    block[:n, n:] = b
    exp_block = expm(block * dt)
    return LiftedModel(
        xi=xi,
        a=a,
        b=b,
        a_d=exp_block[:n, :n],
        b_d=exp_block[:n, n:],
        dt=dt,
        dictionary=dictionary,
        diagnostics=diagnostics or {},
    )


def fit_subsystem(
    dataset: TrajectoryDataset,
    dictionary: Dictionary,
    threshold: float = DEFAULT_THRESHOLD,
    max_iter: int = 20,
    normalize_columns: bool = True,
    dt: Optional[float] = None,
) -> LiftedModel:
    """Full identification of one subsystem from a dataset's training split."""
    problem = lift_dataset(dataset, dictionary)
    problem.threshold = threshold
    problem.max_iter = max_iter
    problem.normalize_columns = normalize_columns
    xi, diagnostics = _stls_core(
        problem.theta, problem.targets, threshold, max_iter, normalize_columns
    )
    if dt is None:
        times = dataset.trajectories[0].times
        dt = float(times[1] - times[0])
    return assemble_model(xi, dictionary, dt, diagnostics)


def predict(
    model: LiftedModel,
    x0: np.ndarray,
    inputs: Sequence[np.ndarray],
    steps: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Roll the discrete model forward from the lift of a physical state.

    ``inputs`` are physical 20-channel vectors, one per step; returns the
    lifted trajectory (steps+1, N) and its raw-state extraction.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    inputs = np.asarray(inputs, dtype=float)
    if inputs.shape[0] < steps:
        raise ValueError("need one input per step")
    chi = np.empty((steps + 1, model.n_observables))
    chi[0] = model.dictionary.lift(np.asarray(x0, dtype=float))
    bu = model.dictionary.lift_input_batch(inputs[:steps]) @ model.b_d.T
    for k in range(steps):
        chi[k + 1] = model.a_d @ chi[k] + bu[k]
    return chi, model.dictionary.unlift(chi)


def prediction_error(
    true_traj: np.ndarray, predicted_traj: np.ndarray, components: Optional[slice] = None
) -> np.ndarray:
    """Per-sample mean absolute error over a component block.

    Both trajectories must share shape (T, k); ``components`` selects the
    block (all columns by default).
    """
    true_traj = np.atleast_2d(np.asarray(true_traj, dtype=float))
    predicted_traj = np.atleast_2d(np.asarray(predicted_traj, dtype=float))
    if true_traj.shape != predicted_traj.shape:
        raise ValueError(
            f"trajectory grids differ: {true_traj.shape} vs {predicted_traj.shape}"
        )
    if components is not None:
        true_traj = true_traj[:, components]
        predicted_traj = predicted_traj[:, components]
    return np.mean(np.abs(true_traj - predicted_traj), axis=1)


def block_prediction_errors(model: LiftedModel, trajectory) -> dict[str, np.ndarray]:
    """Eq-39-style error series per raw-state block along one trajectory.

    The model is rolled forward from the trajectory's first sample using
    the recorded inputs; errors compare the lifted model's raw-state
    extraction against the recorded states, block by block.
    """
    steps = len(trajectory.times) - 1
    _, physical = predict(model, trajectory.states[0], trajectory.inputs, steps)
    true_linear = trajectory.states[:, model.dictionary.linear_state_indices]
    errors = {}
    offset = 0
    for blk in model.dictionary.state_blocks:
        if blk.kind != "state":
            continue
        sel = slice(offset, offset + blk.size)
        errors[blk.name] = prediction_error(true_linear[:, sel], physical[:, sel])
        offset += blk.size
    return errors
