"""Lifting dictionaries mapping physical states into the linear model space.

Two fixed dictionaries cover the two control loops:

* attitude: satellite attitude + MOSA hinge states, their quadratic
  cross/self products, driven by thruster and MOSA torques (27 state
  observables, 5 input channels);
* test_mass: both TMs' relative pose and rates plus quadratic products,
  driven by the electrostatic forces/torques (84 state observables, 12
  input channels).

No dictionary contains a constant observable, so the lift of the origin is
exactly zero and a capture-to-origin reference stays exact in lifted
coordinates. Every observable is named and order-stable; raw-state
("linear") entries can be inverted back to the physical sub-state.

Observables are plain monomials, so time derivatives are available in
closed form from (state, state-derivative) pairs via the chain rule; the
identification stage uses those instead of differencing lifted
trajectories.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .states import INPUT_DIM, INPUT_NAMES, STATE_DIM, STATE_NAMES


def phi2(v: np.ndarray) -> np.ndarray:
    """Degree-exactly-2 monomials v_i*v_j with i <= j, lexicographic.

    Length n(n+1)/2; no linear or constant part.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size < 1:
        raise ValueError("phi2 expects a non-empty vector")
    i_idx, j_idx = np.triu_indices(v.size)
    return v[i_idx] * v[j_idx]


def kron_vec(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product of two vectors: element i*len(b)+j is a_i*b_j."""
    return np.kron(np.asarray(a, dtype=float), np.asarray(b, dtype=float))


@dataclass(frozen=True)
class StateBlock:
    """Identity observables of selected raw state components."""

    name: str
    indices: tuple[int, ...]

    kind = "state"

    @property
    def size(self) -> int:
        return len(self.indices)

    @property
    def names(self) -> list[str]:
        return [STATE_NAMES[i] for i in self.indices]

    def eval(self, x):
        return x[list(self.indices)]

    def eval_batch(self, X):
        return X[:, list(self.indices)]

    def deriv(self, x, x_dot):
        return x_dot[list(self.indices)]

    def deriv_batch(self, X, X_dot):
        return X_dot[:, list(self.indices)]


@dataclass(frozen=True)
class KronBlock:
    """Kronecker product of two raw state sub-vectors."""

    name: str
    indices_a: tuple[int, ...]
    indices_b: tuple[int, ...]

    kind = "kron"

    @property
    def size(self) -> int:
        return len(self.indices_a) * len(self.indices_b)

    @property
    def names(self) -> list[str]:
        return [
            f"{STATE_NAMES[i]}*{STATE_NAMES[j]}"
            for i in self.indices_a
            for j in self.indices_b
        ]

    def eval(self, x):
        return np.kron(x[list(self.indices_a)], x[list(self.indices_b)])

    def eval_batch(self, X):
        a = X[:, list(self.indices_a)]
        b = X[:, list(self.indices_b)]
        return (a[:, :, None] * b[:, None, :]).reshape(X.shape[0], -1)

    def deriv(self, x, x_dot):
        a, b = x[list(self.indices_a)], x[list(self.indices_b)]
        ad, bd = x_dot[list(self.indices_a)], x_dot[list(self.indices_b)]
        return np.kron(ad, b) + np.kron(a, bd)

    def deriv_batch(self, X, X_dot):
        a = X[:, list(self.indices_a)]
        b = X[:, list(self.indices_b)]
        ad = X_dot[:, list(self.indices_a)]
        bd = X_dot[:, list(self.indices_b)]
        out = ad[:, :, None] * b[:, None, :] + a[:, :, None] * bd[:, None, :]
        return out.reshape(X.shape[0], -1)


@dataclass(frozen=True)
class Phi2Block:
    """Degree-2 monomials of a raw state sub-vector."""

    name: str
    indices: tuple[int, ...]

    kind = "phi2"

    def _pairs(self):
        idx = np.asarray(self.indices)
        i_idx, j_idx = np.triu_indices(idx.size)
        return idx[i_idx], idx[j_idx]

    @property
    def size(self) -> int:
        n = len(self.indices)
        return n * (n + 1) // 2

    @property
    def names(self) -> list[str]:
        i_idx, j_idx = self._pairs()
        return [f"{STATE_NAMES[i]}*{STATE_NAMES[j]}" for i, j in zip(i_idx, j_idx)]

    def eval(self, x):
        i_idx, j_idx = self._pairs()
        return x[i_idx] * x[j_idx]

    def eval_batch(self, X):
        i_idx, j_idx = self._pairs()
        return X[:, i_idx] * X[:, j_idx]

    def deriv(self, x, x_dot):
        i_idx, j_idx = self._pairs()
        return x_dot[i_idx] * x[j_idx] + x[i_idx] * x_dot[j_idx]

    def deriv_batch(self, X, X_dot):
        i_idx, j_idx = self._pairs()
        return X_dot[:, i_idx] * X[:, j_idx] + X[:, i_idx] * X_dot[:, j_idx]


@dataclass(frozen=True)
class InputBlock:
    """Identity pass-through of selected input channels."""

    name: str
    indices: tuple[int, ...]

    kind = "input"

    @property
    def size(self) -> int:
        return len(self.indices)

    @property
    def names(self) -> list[str]:
        return [INPUT_NAMES[i] for i in self.indices]

    def eval(self, x, u):
        return u[list(self.indices)]

    def eval_batch(self, X, U):
        return U[:, list(self.indices)]


_BLOCK_KINDS = {"state": StateBlock, "kron": KronBlock, "phi2": Phi2Block}


class Dictionary:
    """An ordered, named set of state observables and input channels."""

    def __init__(self, name: str, state_blocks: list, input_blocks: list[InputBlock]):
        if not state_blocks or not input_blocks:
            raise ValueError("dictionary needs state and input observables")
        self.name = name
        self.state_blocks = list(state_blocks)
        self.input_blocks = list(input_blocks)
        self.observable_names: list[str] = []
        self.block_slices: dict[str, slice] = {}
        seen = set()
        pos = 0
        for blk in self.state_blocks:
            if blk.name in seen:
                raise ValueError(f"duplicate block name {blk.name}")
            seen.add(blk.name)
            self.block_slices[blk.name] = slice(pos, pos + blk.size)
            self.observable_names.extend(blk.names)
            pos += blk.size
        self.n_observables = pos
        self.input_names: list[str] = []
        self.input_block_slices: dict[str, slice] = {}
        pos = 0
        for blk in self.input_blocks:
            if blk.name in seen:
                raise ValueError(f"duplicate block name {blk.name}")
            seen.add(blk.name)
            self.input_block_slices[blk.name] = slice(pos, pos + blk.size)
            self.input_names.extend(blk.names)
            pos += blk.size
        self.n_inputs = pos
        if len(set(self.observable_names)) != len(self.observable_names):
            raise ValueError("observable names must be unique")
        # raw-state entries: lifted index -> physical state index
        self.linear_indices = np.array(
            [
                self.block_slices[blk.name].start + k
                for blk in self.state_blocks
                if blk.kind == "state"
                for k in range(blk.size)
            ],
            dtype=int,
        )
        self.linear_state_indices = np.array(
            [i for blk in self.state_blocks if blk.kind == "state" for i in blk.indices],
            dtype=int,
        )
        # physical input channels addressed by this dictionary, in order
        self.input_channel_indices = np.array(
            [i for blk in self.input_blocks for i in blk.indices], dtype=int
        )

    def lift(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.concatenate([blk.eval(x) for blk in self.state_blocks])

    def lift_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return np.hstack([blk.eval_batch(X) for blk in self.state_blocks])

    def lift_derivative(self, x: np.ndarray, x_dot: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        x_dot = np.asarray(x_dot, dtype=float)
        return np.concatenate([blk.deriv(x, x_dot) for blk in self.state_blocks])

    def lift_derivative_batch(self, X: np.ndarray, X_dot: np.ndarray) -> np.ndarray:
        return np.hstack(
            [blk.deriv_batch(np.asarray(X, float), np.asarray(X_dot, float)) for blk in self.state_blocks]
        )

    def lift_input(self, u: np.ndarray, x: Optional[np.ndarray] = None) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return np.concatenate([blk.eval(x, u) for blk in self.input_blocks])

    def lift_input_batch(self, U: np.ndarray, X: Optional[np.ndarray] = None) -> np.ndarray:
        U = np.asarray(U, dtype=float)
        return np.hstack([blk.eval_batch(X, U) for blk in self.input_blocks])

    def unlift(self, chi: np.ndarray) -> np.ndarray:
        """Extract the raw-state entries of a lifted vector (or batch).

        Returns the physical components in lifted order; their state-vector
        indices are ``linear_state_indices``.
        """
        chi = np.asarray(chi, dtype=float)
        return chi[..., self.linear_indices]

    def block_weights(self, mapping: dict[str, float]) -> np.ndarray:
        """Per-observable weight vector from per-block values; unnamed -> 0."""
        unknown = set(mapping) - set(self.block_slices)
        if unknown:
            raise KeyError(f"unknown state block(s): {sorted(unknown)}")
        w = np.zeros(self.n_observables)
        for name, value in mapping.items():
            w[self.block_slices[name]] = value
        return w

    def input_weights(self, mapping: dict[str, float]) -> np.ndarray:
        unknown = set(mapping) - set(self.input_block_slices)
        if unknown:
            raise KeyError(f"unknown input block(s): {sorted(unknown)}")
        w = np.zeros(self.n_inputs)
        for name, value in mapping.items():
            w[self.input_block_slices[name]] = value
        return w

    def to_dict(self) -> dict:
        def encode(blk):
            out = {"kind": blk.kind, "name": blk.name}
            if blk.kind == "kron":
                out["indices_a"] = list(blk.indices_a)
                out["indices_b"] = list(blk.indices_b)
            else:
                out["indices"] = list(blk.indices)
            return out

        return {
            "name": self.name,
            "state_blocks": [encode(b) for b in self.state_blocks],
            "input_blocks": [encode(b) for b in self.input_blocks],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Dictionary":
        state_blocks = []
        for spec in data["state_blocks"]:
            kind = _BLOCK_KINDS[spec["kind"]]
            if spec["kind"] == "kron":
                state_blocks.append(
                    kind(spec["name"], tuple(spec["indices_a"]), tuple(spec["indices_b"]))
                )
            else:
                state_blocks.append(kind(spec["name"], tuple(spec["indices"])))
        input_blocks = [
            InputBlock(spec["name"], tuple(spec["indices"])) for spec in data["input_blocks"]
        ]
        return cls(data["name"], state_blocks, input_blocks)


def attitude_dictionary() -> Dictionary:
    """Satellite-attitude subsystem lift (27 observables, 5 inputs)."""
    return Dictionary(
        name="attitude",
        state_blocks=[
            StateBlock("theta_SI", (0, 1, 2)),
            StateBlock("zeta", (6, 7)),
            StateBlock("omega_SI", (3, 4, 5)),
            StateBlock("zeta_dot", (8, 9)),
            KronBlock("theta_SI_x_omega_SI", (0, 1, 2), (3, 4, 5)),
            Phi2Block("phi2_omega_SI", (3, 4, 5)),
            Phi2Block("zeta_dot_1_sq", (8,)),
            Phi2Block("zeta_dot_2_sq", (9,)),
        ],
        input_blocks=[
            InputBlock("M_T", (0, 1, 2)),
            InputBlock("M_MOSA", (18, 19)),
        ],
    )


def test_mass_dictionary() -> Dictionary:
    """Test-mass subsystem lift (84 observables, 12 inputs)."""
    return Dictionary(
        name="test_mass",
        state_blocks=[
            StateBlock("r_MO_1", (10, 11, 12)),
            StateBlock("theta_MO_1", (16, 17, 18)),
            StateBlock("r_MO_2", (22, 23, 24)),
            StateBlock("theta_MO_2", (28, 29, 30)),
            StateBlock("r_dot_MO_1", (13, 14, 15)),
            StateBlock("omega_MO_1", (19, 20, 21)),
            StateBlock("r_dot_MO_2", (25, 26, 27)),
            StateBlock("omega_MO_2", (31, 32, 33)),
            KronBlock("r_x_r_dot_1", (10, 11, 12), (13, 14, 15)),
            KronBlock("theta_x_omega_1", (16, 17, 18), (19, 20, 21)),
            KronBlock("r_x_r_dot_2", (22, 23, 24), (25, 26, 27)),
            KronBlock("theta_x_omega_2", (28, 29, 30), (31, 32, 33)),
            Phi2Block("phi2_r_dot_1", (13, 14, 15)),
            Phi2Block("phi2_omega_1", (19, 20, 21)),
            Phi2Block("phi2_r_dot_2", (25, 26, 27)),
            Phi2Block("phi2_omega_2", (31, 32, 33)),
        ],
        input_blocks=[
            InputBlock("F_E_1", (6, 7, 8)),
            InputBlock("M_E_1", (9, 10, 11)),
            InputBlock("F_E_2", (12, 13, 14)),
            InputBlock("M_E_2", (15, 16, 17)),
        ],
    )


SUBSYSTEMS = {"attitude": attitude_dictionary, "test_mass": test_mass_dictionary}


def lift_inputs(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Input observables of both subsystems for one actuation vector."""
    return (
        attitude_dictionary().lift_input(u),
        test_mass_dictionary().lift_input(u),
    )


def make_dictionary(subsystem: str) -> Dictionary:
    try:
        return SUBSYSTEMS[subsystem]()
    except KeyError:
        raise ValueError(f"unknown subsystem {subsystem!r}; options: {sorted(SUBSYSTEMS)}")


class KoopmanLifter(TransformerMixin, BaseEstimator):
    """Stateless lifting transformer with the scikit-learn interface.

    Parameters
    ----------
    subsystem : str
        Either "attitude" or "test_mass".
    """

    def __init__(self, subsystem: str = "attitude"):
        self.subsystem = subsystem

    def fit(self, X, y=None):
        X = check_array(X)
        if X.shape[1] != STATE_DIM:
            raise ValueError(f"expected {STATE_DIM} state columns, got {X.shape[1]}")
        self.dictionary_ = make_dictionary(self.subsystem)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self)
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError("feature count changed between fit and transform")
        return self.dictionary_.lift_batch(X)

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self)
        return np.asarray(self.dictionary_.observable_names, dtype=object)
