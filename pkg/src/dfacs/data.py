"""Training-data generation for the lifted-model identification.

Each trajectory starts from a random micro-scale initial condition, is
driven by per-channel sinusoidal excitation, integrated with the adaptive
Runge-Kutta pair, and sampled on a fixed grid. State derivatives are then
estimated with the 5-point (4th-order) central-difference stencil, trimming
two samples at each end so every derivative row uses the full stencil.

Randomness is reproducible and schedule-independent: trajectory i draws
from the dedicated stream (master_seed, 0, i) regardless of generation
order, and the train/validation shuffle uses (master_seed, 1).
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .dynamics import DisturbanceModel, SatelliteParams, make_rhs
from .integrators import IntegrationError, IntegratorConfig, integrate
from .states import INPUT_DIM, INPUT_NAMES, STATE_DIM, STATE_NAMES

# Peak excitation amplitude per input channel, in block order
# [M_T, F_T, F_E_1, M_E_1, F_E_2, M_E_2, M_MOSA].
DEFAULT_EXCITATION_AMPLITUDE = np.concatenate(
    [
        np.full(3, 1e-7),
        np.full(3, 2e-5),
        np.full(3, 1e-7),
        np.full(3, 3e-9),
        np.full(3, 1e-7),
        np.full(3, 3e-9),
        np.full(2, 1e-9),
    ]
)

# Uniform half-widths of the random initial condition, per state block.
INITIAL_STATE_BOUNDS = {
    "theta_SI": 1e-8,
    "omega_SI": 1e-8,
    "zeta": 1e-8,
    "zeta_dot": 1e-10,
    "r_MO": 1e-7,
    "r_dot_MO": 1e-8,
    "theta_MO": 1e-5,
    "omega_MO": 1e-7,
}


@dataclass
class ExcitationSpec:
    """Per-channel sinusoid u_i(t) = amplitude_i * a_i * sin(b_i t + c_i)."""

    amplitude: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        for name in ("amplitude", "a", "b", "c"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (INPUT_DIM,):
                raise ValueError(f"{name} must have shape ({INPUT_DIM},)")
            setattr(self, name, arr)
        if np.any(np.abs(self.a) > 1.0):
            raise ValueError("a components must lie in [-1, 1]")
        if np.any((self.b < 0) | (self.b > 5.0)):
            raise ValueError("b components must lie in [0, 5]")
        if np.any((self.c < 0) | (self.c > 2 * np.pi)):
            raise ValueError("c components must lie in [0, 2*pi]")

    @classmethod
    def sample(cls, rng: np.random.Generator, amplitude=None) -> "ExcitationSpec":
        amp = DEFAULT_EXCITATION_AMPLITUDE if amplitude is None else np.asarray(amplitude)
        return cls(
            amplitude=amp.copy(),
            a=rng.uniform(-1.0, 1.0, INPUT_DIM),
            b=rng.uniform(0.0, 5.0, INPUT_DIM),
            c=rng.uniform(0.0, 2.0 * np.pi, INPUT_DIM),
        )

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        phase = np.multiply.outer(t, self.b) + self.c
        return self.amplitude * self.a * np.sin(phase)


def excitation(spec: ExcitationSpec, t) -> np.ndarray:
    """Evaluate the sinusoidal excitation; scalar t gives a 20-vector."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("time must be non-negative")
    return spec(t)


def sample_initial_state(rng: np.random.Generator) -> np.ndarray:
    """Draw a random initial plant state, uniform per block.

    Draw order is fixed (satellite attitude blocks, MOSA blocks, then the
    per-TM blocks) so a given stream always produces the same state.
    """
    x = np.empty(STATE_DIM)
    x[0:3] = rng.uniform(-1.0, 1.0, 3) * INITIAL_STATE_BOUNDS["theta_SI"]
    x[3:6] = rng.uniform(-1.0, 1.0, 3) * INITIAL_STATE_BOUNDS["omega_SI"]
    x[6:8] = rng.uniform(-1.0, 1.0, 2) * INITIAL_STATE_BOUNDS["zeta"]
    x[8:10] = rng.uniform(-1.0, 1.0, 2) * INITIAL_STATE_BOUNDS["zeta_dot"]
    for i in range(2):
        base = 10 + 12 * i
        x[base : base + 3] = rng.uniform(-1.0, 1.0, 3) * INITIAL_STATE_BOUNDS["r_MO"]
        x[base + 3 : base + 6] = rng.uniform(-1.0, 1.0, 3) * INITIAL_STATE_BOUNDS["r_dot_MO"]
        x[base + 6 : base + 9] = rng.uniform(-1.0, 1.0, 3) * INITIAL_STATE_BOUNDS["theta_MO"]
        x[base + 9 : base + 12] = rng.uniform(-1.0, 1.0, 3) * INITIAL_STATE_BOUNDS["omega_MO"]
    return x


def central_difference_4(samples: np.ndarray, dt: float) -> np.ndarray:
    """4th-order central differences on a uniform grid.

    Row k of the result estimates the derivative at interior sample k+2:
    (-f[k+4] + 8 f[k+3] - 8 f[k+1] + f[k]) / (12 dt). Exact for cubics.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        samples = samples[:, None]
    T = samples.shape[0]
    if T < 5:
        raise ValueError("need at least 5 samples for the 5-point stencil")
    if not dt > 0:
        raise ValueError("dt must be positive")
    # grouped as differences so constants give exact zeros
    return (
        (samples[:-4] - samples[4:]) + 8.0 * (samples[3:-1] - samples[1:-3])
    ) / (12.0 * dt)


@dataclass
class Trajectory:
    index: int
    times: np.ndarray
    states: np.ndarray  # (T, 34)
    inputs: np.ndarray  # (T, 20)
    derivatives: np.ndarray  # (T-4, 34), aligned to times[2:-2]
    split: str = "train"

    @property
    def interior_slice(self) -> slice:
        return slice(2, len(self.times) - 2)


@dataclass
class TrajectoryDataset:
    """A set of identification trajectories plus generation metadata."""

    trajectories: list[Trajectory]
    master_seed: int
    config_echo: dict = field(default_factory=dict)

    @property
    def train(self) -> list[Trajectory]:
        return [tr for tr in self.trajectories if tr.split == "train"]

    @property
    def validation(self) -> list[Trajectory]:
        return [tr for tr in self.trajectories if tr.split == "validation"]

    def content_hash(self) -> str:
        digest = hashlib.sha256()
        for tr in self.trajectories:
            for arr in (tr.times, tr.states, tr.inputs, tr.derivatives):
                digest.update(np.ascontiguousarray(arr).tobytes())
        return digest.hexdigest()

    def save(self, directory) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        entries = []
        for tr in self.trajectories:
            fname = f"traj_{tr.index:04d}.npz"
            np.savez(
                directory / fname,
                times=tr.times,
                states=tr.states,
                inputs=tr.inputs,
                derivatives=tr.derivatives,
            )
            entries.append({"index": tr.index, "file": fname, "split": tr.split})
        manifest = {
            "master_seed": self.master_seed,
            "n_trajectories": len(self.trajectories),
            "config_echo": self.config_echo,
            "content_hash": self.content_hash(),
            "trajectories": entries,
        }
        with open(directory / "manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
        return directory / "manifest.json"

    @classmethod
    def load(cls, directory) -> "TrajectoryDataset":
        directory = Path(directory)
        with open(directory / "manifest.json") as fh:
            manifest = json.load(fh)
        trajectories = []
        for entry in manifest["trajectories"]:
            with np.load(directory / entry["file"]) as data:
                trajectories.append(
                    Trajectory(
                        index=entry["index"],
                        times=data["times"],
                        states=data["states"],
                        inputs=data["inputs"],
                        derivatives=data["derivatives"],
                        split=entry["split"],
                    )
                )
        ds = cls(
            trajectories=trajectories,
            master_seed=manifest["master_seed"],
            config_echo=manifest.get("config_echo", {}),
        )
        if ds.content_hash() != manifest["content_hash"]:
            raise ValueError("dataset content hash mismatch; files corrupted?")
        return ds

    def to_csv(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        header = ",".join(["time"] + STATE_NAMES + INPUT_NAMES)
        deriv_header = ",".join(["time"] + [f"d_{n}" for n in STATE_NAMES])
        for tr in self.trajectories:
            body = np.column_stack([tr.times, tr.states, tr.inputs])
            np.savetxt(
                directory / f"traj_{tr.index:04d}.csv",
                body,
                delimiter=",",
                header=header,
                comments="",
                fmt="%.17e",
            )
            deriv_body = np.column_stack([tr.times[tr.interior_slice], tr.derivatives])
            np.savetxt(
                directory / f"traj_{tr.index:04d}_derivatives.csv",
                deriv_body,
                delimiter=",",
                header=deriv_header,
                comments="",
                fmt="%.17e",
            )


def simulate_trajectory(
    index: int,
    master_seed: int,
    params: SatelliteParams,
    duration: float,
    dt: float,
    integrator: Optional[IntegratorConfig] = None,
    disturbances: Optional[DisturbanceModel] = None,
    amplitude=None,
) -> Trajectory:
    """Simulate one excited trajectory and attach derivative estimates."""
    rng = np.random.default_rng([master_seed, 0, index])
    x0 = sample_initial_state(rng)
    spec = ExcitationSpec.sample(rng, amplitude=amplitude)
    cfg = integrator or IntegratorConfig()
    if cfg.output_dt != dt:
        cfg = IntegratorConfig(
            rel_tol=cfg.rel_tol, abs_tol=cfg.abs_tol, max_step=cfg.max_step, output_dt=dt
        )
    rhs = make_rhs(params, disturbances, input_func=spec)
    try:
        times, states = integrate(rhs, x0, (0.0, duration), cfg)
    except IntegrationError as err:
        raise IntegrationError(
            f"trajectory {index} failed at t={err.last_valid_time:.6g}",
            err.last_valid_time,
            err.last_state,
        ) from err
    inputs = spec(times)
    derivatives = central_difference_4(states, dt)
    return Trajectory(
        index=index,
        times=times,
        states=states,
        inputs=inputs,
        derivatives=derivatives,
    )


def _simulate_for_pool(args) -> Trajectory:
    index, master_seed, params_dict, duration, dt, integ_dict = args
    return simulate_trajectory(
        index,
        master_seed,
        SatelliteParams.from_dict(params_dict),
        duration,
        dt,
        IntegratorConfig(**integ_dict),
    )


def assign_splits(n_traj: int, master_seed: int, train_fraction: float = 0.75) -> list[str]:
    """Seeded shuffle split: 75% train / 25% validation by default."""
    n_train = int(round(train_fraction * n_traj))
    order = np.random.default_rng([master_seed, 1]).permutation(n_traj)
    tags = [""] * n_traj
    for pos, idx in enumerate(order):
        tags[idx] = "train" if pos < n_train else "validation"
    return tags


def generate_dataset(
    params: Optional[SatelliteParams] = None,
    n_traj: int = 200,
    duration: float = 50.0,
    dt: float = 0.1,
    seed: int = 0,
    integrator: Optional[IntegratorConfig] = None,
    train_fraction: float = 0.75,
    workers: int = 1,
    config_echo: Optional[dict] = None,
) -> TrajectoryDataset:
    """Generate the identification dataset.

    The default protocol is 200 trajectories of 50 s sampled at 0.1 s with
    a 150/50 train/validation split.
    """
    params = params or SatelliteParams()
    cfg = integrator or IntegratorConfig(output_dt=dt)
    tags = assign_splits(n_traj, seed, train_fraction)
    if workers > 1:
        jobs = [
            (i, seed, params.to_dict(), duration, dt, cfg.to_dict()) for i in range(n_traj)
        ]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            trajectories = list(pool.map(_simulate_for_pool, jobs))
    else:
        trajectories = [
            simulate_trajectory(i, seed, params, duration, dt, cfg) for i in range(n_traj)
        ]
    for tr, tag in zip(trajectories, tags):
        tr.split = tag
    echo = dict(config_echo or {})
    echo.setdefault("n_trajectories", n_traj)
    echo.setdefault("duration", duration)
    echo.setdefault("dt", dt)
    echo.setdefault("train_fraction", train_fraction)
    return TrajectoryDataset(trajectories=trajectories, master_seed=seed, config_echo=echo)
