"""Pulse-level emulation of a globally driven neutral-atom register.

Units: µs, µm, rad/µs, with hbar = 1. The Hamiltonian is

    H(t) = sum_i Omega_i(t) X_i - sum_i Delta_i(t) n_i + sum_{i<j} U_ij n_i n_j

with ``U_ij = c6 / r_ij**6``.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Mapping

import numpy as np
from scipy.interpolate import PchipInterpolator

from . import _kernels
from .embedding import Register
from .seeding import spawn

C6_DEFAULT = 5_420_503.0  # rad µm^6 / µs
OMEGA_MAX = 12.6
DELTA_MAX = 25.0
DURATION_MIN = 0.5
DURATION_MAX = 4.0
DT_DEFAULT = 1e-3
MAX_ATOMS = 16

K_EFF = 8.7  # rad/µm, effective wave number of the Doppler-sensitive transition
K_B = 1.380649e-23
M_RB87 = 86.909180527 * 1.66053906660e-27

N_PARAMS = 9
PARAM_NAMES = (
    "omega_1",
    "omega_2",
    "omega_3",
    "delta_1",
    "delta_2",
    "delta_3",
    "delta_4",
    "delta_5",
    "duration",
)
PARAM_BOUNDS = (
    ((0.0, OMEGA_MAX),) * 3 + ((-DELTA_MAX, DELTA_MAX),) * 5 + ((DURATION_MIN, DURATION_MAX),)
)


class EmulationError(RuntimeError):
    pass


def _knot_times(n_points: int, duration: float) -> np.ndarray:
    return np.linspace(0.0, duration, n_points)


def waveform_value(points, duration: float, t):
    """Monotone piecewise-cubic Hermite interpolation through equally spaced values.

    ``points`` are the waveform values at ``linspace(0, duration, len(points))``.
    """
    pts = np.asarray(points, dtype=float)
    tt = np.asarray(t, dtype=float)
    if np.any(tt < -1e-12) or np.any(tt > duration + 1e-12):
        raise ValueError(f"t outside [0, {duration}]")
    if pts.size == 1:
        return np.full_like(tt, pts[0]) if tt.ndim else float(pts[0])
    interp = PchipInterpolator(_knot_times(pts.size, duration), pts)
    out = interp(np.clip(tt, 0.0, duration))
    return out if tt.ndim else float(out)


@dataclass(frozen=True)
class Pulse:
    """Omega through ``(0, *omega, 0)`` and Delta through ``delta``, both on equally spaced knots."""

    omega: tuple[float, float, float]
    delta: tuple[float, float, float, float, float]
    duration: float

    def __post_init__(self):
        object.__setattr__(self, "omega", tuple(float(v) for v in self.omega))
        object.__setattr__(self, "delta", tuple(float(v) for v in self.delta))
        object.__setattr__(self, "duration", float(self.duration))
        if len(self.omega) != 3 or len(self.delta) != 5:
            raise ValueError("a pulse has 3 interior Omega values and 5 Delta values")

    @property
    def omega_points(self) -> tuple[float, ...]:
        return (0.0, *self.omega, 0.0)

    @cached_property
    def _omega_interp(self):
        return PchipInterpolator(_knot_times(5, self.duration), self.omega_points)

    @cached_property
    def _delta_interp(self):
        return PchipInterpolator(_knot_times(5, self.duration), self.delta)

    def omega_at(self, t):
        return self._omega_interp(np.clip(t, 0.0, self.duration))

    def delta_at(self, t):
        return self._delta_interp(np.clip(t, 0.0, self.duration))

    def is_valid(self, tol: float = 1e-12) -> bool:
        return all(lo - tol <= v <= hi + tol for v, (lo, hi) in zip(self.to_vector(), PARAM_BOUNDS))

    def to_vector(self) -> np.ndarray:
        return np.array([*self.omega, *self.delta, self.duration])

    @classmethod
    def from_vector(cls, v) -> "Pulse":
        v = np.asarray(v, dtype=float)
        return cls(tuple(v[0:3]), tuple(v[3:8]), float(v[8]))

    @classmethod
    def clamped(cls, v) -> "Pulse":
        v = np.asarray(v, dtype=float)
        lo = np.array([b[0] for b in PARAM_BOUNDS])
        hi = np.array([b[1] for b in PARAM_BOUNDS])
        return cls.from_vector(np.clip(np.nan_to_num(v, nan=0.0), lo, hi))

    def to_dict(self) -> dict:
        return {
            "omega_rad_per_us": list(self.omega),
            "delta_rad_per_us": list(self.delta),
            "duration_us": self.duration,
        }

    @classmethod
    def from_dict(cls, data) -> "Pulse":
        return cls(tuple(data["omega_rad_per_us"]), tuple(data["delta_rad_per_us"]), data["duration_us"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "Pulse":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class ConstantDrive:
    """Constant Omega and Delta; not bound by the pulse parameterisation."""

    omega: float
    delta: float
    duration: float

    def omega_at(self, t):
        return np.full(np.shape(t), float(self.omega))

    def delta_at(self, t):
        return np.full(np.shape(t), float(self.delta))


@dataclass(frozen=True)
class NoiseParams:
    eta: float = 0.0
    epsilon: float = 0.0
    epsilon_prime: float = 0.0
    temperature: float = 0.0  # µK
    laser_waist: float = math.inf  # µm
    enabled: bool = False

    def __post_init__(self):
        for name in ("eta", "epsilon", "epsilon_prime"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be a probability")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")
        if self.laser_waist <= 0:
            raise ValueError("laser waist must be positive")

    @property
    def doppler_sigma(self) -> float:
        """Standard deviation of the per-atom detuning shift in rad/µs."""
        velocity = math.sqrt(K_B * self.temperature * 1e-6 / M_RB87)  # m/s == µm/µs
        return K_EFF * velocity

    def halved_spam(self) -> "NoiseParams":
        return replace(self, eta=self.eta / 2, epsilon=self.epsilon / 2, epsilon_prime=self.epsilon_prime / 2)

    def to_dict(self) -> dict:
        return {
            "eta": self.eta,
            "epsilon": self.epsilon,
            "epsilon_prime": self.epsilon_prime,
            "temperature_uK": self.temperature,
            "laser_waist_um": self.laser_waist,
            "enabled": self.enabled,
        }


NOISE_OFF = NoiseParams()
NOISE_PLUS = NoiseParams(eta=0.005, epsilon=0.03, epsilon_prime=0.08, temperature=30.0, laser_waist=148.0, enabled=True)
NOISE_MINUS = NOISE_PLUS.halved_spam()
NOISE_PRESETS = {"off": NOISE_OFF, "plus": NOISE_PLUS, "minus": NOISE_MINUS}


def noise_preset(name: str | NoiseParams | None) -> NoiseParams:
    if name is None:
        return NOISE_OFF
    if isinstance(name, NoiseParams):
        return name
    try:
        return NOISE_PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown noise preset {name!r}; choose from {sorted(NOISE_PRESETS)}") from None


@dataclass(frozen=True)
class Realization:
    """Static imperfections of one noisy run."""

    bad_atoms: frozenset[int] = frozenset()
    detuning_offsets: np.ndarray | None = None  # rad/µs, one per atom
    amplitude_factors: np.ndarray | None = None  # dimensionless, one per atom


def draw_realization(reg: Register, noise: NoiseParams, seed=None) -> Realization:
    if not noise.enabled:
        return Realization()
    rng = np.random.default_rng(seed)
    n = len(reg)
    bad = frozenset(np.flatnonzero(rng.random(n) < noise.eta).tolist())
    offsets = rng.normal(0.0, noise.doppler_sigma, size=n) if noise.temperature > 0 else np.zeros(n)
    r2 = ((reg.positions - reg.centroid) ** 2).sum(axis=1)
    factors = np.exp(-r2 / noise.laser_waist**2) if math.isfinite(noise.laser_waist) else np.ones(n)
    return Realization(bad, offsets, factors)


def interactions(reg: Register, c6: float = C6_DEFAULT) -> np.ndarray:
    """Pairwise van der Waals couplings ``c6 / r**6`` with a zero diagonal."""
    d = reg.distances()
    n = len(reg)
    off = ~np.eye(n, dtype=bool)
    if n > 1 and np.any(d[off] <= 0):
        raise EmulationError("coincident atoms in register")
    u = np.zeros((n, n))
    u[off] = c6 / d[off] ** 6
    return u


def blockade_radius(omega: float, c6: float = C6_DEFAULT) -> float:
    return (c6 / omega) ** (1.0 / 6.0)


@dataclass
class QuantumState:
    """State vector over ``2**n_atoms`` basis states; bit ``i`` of the index is atom ``i``."""

    amplitudes: np.ndarray
    n_atoms: int

    def __post_init__(self):
        if self.amplitudes.shape != (1 << self.n_atoms,):
            raise ValueError("amplitude vector does not match atom count")

    @property
    def norm(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def probability(self, bitstring: str) -> float:
        return float(self.probabilities()[bitstring_to_index(bitstring)])

    def fidelity(self, other: "QuantumState | np.ndarray") -> float:
        b = other.amplitudes if isinstance(other, QuantumState) else np.asarray(other)
        return float(abs(np.vdot(self.amplitudes, b)) ** 2)


def bitstring_to_index(bits: str) -> int:
    return sum(1 << i for i, c in enumerate(bits) if c == "1")


def index_to_bitstring(index: int, n: int) -> str:
    return "".join("1" if (index >> i) & 1 else "0" for i in range(n))


def ground_state(n: int) -> QuantumState:
    psi = np.zeros(1 << n, dtype=np.complex128)
    psi[0] = 1.0
    return QuantumState(psi, n)


def _popcount(n: int) -> np.ndarray:
    idx = np.arange(1 << n, dtype=np.int64)
    return ((idx[:, None] >> np.arange(n)) & 1).sum(axis=1).astype(np.int64)


def diagonal_energies(u: np.ndarray, offsets: np.ndarray | None = None) -> np.ndarray:
    """Static diagonal part: interaction energy minus static detuning offsets, per basis state."""
    n = u.shape[0]
    idx = np.arange(1 << n, dtype=np.int64)
    bits = ((idx[:, None] >> np.arange(n)) & 1).astype(float)
    energy = 0.5 * np.einsum("ai,ij,aj->a", bits, u, bits)
    if offsets is not None:
        energy -= bits @ np.asarray(offsets, dtype=float)
    return energy


def dense_hamiltonian(u: np.ndarray, omega: float, delta: float, offsets=None, scale=None) -> np.ndarray:
    """Full matrix of H at fixed drive values; intended for small checks."""
    n = u.shape[0]
    scale = np.ones(n) if scale is None else np.asarray(scale, dtype=float)
    dim = 1 << n
    h = np.diag(diagonal_energies(u, offsets) - delta * _popcount(n)).astype(np.complex128)
    idx = np.arange(dim)
    for q in range(n):
        h[idx ^ (1 << q), idx] += omega * scale[q]
    return h


def _step_grid(duration: float, dt: float, u: np.ndarray) -> tuple[int, float]:
    n_steps = max(1, math.ceil(duration / dt - 1e-9))
    h = duration / n_steps
    # keep pair-interaction phases per step below one radian
    umax = float(u.max(initial=0.0))
    if umax * h > 1.0:
        n_steps = math.ceil(duration * umax)
        h = duration / n_steps
    return n_steps, h


def propagate(
    u: np.ndarray,
    drive,
    *,
    offsets=None,
    scale=None,
    dt: float = DT_DEFAULT,
    method: str = "split",
    psi0: np.ndarray | None = None,
) -> np.ndarray:
    """Integrate the Schrödinger equation from ``psi0`` (default all atoms in |0>)."""
    n = u.shape[0]
    if n == 0:
        return np.ones(1, dtype=np.complex128)
    psi = np.zeros(1 << n, dtype=np.complex128) if psi0 is None else np.array(psi0, dtype=np.complex128)
    if psi0 is None:
        psi[0] = 1.0
    static = diagonal_energies(u, offsets)
    popc = _popcount(n)
    scale = np.ones(n) if scale is None else np.asarray(scale, dtype=float)
    duration = float(drive.duration)
    if method == "split":
        n_steps, h = _step_grid(duration, dt, u)
        start = np.arange(n_steps) * h
        frac = np.array([0.5 * _kernels.W1, 0.5, 1.0 - 0.5 * _kernels.W1])
        times = (start[:, None] + frac[None, :] * h).ravel()
        psi = _kernels.evolve_split(
            psi, static, popc, n, h,
            np.asarray(drive.omega_at(times), dtype=float),
            np.asarray(drive.delta_at(times), dtype=float),
            scale,
        )
    elif method == "rk4":
        n_steps = max(1, math.ceil(duration / dt - 1e-9))
        h = duration / n_steps
        times = np.linspace(0.0, duration, 2 * n_steps + 1)
        psi = _kernels.evolve_rk4(
            psi, static, popc, h,
            np.asarray(drive.omega_at(times), dtype=float),
            np.asarray(drive.delta_at(times), dtype=float),
            scale,
        )
    else:
        raise ValueError(f"unknown integration method {method!r}")
    if not np.all(np.isfinite(psi)):
        raise EmulationError("non-finite amplitudes: integration blew up")
    return psi


def evolve(
    reg: Register,
    pulse,
    noise: NoiseParams | None = None,
    seed=None,
    *,
    realization: Realization | None = None,
    c6: float = C6_DEFAULT,
    dt: float = DT_DEFAULT,
    method: str = "split",
    max_atoms: int = MAX_ATOMS,
) -> QuantumState:
    """Final state of the register under ``pulse`` starting from all atoms in |0>.

    With noise enabled one static realization is drawn from ``seed`` (or taken
    from ``realization``): badly prepared atoms stay in |0> and are left out of
    the dynamics, the others get a Doppler detuning offset and a Gaussian-beam
    amplitude factor.
    """
    n = len(reg)
    if n > max_atoms:
        raise EmulationError(f"{n} atoms exceed the simulation limit of {max_atoms}")
    noise = noise or NOISE_OFF
    if realization is None:
        realization = draw_realization(reg, noise, seed)
    active = np.array([i for i in range(n) if i not in realization.bad_atoms], dtype=int)
    u = interactions(reg, c6)[np.ix_(active, active)]
    offsets = None if realization.detuning_offsets is None else realization.detuning_offsets[active]
    scale = None if realization.amplitude_factors is None else realization.amplitude_factors[active]
    psi_active = propagate(u, pulse, offsets=offsets, scale=scale, dt=dt, method=method)
    if len(active) == n:
        return QuantumState(psi_active, n)
    full = np.zeros(1 << n, dtype=np.complex128)
    sub = np.arange(1 << len(active), dtype=np.int64)
    target = np.zeros_like(sub)
    for k, atom in enumerate(active):
        target |= ((sub >> k) & 1) << int(atom)
    full[target] = psi_active
    return QuantumState(full, n)


@dataclass
class SampleSet:
    """Measured bitstrings with multiplicities; character ``i`` is atom ``i``."""

    counts: dict[str, int] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return int(sum(self.counts.values()))

    @property
    def n_atoms(self) -> int:
        return len(next(iter(self.counts))) if self.counts else 0

    def merged(self, other: "SampleSet") -> "SampleSet":
        c = Counter(self.counts)
        c.update(other.counts)
        return SampleSet(dict(sorted(c.items())))

    def to_array(self) -> np.ndarray:
        """One row of bits per shot, in sorted bitstring order."""
        rows = []
        for b, k in sorted(self.counts.items()):
            rows.extend([[int(c) for c in b]] * k)
        return np.array(rows, dtype=np.int8).reshape(-1, self.n_atoms)

    @classmethod
    def from_array(cls, shots: np.ndarray) -> "SampleSet":
        c = Counter("".join(map(str, row)) for row in np.asarray(shots, dtype=int))
        return cls(dict(sorted(c.items())))

    def to_dict(self) -> dict:
        return {"counts": dict(sorted(self.counts.items())), "total": self.total}

    @classmethod
    def from_dict(cls, data: Mapping) -> "SampleSet":
        return cls({str(k): int(v) for k, v in data["counts"].items()})


def sample(state: QuantumState, shots: int, seed=None) -> SampleSet:
    if shots < 1:
        raise ValueError("shots must be >= 1")
    rng = np.random.default_rng(seed)
    p = state.probabilities()
    p = p / p.sum()
    draws = rng.multinomial(shots, p)
    nz = np.flatnonzero(draws)
    counts = {index_to_bitstring(int(i), state.n_atoms): int(draws[i]) for i in nz}
    return SampleSet(dict(sorted(counts.items())))


def apply_spam(samples: SampleSet, noise: NoiseParams, bad_atoms=frozenset(), seed=None) -> SampleSet:
    """Readout errors: a true 0 reads 1 with probability epsilon, a true 1 reads 0 with epsilon'.

    Badly prepared atoms are forced to a true 0 before readout.
    """
    if not samples.counts:
        return SampleSet()
    rng = np.random.default_rng(seed)
    shots = samples.to_array().astype(bool)
    bad = sorted(bad_atoms)
    if bad:
        shots[:, bad] = False
    u = rng.random(shots.shape)
    flipped = np.where(shots, u >= noise.epsilon_prime, u < noise.epsilon)
    return SampleSet.from_array(flipped.astype(np.int8))


def run_noisy(
    reg: Register,
    pulse,
    noise: NoiseParams | None = None,
    shots_per_real: int = 100,
    realizations: int = 5,
    seed=None,
    **evolve_kwargs,
) -> SampleSet:
    """Merged samples from independent noise realizations.

    With noise disabled this is a single evolution sampled
    ``shots_per_real * realizations`` times.
    """
    noise = noise or NOISE_OFF
    if not noise.enabled:
        state = evolve(reg, pulse, **evolve_kwargs)
        return sample(state, shots_per_real * realizations, seed)
    streams = spawn(seed, realizations)
    merged = SampleSet()
    for ss in streams:
        real_seed, sample_seed, spam_seed = ss.spawn(3)
        realization = draw_realization(reg, noise, real_seed)
        state = evolve(reg, pulse, noise, realization=realization, **evolve_kwargs)
        raw = sample(state, shots_per_real, sample_seed)
        merged = merged.merged(apply_spam(raw, noise, realization.bad_atoms, spam_seed))
    return merged
