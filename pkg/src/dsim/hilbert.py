"""Collective-state bases, state vectors and photonic qubit embedding.

One storage medium is described by eight collective levels: the two photonic
states ``|b, 1_-->`` and ``|b, 1_+>`` (ensemble in the ground state, one photon
of circular polarisation), the excited levels ``a_-``, ``a_+``, ``e`` and the
metastable levels ``c_-``, ``c_+``, ``d``.  Two media share one cavity mode,
truncated at Fock number ``cavity_dim``.

Basis ordering is lexicographic over (medium-1 level, medium-2 level, Fock
number) following the enum order of :class:`MediumLevel`.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ConfigurationError, NotReleasedError

NORM_TOL = 1e-12


class MediumLevel(enum.IntEnum):
    B1Minus = 0
    B1Plus = 1
    AMinus = 2
    APlus = 3
    CMinus = 4
    CPlus = 5
    E = 6
    D = 7

    @property
    def is_excited(self) -> bool:
        return self in _EXCITED

    @property
    def is_metastable(self) -> bool:
        return self in _METASTABLE

    @property
    def is_photonic(self) -> bool:
        return self in _PHOTONIC


_EXCITED = frozenset({MediumLevel.AMinus, MediumLevel.APlus, MediumLevel.E})
_METASTABLE = frozenset({MediumLevel.CMinus, MediumLevel.CPlus, MediumLevel.D})
_PHOTONIC = frozenset({MediumLevel.B1Minus, MediumLevel.B1Plus})
N_LEVELS = len(MediumLevel)

# qubit value 0 <-> sigma_-, 1 <-> sigma_+
PHOTONIC_LEVELS = (MediumLevel.B1Minus, MediumLevel.B1Plus)


@dataclass(frozen=True)
class CompositeBasis:
    """Ordered product basis of one or two media and an optional cavity mode.

    ``cavity_dim`` is the largest Fock number kept (0 means no cavity mode).
    Single-medium tuples are ``(level,)``; two-media tuples are
    ``(level_1, level_2, fock)``.
    """

    media_count: int
    cavity_dim: int = 0

    def __post_init__(self):
        if self.media_count not in (1, 2):
            raise ConfigurationError(f"media_count must be 1 or 2, got {self.media_count}")
        if self.cavity_dim < 0:
            raise ConfigurationError("cavity_dim must be >= 0")
        if self.cavity_dim > 0 and self.media_count != 2:
            raise ConfigurationError("a cavity mode requires two media; the single-medium model omits it")

    @property
    def fock_count(self) -> int:
        return self.cavity_dim + 1

    @property
    def dimension(self) -> int:
        return N_LEVELS**self.media_count * max(1, self.cavity_dim + 1)

    @cached_property
    def tuples(self) -> tuple[tuple, ...]:
        if self.media_count == 1:
            return tuple((lvl,) for lvl in MediumLevel)
        return tuple(
            (l1, l2, n)
            for l1, l2, n in itertools.product(MediumLevel, MediumLevel, range(self.fock_count))
        )

    @cached_property
    def _index(self) -> dict[tuple, int]:
        return {tup: i for i, tup in enumerate(self.tuples)}

    def tuple_of(self, index: int) -> tuple:
        return self.tuples[index]

    def index_of(self, tup: tuple) -> int:
        if self.media_count == 1 and not isinstance(tup, tuple):
            tup = (tup,)
        key = tuple(MediumLevel(x) if i < self.media_count else int(x) for i, x in enumerate(tup))
        try:
            return self._index[key]
        except KeyError:
            raise KeyError(f"{tup!r} is not a state of {self}") from None

    def label(self, index: int) -> str:
        tup = self.tuple_of(index)
        names = [lvl.name for lvl in tup[: self.media_count]]
        if self.media_count == 2:
            names.append(f"n{tup[2]}")
        return "|" + ",".join(names) + ">"

    def level_mask(self, predicate, medium: int | None = None) -> np.ndarray:
        """Boolean mask of basis states whose medium level satisfies ``predicate``.

        With ``medium=None`` a state is selected if *any* medium matches.
        """
        media = range(self.media_count) if medium is None else (medium,)
        return np.array([any(predicate(tup[m]) for m in media) for tup in self.tuples])

    @cached_property
    def excited_mask(self) -> np.ndarray:
        return self.level_mask(lambda lvl: lvl.is_excited)

    @cached_property
    def fock_numbers(self) -> np.ndarray:
        if self.media_count == 1:
            return np.zeros(self.dimension, dtype=int)
        return np.array([tup[2] for tup in self.tuples])

    @cached_property
    def photonic_indices(self) -> tuple[int, ...]:
        """Indices of the computational photonic states (cavity empty)."""
        if self.media_count == 1:
            return tuple(self.index_of((lvl,)) for lvl in PHOTONIC_LEVELS)
        return tuple(
            self.index_of((l1, l2, 0)) for l1, l2 in itertools.product(PHOTONIC_LEVELS, PHOTONIC_LEVELS)
        )


def make_basis(media_count: int, cavity_dim: int = 0) -> CompositeBasis:
    return CompositeBasis(media_count, cavity_dim)


@dataclass(frozen=True)
class StateVector:
    basis: CompositeBasis
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if amps.shape[0] != self.basis.dimension:
            raise ConfigurationError(
                f"amplitude vector has length {amps.shape[0]}, basis needs {self.basis.dimension}"
            )
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def basis_state(cls, basis: CompositeBasis, tup, phase: complex = 1.0) -> "StateVector":
        amps = np.zeros(basis.dimension, dtype=complex)
        amps[basis.index_of(tup)] = phase
        return cls(basis, amps)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    @property
    def populations(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def population(self, tup) -> float:
        return float(abs(self.amplitudes[self.basis.index_of(tup)]) ** 2)

    def amplitude(self, tup) -> complex:
        return complex(self.amplitudes[self.basis.index_of(tup)])

    def excited_population(self) -> float:
        return float(self.populations[self.basis.excited_mask].sum())

    def normalized(self) -> "StateVector":
        n = self.norm
        if n == 0:
            raise ValueError("cannot normalise the zero vector")
        return StateVector(self.basis, self.amplitudes / n)

    def inner(self, other: "StateVector") -> complex:
        _check_same_basis(self, other)
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def __add__(self, other: "StateVector") -> "StateVector":
        _check_same_basis(self, other)
        return StateVector(self.basis, self.amplitudes + other.amplitudes)

    def __sub__(self, other: "StateVector") -> "StateVector":
        _check_same_basis(self, other)
        return StateVector(self.basis, self.amplitudes - other.amplitudes)

    def __mul__(self, scalar: complex) -> "StateVector":
        return StateVector(self.basis, self.amplitudes * scalar)

    __rmul__ = __mul__


def _check_same_basis(a: StateVector, b: StateVector) -> None:
    if a.basis != b.basis:
        raise ConfigurationError(f"basis mismatch: {a.basis} vs {b.basis}")


@dataclass(frozen=True)
class QubitState:
    """Polarisation qubit ``alpha |1_-, 0_+> + beta |0_-, 1_+>``."""

    alpha: complex
    beta: complex

    def __post_init__(self):
        object.__setattr__(self, "alpha", complex(self.alpha))
        object.__setattr__(self, "beta", complex(self.beta))
        total = abs(self.alpha) ** 2 + abs(self.beta) ** 2
        if abs(total - 1.0) > NORM_TOL:
            raise ValueError(f"qubit is not normalised: |alpha|^2 + |beta|^2 = {total!r}")

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.alpha, self.beta])

    @classmethod
    def from_vector(cls, v) -> "QubitState":
        v = np.asarray(v, dtype=complex)
        v = v / np.linalg.norm(v)
        return cls(v[0], v[1])


@dataclass(frozen=True)
class TwoQubitState:
    """Two-photon register, amplitudes ordered (--, -+, +-, ++)."""

    alpha: complex
    beta: complex
    gamma: complex
    delta: complex

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "delta"):
            object.__setattr__(self, name, complex(getattr(self, name)))
        total = float(np.sum(np.abs(self.vector) ** 2))
        if abs(total - 1.0) > NORM_TOL:
            raise ValueError(f"two-qubit state is not normalised: sum |amp|^2 = {total!r}")

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.alpha, self.beta, self.gamma, self.delta])

    @classmethod
    def from_vector(cls, v) -> "TwoQubitState":
        v = np.asarray(v, dtype=complex)
        v = v / np.linalg.norm(v)
        return cls(*v)


def embed_qubit(q: QubitState, basis: CompositeBasis) -> StateVector:
    if basis.media_count != 1:
        raise ConfigurationError("embed_qubit needs a single-medium basis")
    amps = np.zeros(basis.dimension, dtype=complex)
    amps[list(basis.photonic_indices)] = q.vector
    return StateVector(basis, amps)


def embed_two_qubit(q: TwoQubitState, basis: CompositeBasis) -> StateVector:
    if basis.media_count != 2:
        raise ConfigurationError("embed_two_qubit needs a two-media basis")
    amps = np.zeros(basis.dimension, dtype=complex)
    amps[list(basis.photonic_indices)] = q.vector
    return StateVector(basis, amps)


def _photonic_part(s: StateVector, threshold: float) -> tuple[np.ndarray, float]:
    idx = list(s.basis.photonic_indices)
    amps = s.amplitudes[idx]
    photonic = float(np.sum(np.abs(amps) ** 2))
    if photonic < threshold:
        raise NotReleasedError(f"state not released (photonic population {photonic:.3g})")
    leakage = float(np.sum(s.populations)) - photonic
    return amps / np.sqrt(photonic), max(leakage, 0.0)


def extract_qubit(s: StateVector, threshold: float = 1e-6) -> tuple[QubitState, float]:
    """Renormalised photonic qubit plus the population found outside it."""
    if s.basis.media_count != 1:
        raise ConfigurationError("extract_qubit needs a single-medium state")
    amps, leakage = _photonic_part(s, threshold)
    return QubitState(*amps), leakage


def extract_two_qubit(s: StateVector, threshold: float = 1e-6) -> tuple[TwoQubitState, float]:
    if s.basis.media_count != 2:
        raise ConfigurationError("extract_two_qubit needs a two-media state")
    amps, leakage = _photonic_part(s, threshold)
    return TwoQubitState(*amps), leakage


def fidelity_states(a: StateVector, b: StateVector) -> float:
    """``|<a|b>|^2``; callers pass normalised vectors."""
    return float(min(1.0, abs(a.inner(b)) ** 2))


def fidelity_vectors(a, b) -> float:
    """Global-phase-insensitive overlap of two normalised plain arrays."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    return float(min(1.0, abs(np.vdot(a, b)) ** 2 / (np.vdot(a, a).real * np.vdot(b, b).real)))
