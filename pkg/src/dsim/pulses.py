"""Pulse envelopes, schedules, mixing angles and adiabaticity diagnostics.

Times are in ns and Rabi frequencies in rad/ns.  Every envelope is real and
non-negative; the (static) laser phase carries the complex structure.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Union

import numpy as np

from .errors import ConfigurationError, UndefinedAngleError

if TYPE_CHECKING:
    from .dynamics import CouplingConstants

FOUR_LN2 = 4.0 * math.log(2.0)
EDGE_FRACTION = 1e-4
WINDOW_FWHMS = 3.0


class Coupling(str, enum.Enum):
    """Classical couplings of one medium."""

    OmegaMinus = "OmegaMinus"  # a_- <-> c_-
    OmegaPlus = "OmegaPlus"  # a_+ <-> c_+
    OmegaCMinus = "OmegaCMinus"  # c_- <-> e
    OmegaCPlus = "OmegaCPlus"  # c_+ <-> e
    OmegaD = "OmegaD"  # d <-> e
    OmegaAPlus = "OmegaAPlus"  # a_+ <-> d


@dataclass(frozen=True, order=True)
class TransitionLabel:
    coupling: Coupling
    medium: int = 1

    def __post_init__(self):
        object.__setattr__(self, "coupling", Coupling(self.coupling))
        if self.medium not in (1, 2):
            raise ConfigurationError(f"medium must be 1 or 2, got {self.medium}")

    def __str__(self) -> str:
        return f"{self.coupling.value}^({self.medium})"


@dataclass(frozen=True)
class Gaussian:
    peak: float
    fwhm: float
    center: float

    def __post_init__(self):
        if self.peak < 0:
            raise ConfigurationError("pulse peak must be >= 0")
        if self.fwhm <= 0:
            raise ConfigurationError("pulse fwhm must be > 0")

    def value(self, t):
        return self.peak * np.exp(-FOUR_LN2 * (np.asarray(t) - self.center) ** 2 / self.fwhm**2)

    def derivative(self, t):
        t = np.asarray(t)
        return -2.0 * FOUR_LN2 * (t - self.center) / self.fwhm**2 * self.value(t)

    def extent(self) -> tuple[float, float]:
        return (self.center - WINDOW_FWHMS * self.fwhm, self.center + WINDOW_FWHMS * self.fwhm)

    def stretched(self, k: float, origin: float) -> "Gaussian":
        return replace(self, fwhm=self.fwhm * k, center=origin + k * (self.center - origin))

    def shifted(self, dt: float) -> "Gaussian":
        return replace(self, center=self.center + dt)

    def scaled(self, s: float) -> "Gaussian":
        return replace(self, peak=self.peak * s)


@dataclass(frozen=True)
class Ramp:
    """Flat top at ``peak`` joined to one half of a Gaussian.

    ``direction="off"`` holds ``peak`` up to ``center`` and then falls;
    ``direction="on"`` rises and holds ``peak`` from ``center`` onwards.
    Used for the EIT control fields, which are switched rather than pulsed.
    """

    peak: float
    fwhm: float
    center: float
    direction: str = "off"

    def __post_init__(self):
        if self.peak < 0 or self.fwhm <= 0:
            raise ConfigurationError("ramp needs peak >= 0 and fwhm > 0")
        if self.direction not in ("off", "on"):
            raise ConfigurationError(f"ramp direction must be 'off' or 'on', got {self.direction!r}")

    def _tail(self, t):
        t = np.asarray(t, dtype=float)
        x = t - self.center
        return (x > 0) if self.direction == "off" else (x < 0)

    def value(self, t):
        t = np.asarray(t, dtype=float)
        g = self.peak * np.exp(-FOUR_LN2 * (t - self.center) ** 2 / self.fwhm**2)
        return np.where(self._tail(t), g, self.peak)

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        g = self.peak * np.exp(-FOUR_LN2 * (t - self.center) ** 2 / self.fwhm**2)
        dg = -2.0 * FOUR_LN2 * (t - self.center) / self.fwhm**2 * g
        return np.where(self._tail(t), dg, 0.0)

    def extent(self) -> tuple[float, float]:
        if self.direction == "off":
            return (self.center, self.center + WINDOW_FWHMS * self.fwhm)
        return (self.center - WINDOW_FWHMS * self.fwhm, self.center)

    def stretched(self, k: float, origin: float) -> "Ramp":
        return replace(self, fwhm=self.fwhm * k, center=origin + k * (self.center - origin))

    def shifted(self, dt: float) -> "Ramp":
        return replace(self, center=self.center + dt)

    def scaled(self, s: float) -> "Ramp":
        return replace(self, peak=self.peak * s)


@dataclass(frozen=True)
class SampledTable:
    """Piecewise-linear envelope, zero outside the table."""

    times: tuple
    values: tuple

    def __post_init__(self):
        times = tuple(float(x) for x in self.times)
        values = tuple(float(x) for x in self.values)
        if len(times) != len(values) or len(times) < 2:
            raise ConfigurationError("sampled table needs >= 2 matching time/value entries")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ConfigurationError("sampled table times must be strictly increasing")
        if min(values) < 0:
            raise ConfigurationError("envelope values must be >= 0")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def peak(self) -> float:
        return max(self.values)

    def value(self, t):
        return np.interp(t, self.times, self.values, left=0.0, right=0.0)

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        slopes = np.diff(self.values) / np.diff(self.times)
        k = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, len(slopes) - 1)
        inside = (t >= self.times[0]) & (t <= self.times[-1])
        return np.where(inside, slopes[k], 0.0)

    def extent(self) -> tuple[float, float]:
        return (self.times[0], self.times[-1])

    def stretched(self, k: float, origin: float) -> "SampledTable":
        return SampledTable(tuple(origin + k * (x - origin) for x in self.times), self.values)

    def shifted(self, dt: float) -> "SampledTable":
        return SampledTable(tuple(x + dt for x in self.times), self.values)

    def scaled(self, s: float) -> "SampledTable":
        return SampledTable(self.times, tuple(v * s for v in self.values))


Shape = Union[Gaussian, Ramp, SampledTable]


@dataclass(frozen=True)
class PulseEnvelope:
    """One classical field on one transition.

    ``label`` groups envelopes that belong to the same physical pulse (for
    instance the sigma_+ and sigma_- components of one elliptically polarised
    field) and names the protocol step in compiled output.
    """

    transition: TransitionLabel
    shape: Shape
    phase: float = 0.0
    label: str = ""

    def value(self, t):
        return self.shape.value(t)

    def complex_value(self, t):
        return self.shape.value(t) * np.exp(1j * self.phase)


def eval_envelope(p: PulseEnvelope, t):
    return p.shape.value(t)


def default_window(envelopes) -> tuple[float, float]:
    lo, hi = zip(*(env.shape.extent() for env in envelopes))
    return (min(lo), max(hi))


@dataclass(frozen=True)
class PulseSchedule:
    window: tuple[float, float]
    envelopes: tuple[PulseEnvelope, ...] = field(default_factory=tuple)

    def __post_init__(self):
        t0, t1 = (float(x) for x in self.window)
        if not t1 > t0:
            raise ConfigurationError(f"schedule window must have t_end > t_start, got {self.window}")
        object.__setattr__(self, "window", (t0, t1))
        object.__setattr__(self, "envelopes", tuple(self.envelopes))
        for env in self.envelopes:
            self._check_envelope(env)

    def _check_envelope(self, env: PulseEnvelope) -> None:
        t0, t1 = self.window
        shape = env.shape
        if isinstance(shape, Gaussian):
            if not t0 <= shape.center <= t1:
                raise ConfigurationError(f"pulse {env.label or env.transition} centred outside window")
            edges = (t0, t1)
        elif isinstance(shape, Ramp):
            # the flat-top side is allowed to touch the window edge
            edges = (t1,) if shape.direction == "off" else (t0,)
        else:
            edges = ()
        for t in edges:
            if shape.peak > 0 and float(shape.value(t)) >= EDGE_FRACTION * shape.peak:
                raise ConfigurationError(
                    f"pulse {env.label or env.transition} not off at window edge t={t:g} ns"
                )

    @classmethod
    def from_envelopes(cls, envelopes, window=None) -> "PulseSchedule":
        envelopes = tuple(envelopes)
        if window is None:
            window = default_window(envelopes)
        return cls(window, envelopes)

    @property
    def duration(self) -> float:
        return self.window[1] - self.window[0]

    def transitions(self) -> set[TransitionLabel]:
        return {env.transition for env in self.envelopes}

    def for_transition(self, transition: TransitionLabel) -> tuple[PulseEnvelope, ...]:
        return tuple(env for env in self.envelopes if env.transition == transition)

    def coupling(self, transition: TransitionLabel, t):
        """Complex Rabi frequency ``sum_k Omega_k(t) exp(i phi_k)`` on a transition."""
        total = np.zeros_like(np.asarray(t, dtype=float), dtype=complex)
        for env in self.for_transition(transition):
            total = total + env.complex_value(t)
        return total

    def coupling_derivative(self, transition: TransitionLabel, t):
        total = np.zeros_like(np.asarray(t, dtype=float), dtype=complex)
        for env in self.for_transition(transition):
            total = total + env.shape.derivative(t) * np.exp(1j * env.phase)
        return total

    def labels(self) -> list[str]:
        seen: list[str] = []
        for env in self.envelopes:
            if env.label not in seen:
                seen.append(env.label)
        return seen

    def shifted(self, dt: float) -> "PulseSchedule":
        return PulseSchedule(
            (self.window[0] + dt, self.window[1] + dt),
            tuple(replace(env, shape=env.shape.shifted(dt)) for env in self.envelopes),
        )

    def stretched(self, k: float) -> "PulseSchedule":
        """Stretch every duration and offset by ``k`` about the window start."""
        t0, t1 = self.window
        return PulseSchedule(
            (t0, t0 + k * (t1 - t0)),
            tuple(replace(env, shape=env.shape.stretched(k, t0)) for env in self.envelopes),
        )

    def scaled(self, s: float) -> "PulseSchedule":
        """Scale every peak Rabi frequency (pulse area) by ``s``."""
        return PulseSchedule(self.window, tuple(replace(env, shape=env.shape.scaled(s)) for env in self.envelopes))

    def then(self, other: "PulseSchedule", gap: float = 0.0) -> "PulseSchedule":
        """Append ``other`` so that its window starts ``gap`` ns after this one ends."""
        moved = other.shifted(self.window[1] + gap - other.window[0])
        return PulseSchedule((self.window[0], moved.window[1]), self.envelopes + moved.envelopes)

    def to_dict(self) -> dict:
        return {"window": list(self.window), "envelopes": [_envelope_to_dict(e) for e in self.envelopes]}

    @classmethod
    def from_dict(cls, data: dict) -> "PulseSchedule":
        return cls(tuple(data["window"]), tuple(_envelope_from_dict(e) for e in data["envelopes"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _envelope_to_dict(env: PulseEnvelope) -> dict:
    shape = env.shape
    if isinstance(shape, Gaussian):
        sdict = {"kind": "gaussian", "peak": shape.peak, "fwhm": shape.fwhm, "center": shape.center}
    elif isinstance(shape, Ramp):
        sdict = {
            "kind": "ramp",
            "peak": shape.peak,
            "fwhm": shape.fwhm,
            "center": shape.center,
            "direction": shape.direction,
        }
    else:
        sdict = {"kind": "table", "times": list(shape.times), "values": list(shape.values)}
    return {
        "transition": env.transition.coupling.value,
        "medium": env.transition.medium,
        "phase": env.phase,
        "label": env.label,
        "shape": sdict,
    }


def _envelope_from_dict(d: dict) -> PulseEnvelope:
    s = dict(d["shape"])
    kind = s.pop("kind")
    if kind == "gaussian":
        shape: Shape = Gaussian(**s)
    elif kind == "ramp":
        shape = Ramp(**s)
    elif kind == "table":
        shape = SampledTable(tuple(s["times"]), tuple(s["values"]))
    else:
        raise ConfigurationError(f"unknown pulse shape {kind!r}")
    return PulseEnvelope(
        TransitionLabel(Coupling(d["transition"]), int(d.get("medium", 1))),
        shape,
        float(d.get("phase", 0.0)),
        str(d.get("label", "")),
    )


# --------------------------------------------------------------------------
# mixing angles


@dataclass(frozen=True)
class MixingAngles:
    theta: float = 0.0
    chi: float = 0.0
    xi: float = 0.0
    rho: float = 0.0

    def __post_init__(self):
        for name in ("theta", "chi", "xi", "rho"):
            v = getattr(self, name)
            if not -1e-15 <= v <= math.pi / 2 + 1e-15:
                raise ValueError(f"{name} = {v} outside [0, pi/2]")


def mixing_theta(gN: float, omega: float) -> float:
    """Storage angle: ``tan(theta) = g sqrt(N) / Omega``."""
    if gN < 0 or omega < 0:
        raise ValueError("couplings must be >= 0")
    if gN == 0 and omega == 0:
        raise UndefinedAngleError("theta undefined: g sqrt(N) and Omega both vanish")
    return math.atan2(gN, omega)


def mixing_chi_xi(omega_cm: float, omega_cp: float, omega_d: float) -> tuple[float, float]:
    """Tripod angles ``(chi, xi)``.

    ``xi`` is undefined when both ``Omega_c`` vanish; it is then reported as 0.
    """
    if min(omega_cm, omega_cp, omega_d) < 0:
        raise ValueError("couplings must be >= 0")
    if omega_cm == 0 and omega_cp == 0 and omega_d == 0:
        raise UndefinedAngleError("chi undefined: all tripod couplings vanish")
    chi = math.atan2(omega_d, math.hypot(omega_cm, omega_cp))
    xi = math.atan2(omega_cp, omega_cm)
    return chi, xi


def mixing_rho(omega_plus: float, omega_a_plus: float) -> float:
    """Shelving angle: ``tan(rho) = Omega_+ / Omega_{a+}``."""
    if omega_plus < 0 or omega_a_plus < 0:
        raise ValueError("couplings must be >= 0")
    if omega_plus == 0 and omega_a_plus == 0:
        raise UndefinedAngleError("rho undefined: Omega_+ and Omega_{a+} both vanish")
    return math.atan2(omega_plus, omega_a_plus)


# --------------------------------------------------------------------------
# adiabaticity


def _atan2_rate(y, x, ydot, xdot):
    denom = x * x + y * y
    return np.where(denom > 0, (x * ydot - y * xdot) / np.where(denom > 0, denom, 1.0), 0.0)


def _abs_and_rate(schedule: PulseSchedule, transition: TransitionLabel, t):
    c = schedule.coupling(transition, t)
    dc = schedule.coupling_derivative(transition, t)
    mag = np.abs(c)
    rate = np.where(mag > 0, np.real(np.conj(c) * dc) / np.where(mag > 0, mag, 1.0), np.abs(dc))
    return mag, rate


def _ratio(rate, scale):
    rate = np.abs(rate)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(scale > 0, rate / np.where(scale > 0, scale, 1.0), np.inf)


def _angle_rate_and_scale(schedule: PulseSchedule, couplings: "CouplingConstants", t, phase: str, medium: int):
    """Mixing-angle rates and the coupling magnitudes that set the bright-state gap."""
    T = lambda c: TransitionLabel(c, medium)  # noqa: E731
    if phase == "storage":
        out = []
        for coupling, ell in ((Coupling.OmegaMinus, "-"), (Coupling.OmegaPlus, "+")):
            g = couplings.gN(ell, medium)
            om, dom = _abs_and_rate(schedule, T(coupling), t)
            out.append((_atan2_rate(g, om, 0.0, dom), np.sqrt(g * g + om * om)))
        return out
    if phase == "tripod":
        cm, dcm = _abs_and_rate(schedule, T(Coupling.OmegaCMinus), t)
        cp, dcp = _abs_and_rate(schedule, T(Coupling.OmegaCPlus), t)
        od, dod = _abs_and_rate(schedule, T(Coupling.OmegaD), t)
        oc = np.hypot(cm, cp)
        doc = np.where(oc > 0, (cm * dcm + cp * dcp) / np.where(oc > 0, oc, 1.0), 0.0)
        return [(_atan2_rate(od, oc, dod, doc), np.sqrt(oc**2 + od**2))]
    if phase == "shelving":
        g = couplings.gN("+", medium)
        op, dop = _abs_and_rate(schedule, T(Coupling.OmegaPlus), t)
        oa, doa = _abs_and_rate(schedule, T(Coupling.OmegaAPlus), t)
        return [(_atan2_rate(op, oa, dop, doa), np.sqrt(op**2 + oa**2 + g * g))]
    raise ValueError(f"unknown protocol phase {phase!r}")


def mixing_angle_rate(schedule: PulseSchedule, couplings: "CouplingConstants", t, phase: str = "storage", medium: int = 1):
    """Largest ``|d angle / dt|`` (rad/ns) of the mixing angle(s) for ``phase``."""
    t = np.asarray(t, dtype=float)
    rates = [np.abs(r) for r, _ in _angle_rate_and_scale(schedule, couplings, t, phase, medium)]
    return np.maximum.reduce(rates) if len(rates) > 1 else rates[0]


def adiabaticity_profile(
    schedule: PulseSchedule,
    couplings: "CouplingConstants",
    t,
    phase: str = "storage",
    medium: int = 1,
):
    """Vectorised adiabaticity ratio ``|angle rate| / coupling magnitude``.

    ``phase`` selects the relevant mixing angle: ``"storage"`` (theta, both
    polarisations, worst case returned), ``"tripod"`` (chi) or ``"shelving"``
    (rho).  A vanishing coupling magnitude gives ``+inf``.
    """
    t = np.asarray(t, dtype=float)
    ratios = [_ratio(r, scale) for r, scale in _angle_rate_and_scale(schedule, couplings, t, phase, medium)]
    return np.maximum.reduce(ratios) if len(ratios) > 1 else ratios[0]


def adiabaticity_margin(schedule, couplings, t: float, phase: str = "storage", medium: int = 1) -> float:
    return float(adiabaticity_profile(schedule, couplings, np.array([t]), phase, medium)[0])


def active_mask(schedule: PulseSchedule, t, transitions, fraction: float = 1e-2) -> np.ndarray:
    """Times where every listed transition carries at least ``fraction`` of its peak."""
    t = np.asarray(t, dtype=float)
    mask = np.ones(t.shape, dtype=bool)
    for tr in transitions:
        envs = schedule.for_transition(tr)
        if not envs:
            return np.zeros(t.shape, dtype=bool)
        peak = max(env.shape.peak for env in envs)
        mask &= np.abs(schedule.coupling(tr, t)) >= fraction * peak
    return mask
