"""Exception types raised across the simulator."""


class DsimError(Exception):
    """Base class for simulator errors."""


class ConfigurationError(DsimError, ValueError):
    """A model, schedule or scenario is internally inconsistent."""


class UndefinedAngleError(DsimError, ValueError):
    """A mixing angle was requested where all defining couplings vanish."""


class NotReleasedError(DsimError):
    """The photonic subspace carries (almost) no population."""


class IntegrationError(DsimError):
    """The ODE integrator failed; ``t`` holds the time where it stopped."""

    def __init__(self, message: str, t: float):
        super().__init__(f"{message} (t = {t:.6g} ns)")
        self.t = t


class AdiabaticityWarning(UserWarning):
    """A protocol step runs with a large adiabaticity ratio."""


class CavityLeakageWarning(UserWarning):
    """The cavity reached Fock number two with noticeable population."""
