from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class LearningSchedule:
    """Learning parameter eta(t) = eta0 * (t + t0)^(-gamma).

    ``form="constant"`` pins gamma to 0.  gamma must stay below 1 so that
    t * eta(t) diverges; the offset t0 keeps eta(0) finite.
    """

    eta0: float = 1.0
    gamma: float = 0.0
    t0: float = 1.0
    form: str = "power"

    def __post_init__(self):
        if self.form not in ("constant", "power"):
            raise ScheduleError(f"unknown schedule form {self.form!r}")
        if self.form == "constant" and self.gamma != 0:
            raise ScheduleError("constant schedule cannot have a decay exponent")
        if not self.eta0 > 0:
            raise ScheduleError("eta0 must be positive")
        if not 0 <= self.gamma < 1:
            raise ScheduleError(
                f"gamma = {self.gamma} is not allowed: t * eta(t) must diverge, "
                "which needs 0 <= gamma < 1 (with gamma = 1, t * t^-1 stays bounded)")
        if not self.t0 > 0:
            raise ScheduleError("t0 must be positive")

    @classmethod
    def constant(cls, eta: float = 1.0) -> "LearningSchedule":
        return cls(eta0=eta, gamma=0.0, form="constant")

    @classmethod
    def power(cls, eta0: float = 1.0, gamma: float = 0.5, t0: float = 1.0) -> "LearningSchedule":
        return cls(eta0=eta0, gamma=gamma, t0=t0, form="power")

    @property
    def is_constant(self) -> bool:
        return self.gamma == 0

    def eta(self, t):
        t = np.asarray(t, dtype=float)
        out = self.eta0 * (t + self.t0) ** (-self.gamma)
        return float(out) if out.ndim == 0 else out

    def eta_dot(self, t):
        t = np.asarray(t, dtype=float)
        out = -self.gamma * self.eta0 * (t + self.t0) ** (-self.gamma - 1.0)
        return float(out) if out.ndim == 0 else out

    def integral(self, t):
        """Closed-form integral of eta over [0, t]."""
        t = np.asarray(t, dtype=float)
        if self.is_constant:
            out = self.eta0 * t
        else:
            p = 1.0 - self.gamma
            out = self.eta0 * ((t + self.t0) ** p - self.t0 ** p) / p
        return float(out) if out.ndim == 0 else out

    def to_dict(self) -> dict:
        if self.is_constant:
            return {"form": "constant", "eta0": self.eta0}
        return {"form": "power", "eta0": self.eta0, "gamma": self.gamma, "t0": self.t0}

    @classmethod
    def from_dict(cls, spec: dict) -> "LearningSchedule":
        spec = dict(spec)
        form = spec.pop("form", None)
        if form is None:
            form = "constant" if float(spec.get("gamma", 0.0)) == 0 else "power"
        if form == "constant":
            return cls.constant(float(spec.get("eta0", spec.get("eta", 1.0))))
        return cls.power(eta0=float(spec.get("eta0", 1.0)), gamma=float(spec.get("gamma", 0.5)),
                         t0=float(spec.get("t0", 1.0)))
