"""The three-transition illness-death model and its parameter vector layout."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import KnotGrid
from .exceptions import DimensionError
from .hazards import SPLINE, TRANSITIONS, WEIBULL, HazardSpec


@dataclass(frozen=True)
class IllnessDeathModel:
    """Three hazard specifications sharing one covariate layout.

    ``covariate_names`` fixes the order in which subject covariates map to
    each transition's ``beta`` vector.
    """

    h01: HazardSpec
    h02: HazardSpec
    h12: HazardSpec
    covariate_names: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))
        for spec, tr in zip(self.specs, TRANSITIONS):
            if spec.transition != tr:
                raise ValueError(f"expected transition {tr}, got {spec.transition!r}")
            if spec.beta.size != len(self.covariate_names):
                raise DimensionError(
                    f"{tr} beta has length {spec.beta.size}, "
                    f"model declares {len(self.covariate_names)} covariates"
                )

    @property
    def specs(self) -> tuple[HazardSpec, HazardSpec, HazardSpec]:
        return (self.h01, self.h02, self.h12)

    def spec_for(self, transition: str) -> HazardSpec:
        return self.specs[TRANSITIONS.index(transition)]

    def z_vector(self, covariates: dict) -> np.ndarray:
        """Covariate vector in model order, raising on missing names."""
        try:
            return np.array([float(covariates[name]) for name in self.covariate_names])
        except KeyError as err:
            raise DimensionError(f"record lacks covariate {err.args[0]!r}") from None

    def upper_boundary(self) -> float:
        """Smallest age beyond which some baseline is extrapolated."""
        bounds = [s.grid.boundary_hi for s in self.specs if s.form == SPLINE]
        return min(bounds) if bounds else np.inf

    # -- flat parameter vector -------------------------------------------
    # Layout: theta01, beta01, theta02, beta02, theta12, beta12.

    def param_slices(self) -> dict[str, slice]:
        out = {}
        pos = 0
        for spec, tr in zip(self.specs, TRANSITIONS):
            out[f"theta{tr}"] = slice(pos, pos + spec.theta.size)
            pos += spec.theta.size
            out[f"beta{tr}"] = slice(pos, pos + spec.beta.size)
            pos += spec.beta.size
        out["__len__"] = pos
        return out

    @property
    def n_params(self) -> int:
        return self.param_slices()["__len__"]

    def pack(self) -> np.ndarray:
        return np.concatenate([np.concatenate([s.theta, s.beta]) for s in self.specs])

    def unpack(self, x: np.ndarray) -> "IllnessDeathModel":
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n_params,):
            raise DimensionError(f"expected {self.n_params} parameters, got {x.size}")
        slices = self.param_slices()
        specs = [
            spec.with_params(theta=x[slices[f"theta{tr}"]], beta=x[slices[f"beta{tr}"]])
            for spec, tr in zip(self.specs, TRANSITIONS)
        ]
        return IllnessDeathModel(*specs, covariate_names=self.covariate_names)

    def param_labels(self) -> list[str]:
        labels = []
        for spec, tr in zip(self.specs, TRANSITIONS):
            if spec.form == WEIBULL:
                labels += [f"{tr}:shape", f"{tr}:scale"]
            else:
                labels += [f"{tr}:theta{i}" for i in range(spec.theta.size)]
            labels += [f"{tr}:beta:{name}" for name in self.covariate_names]
        return labels

    # -- JSON round trip --------------------------------------------------

    def to_dict(self) -> dict:
        def spec_dict(spec: HazardSpec) -> dict:
            d = {
                "transition": spec.transition,
                "form": spec.form,
                "theta": spec.theta.tolist(),
                "beta": spec.beta.tolist(),
            }
            if spec.grid is not None:
                d["grid"] = {
                    "boundary_lo": spec.grid.boundary_lo,
                    "boundary_hi": spec.grid.boundary_hi,
                    "interior": list(spec.grid.interior),
                    "order": spec.grid.order,
                }
            return d

        return {
            "covariate_names": list(self.covariate_names),
            "transitions": [spec_dict(s) for s in self.specs],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "IllnessDeathModel":
        specs = []
        for sd in data["transitions"]:
            grid = None
            if sd.get("grid") is not None:
                g = sd["grid"]
                grid = KnotGrid(g["boundary_lo"], g["boundary_hi"],
                                tuple(g["interior"]), g["order"])
            specs.append(HazardSpec(sd["transition"], sd["form"],
                                    np.array(sd["theta"]), np.array(sd["beta"]), grid))
        return cls(*specs, covariate_names=tuple(data.get("covariate_names", ())))


def constant_hazard_model(a: float, b: float, c: float) -> IllnessDeathModel:
    """Constant-intensity model (Weibull shape 1), handy for closed-form checks."""
    return IllnessDeathModel(
        HazardSpec("0->1", WEIBULL, np.array([1.0, 1.0 / a]), np.zeros(0)),
        HazardSpec("0->2", WEIBULL, np.array([1.0, 1.0 / b]), np.zeros(0)),
        HazardSpec("1->2", WEIBULL, np.array([1.0, 1.0 / c]), np.zeros(0)),
    )
