from pathlib import Path
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class ContinuationConfig(BaseModel):
    """Knobs of the Newton-continuation construction of P.

    eps0 bounds int |grad P|^m before Q is solved for, eps1 bounds the
    W^{2,m/2}_0 proxy of P - Id after every continuation step.
    """

    steps: int = Field(8, ge=1)
    newton_tol: float = Field(1e-9, gt=0)
    newton_max: int = Field(20, ge=1)
    eps0_monitor: float = Field(0.1, gt=0)
    eps1_monitor: float = Field(1.0, gt=0)
    max_omega_norm: float = Field(1.0, gt=0)
    linear_tol: float = Field(1e-10, gt=1e-14, lt=1e-4)
    divergence_factor: float = Field(10.0, gt=1)


class OmegaSpec(BaseModel):
    kind: Literal["zero", "constant", "random"] = "random"
    seed: int = 0
    target_norm: float = Field(0.05, ge=0)
    smoothness_passes: int = Field(2, ge=0)
    modes: int = Field(4, ge=1)
    sweep_norms: List[float] = []

    @field_validator("sweep_norms")
    @classmethod
    def non_negative(cls, v):
        if any(x < 0 for x in v):
            raise ValueError("sweep norms must be non-negative")
        return v


class BoundarySpec(BaseModel):
    kind: Literal["linear", "trig", "file"] = "linear"
    path: Optional[Path] = None

    @model_validator(mode="after")
    def file_exists(self):
        if self.kind == "file":
            if self.path is None:
                raise ValueError("boundary kind 'file' needs a path")
            if not self.path.exists():
                raise ValueError(f"boundary file {self.path} does not exist")
        return self


class SolverSpec(BaseModel):
    tol: float = Field(1e-10, gt=1e-14, lt=1e-4)
    newton_tol: float = Field(1e-9, gt=0)
    steps: int = Field(8, ge=1)
    newton_max: int = Field(20, ge=1)


class MonitorSpec(BaseModel):
    eps0: float = Field(0.1, gt=0)
    eps1: float = Field(1.0, gt=0)
    max_omega_norm: float = Field(1.0, gt=0)


class ExperimentSpec(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    lambda_: float = Field(0.5, alias="lambda", gt=0, lt=1)
    centers: List[List[float]] = []
    radii: List[float] = [0.125, 0.25]
    exponents: List[float] = []
    directions: int = Field(10, ge=1)
    direction_seed: int = 0
    min_radius_cells: float = Field(4.0, gt=0)

    @field_validator("radii")
    @classmethod
    def radii_in_range(cls, v):
        if any(r <= 0 or r > 0.25 for r in v):
            raise ValueError("experiment radii must lie in (0, 1/4]")
        return v


class StudySpec(BaseModel):
    grids: List[int] = [17, 33, 65]


class RunConfig(BaseModel):
    m: int = Field(3, ge=3, le=5)
    n: int = Field(2, ge=1, le=8)
    N: int = Field(17, ge=9)
    omega: OmegaSpec = OmegaSpec()
    boundary: BoundarySpec = BoundarySpec()
    solver: SolverSpec = SolverSpec()
    monitors: MonitorSpec = MonitorSpec()
    experiment: ExperimentSpec = ExperimentSpec()
    study: StudySpec = StudySpec()
    output_dir: Path = Path("runs/default")

    @field_validator("N")
    @classmethod
    def odd_points(cls, v):
        if v % 2 == 0:
            raise ValueError("N must be odd")
        return v

    @model_validator(mode="after")
    def default_centers(self):
        if not self.experiment.centers:
            offsets = [[0.0] * self.m]
            for d in range(2):
                for sign in (1.0, -1.0):
                    point = [0.0] * self.m
                    point[d] = 0.25 * sign
                    offsets.append(point)
            self.experiment.centers = offsets
        for c in self.experiment.centers:
            if len(c) != self.m:
                raise ValueError(f"center {c} is not a point of R^{self.m}")
            if sum(x * x for x in c) >= 0.25:
                raise ValueError(f"center {c} is not inside B_1/2")
        if not self.experiment.exponents:
            p = self.m / (self.m - 2)
            self.experiment.exponents = [p, p + 0.5, 2 * p]
        if any(g % 2 == 0 or g < 9 for g in self.study.grids):
            raise ValueError("study grids must be odd integers >= 9")
        return self

    def continuation(self) -> ContinuationConfig:
        return ContinuationConfig(
            steps=self.solver.steps,
            newton_tol=self.solver.newton_tol,
            newton_max=self.solver.newton_max,
            eps0_monitor=self.monitors.eps0,
            eps1_monitor=self.monitors.eps1,
            max_omega_norm=self.monitors.max_omega_norm,
            linear_tol=self.solver.tol,
        )
