import enum
from typing import Dict, List, Optional

from pydantic import BaseModel, Field


class StateSource(str, enum.Enum):
    DIRECT = "direct"
    CONSERVATION = "conservation"
    MANUFACTURED = "manufactured"


class SolveReport(BaseModel):
    iterations: int = 0
    relative_residual: float = 0.0
    converged: bool = True
    wall_time: float = Field(0.0, exclude=True)


class ContinuationStep(BaseModel):
    step: int
    t: float
    newton_residuals: List[float]
    linear_iterations: List[int] = []
    w2_P_minus_id: float
    gauge_residual_norm: float
    a3_ratio: Optional[float] = None
    max_U: float


class ContinuationTrace(BaseModel):
    steps: List[ContinuationStep] = []

    @property
    def newton_iterations(self) -> int:
        return sum(len(s.newton_residuals) - 1 for s in self.steps)


class GaugeDiagnostics(BaseModel):
    residual_P: float
    residual_A: float
    dist_A_On: float
    w2_proxy_norms: Dict[str, float]
    continuation_steps: int
    eps0_monitor: float
    newton_residuals: List[List[float]]


class VerificationReport(BaseModel):
    omega_norm: float
    residual_P: float
    residual_A: float
    dist_A_On: float
    dist_Q_On: float
    grad_P_energy: float
    eps0_monitor: float
    eps1_monitor: float
    dist_Q_ratio: Optional[float]
    w2_Q_minus_id: float
    w2_Q_ratio: Optional[float]
    w2_A_minus_id: float
    w2_P_minus_id: float
    harnack_sup: float
    harnack_integral: float
    harnack_ratio: Optional[float]
    gram_defect: float
    s_symmetry_defect: float
    bilinear_ok: bool
    max_principle_sup: float
    subharmonic_min: float
    max_principle_ok: bool
    subharmonic_ok: bool
    psd_min_eigenvalue: float
    steps: int
    newton_residuals: List[List[float]]
    a3_ratios: List[Optional[float]]
    monitors_passed: bool


class SweepRow(BaseModel):
    target_norm: float
    converged: bool
    newton_iterations: int
    residual_A: Optional[float] = None
    dist_A_On: Optional[float] = None
    grad_P_energy: Optional[float] = None
    failure: str = ""


class EquivalenceReport(BaseModel):
    relative_l2_difference: float
    conservation_residual_direct: float
    conservation_residual_conservation: float
    direct: SolveReport
    conservation: SolveReport


class DecayRow(BaseModel):
    center: List[float]
    radius: float
    harmonic_ratio: float
    harmonic_bound: float
    harmonic_ok: bool
    combined_ratio: float
    combined_bound: float
    combined_ok: bool
    phi_fraction: float
    phi_bound_const: Optional[float]
    smallness_lhs: float
    harmonic_defect: float


class DecayReport(BaseModel):
    centers: List[List[float]]
    radii: List[float]
    lambda_: float = Field(alias="lambda")
    exponent: float
    rows: List[DecayRow]
    gamma_per_center: List[Optional[float]]
    gamma_hat: Optional[float]

    model_config = {"populate_by_name": True}


class IntegrabilityRow(BaseModel):
    quantity: str
    parameter: float
    value: float


class StudyRow(BaseModel):
    N: int
    h: float
    residual_A: float
    equivalence_error: float
    conservation_residual: float
    order_residual_A: Optional[float] = None
    order_equivalence: Optional[float] = None
    order_conservation: Optional[float] = None
