"""Pydantic request/response models for the pricing service.

Request sections mirror the config-file sections one to one; unknown keys are
rejected (``extra="forbid"``), mirroring the config parser's behaviour.
"""

from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")

    def section_dict(self):
        return {k: v for k, v in self.model_dump().items() if v is not None}


class ModelSection(_Section):
    family: Literal["linear", "cartea_villaplana"] = "linear"
    # linear-dynamics family
    a: Optional[float] = None
    k: Optional[float] = None
    sigma_f: Optional[float] = None
    delta: Optional[float] = None
    theta: Optional[float] = None
    sigma: Optional[float] = None
    rho: Optional[float] = None
    # Cartea-Villaplana family
    k_c: Optional[float] = None
    k_d: Optional[float] = None
    alpha_c: Optional[float] = None
    alpha_d: Optional[float] = None
    sigma_c: Optional[float] = None
    sigma_d: Optional[float] = None
    eta: Optional[float] = None
    mu_f: Optional[float] = None
    maturities: Optional[List[float]] = None


class ContractSection(_Section):
    kind: Literal["swing", "storage"] = "swing"
    # swing
    strike: Optional[float] = None
    u_max: Optional[float] = None
    m: Optional[float] = None
    big_m: Optional[float] = None
    penalty_scale: Optional[float] = None
    penalty_kind: Optional[Literal["two_sided", "upper_only"]] = None
    clamp: Optional[float] = None
    clamp_phi: Optional[float] = None
    # storage
    k1: Optional[float] = None
    k2: Optional[float] = None
    k3: Optional[float] = None
    z_base: Optional[float] = None
    bleed: Optional[float] = None


_BOUNDARY = Literal["second_derivative_zero", "linear_spot", "one_sided", "expectation"]


class SolverSection(_Section):
    x_min: float
    x_max: float
    n_x: int
    n_z: int
    n_t: int
    z_max: float = 1.0
    n_stored: int = 41
    boundary_x_min: _BOUNDARY = "second_derivative_zero"
    boundary_x_max: _BOUNDARY = "second_derivative_zero"
    x2_min: Optional[float] = None
    x2_max: Optional[float] = None
    n_x2: Optional[int] = None


class RunSection(_Section):
    horizon: float = 1.0
    q: float = 1.0
    gamma: float = 0.01
    seed: int = 0
    probe_t: Optional[float] = None
    probe_x: Optional[float] = None
    probe_z: Optional[float] = None
    sweep_gamma: Optional[List[float]] = None
    sweep_rho: Optional[List[float]] = None
    slice_times: Optional[List[float]] = None


class VerifySection(_Section):
    mode: Literal["dp", "dual", "both"] = "both"
    dp_steps: int = 8
    dp_x: int = 41
    dp_z: int = 17
    dp_u: int = 3
    dp_pi: int = 21
    mc_paths: int = 20000
    mc_steps: int = 200
    x0: Optional[float] = None
    z0: float = 0.0
    tolerance_dp: float = 0.05
    tolerance_dual_rel: float = 0.05


class ExperimentRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    model: ModelSection
    contract: ContractSection
    solver: SolverSection
    run: RunSection = RunSection()
    verify: Optional[VerifySection] = None

    def sections(self):
        out = {
            "model": self.model.section_dict(),
            "contract": self.contract.section_dict(),
            "solver": self.solver.section_dict(),
            "run": self.run.section_dict(),
        }
        if self.verify is not None:
            out["verify"] = self.verify.section_dict()
        return out

    @classmethod
    def from_sections(cls, sections):
        payload = {
            "model": sections.get("model", {}),
            "contract": sections.get("contract", {}),
            "solver": sections.get("solver", {}),
            "run": sections.get("run", {}),
        }
        if "verify" in sections:
            payload["verify"] = sections["verify"]
        return cls(**payload)


class ArtifactModel(BaseModel):
    name: str
    content: str


class RunResponse(BaseModel):
    summary: dict
    artifacts: List[ArtifactModel]
    config_hash: str
    version: str
    wall_time_s: float
    ok: bool = True


class PresetResponse(BaseModel):
    name: str
    config_text: str
    sections: dict


class HealthResponse(BaseModel):
    status: str
    version: str
