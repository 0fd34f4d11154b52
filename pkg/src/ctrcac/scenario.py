"""Declarative scenarios: schema, loading, presets and system construction.

Scenario files are YAML.  Every section is validated against a strict
schema (unknown keys are errors) and all defaults are filled in, so the
resolved scenario can be echoed and reloaded to reproduce a run exactly.

Top-level ``parameterization`` and ``hyperparameters`` apply to every loop
of the architecture; ``loops`` overrides individual fields per loop name
(``loop`` for the single-loop architectures, ``r1``/``r2``/``roll`` for the
bicopter, ``roll``/``pitch``/``yaw`` for the attitude stack).
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path
from typing import Annotated, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .architectures import (
    AdaptiveLoop,
    AttitudeStack,
    BicopterAutopilot,
    CascadedPpiLoop,
    FsfiLoop,
    ServoLoop,
)
from .core import Dimensions, FilterRealization, Hyperparameters
from .plants import GRAVITY, Bicopter, DoubleIntegrator, RigidBody
from .regressors import regressor_size
from .simulate import SimConfig
from .validation import ConfigurationError

Matrix = Union[float, List[List[float]]]

LOOP_NAMES = {
    "servo": ["loop"],
    "ppi": ["loop"],
    "fsfi": ["loop"],
    "bicopter_autopilot": ["r1", "r2", "roll"],
    "attitude_stack": ["roll", "pitch", "yaw"],
}
PLANT_FOR = {
    "servo": "double_integrator",
    "ppi": "double_integrator",
    "fsfi": "double_integrator",
    "bicopter_autopilot": "bicopter",
    "attitude_stack": "rigid_body",
}
REFERENCE_FOR = {
    "double_integrator": "step",
    "bicopter": "ellipse",
    "rigid_body": "constant_attitude",
}


class ScenarioError(Exception):
    exit_code = 1


class ScenarioParseError(ScenarioError):
    """Unreadable YAML or a schema violation."""

    exit_code = 2


class ScenarioSemanticError(ScenarioError):
    """Schema-valid but inconsistent scenario, e.g. FSFI inside the bicopter autopilot."""

    exit_code = 3


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DoubleIntegratorPlant(_Strict):
    kind: Literal["double_integrator"]
    initial_state: List[float] = [0.0, 0.0]


class BicopterPlant(_Strict):
    kind: Literal["bicopter"]
    m: float = Field(1.5, gt=0)
    J: float = Field(0.03, gt=0)
    g: float = GRAVITY
    initial_state: List[float] = [0.0] * 6


class RigidBodyPlant(_Strict):
    kind: Literal["rigid_body"]
    J: Union[List[float], List[List[float]]] = [0.02, 0.02, 0.035]
    tau_dist: List[float] = [0.05, 0.05, 0.0]
    initial_angles_deg: List[float] = [0.0, 0.0, 0.0]
    initial_rates: List[float] = [0.0, 0.0, 0.0]


PlantSection = Annotated[
    Union[DoubleIntegratorPlant, BicopterPlant, RigidBodyPlant], Field(discriminator="kind")
]


class ArchitectureSection(_Strict):
    kind: Literal["servo", "ppi", "fsfi", "bicopter_autopilot", "attitude_stack"]
    gravity_ff: bool = True
    u_limit: float = Field(0.0, ge=0)


class ParameterizationSection(_Strict):
    kind: Literal["tf", "pid", "ppi", "fsfi"]
    order: int = Field(2, ge=1)
    deriv_mode: Literal["measured", "filtered"] = "measured"
    eps: float = Field(0.01, gt=0)
    k_outer: float = Field(1.0, gt=0)


class FilterSection(_Strict):
    A: List[List[float]]
    B: List[List[float]]
    C: List[List[float]]
    D: List[List[float]]


class HyperparameterSection(_Strict):
    P0: Optional[float] = Field(None, gt=0)
    P0_role: Literal["weight", "covariance"] = "weight"
    R_theta: Optional[List[List[float]]] = None
    R_z: Matrix = 1.0
    R_u: Matrix = 0.0
    p_f: Optional[float] = Field(None, gt=0)
    filter: Optional[FilterSection] = None

    @model_validator(mode="after")
    def _one_of_each(self):
        if (self.P0 is None) == (self.R_theta is None):
            raise ValueError("give exactly one of P0 or R_theta")
        if (self.p_f is None) == (self.filter is None):
            raise ValueError("give exactly one of p_f or filter")
        return self


class LoopOverride(_Strict):
    parameterization: Dict[str, Union[str, int, float]] = {}
    hyperparameters: Dict[str, Union[str, float, List[List[float]], None, Dict]] = {}


class StepReference(_Strict):
    kind: Literal["step"]
    value: float = 1.0
    t_step: float = 0.0


class EllipseReference(_Strict):
    kind: Literal["ellipse"]
    a: float = 5.0
    b: float = 3.0
    phi_deg: float = 45.0
    omega: float = Field(0.1, gt=0)


class AttitudeReference(_Strict):
    kind: Literal["constant_attitude"]
    angles_deg: List[float] = [0.0, 0.0, 0.0]


ReferenceSection = Annotated[
    Union[StepReference, EllipseReference, AttitudeReference], Field(discriminator="kind")
]


class SimSection(_Strict):
    dt: float = Field(1e-3, gt=0)
    T: float = Field(50.0, gt=0)
    integrator: Literal["rk4", "euler"] = "rk4"
    log_decimation: int = Field(10, ge=1)
    record_oracle: bool = True
    seed: int = 0


class OutputsSection(_Strict):
    dir: Optional[str] = None
    plot_script: bool = False


class TuneSection(_Strict):
    log10_P0: Tuple[float, float] = (-4.0, 4.0)
    p_f: Tuple[float, float] = (0.1, 10.0)
    swarm_size: int = Field(5, ge=2)
    iterations: int = Field(30, ge=0)
    inertia: float = Field(0.729, gt=0, lt=1)
    c1: float = Field(1.49445, gt=0)
    c2: float = Field(1.49445, gt=0)


class Scenario(_Strict):
    name: str = "scenario"
    description: str = ""
    plant: PlantSection
    architecture: ArchitectureSection
    parameterization: ParameterizationSection
    hyperparameters: HyperparameterSection
    loops: Dict[str, LoopOverride] = {}
    reference: ReferenceSection
    sim: SimSection = SimSection()
    outputs: OutputsSection = OutputsSection()
    tune: TuneSection = TuneSection()

    def echo(self):
        """Resolved scenario as plain data (all defaults filled)."""
        return self.model_dump(mode="json")

    def to_yaml(self):
        return yaml.safe_dump(self.echo(), sort_keys=False)

    def sim_config(self):
        s = self.sim
        return SimConfig(dt=s.dt, T=s.T, integrator=s.integrator,
                         log_decimation=s.log_decimation, record_oracle=s.record_oracle)

    def with_hyperparameters(self, P0=None, p_f=None):
        """Copy with ``P0`` and/or ``p_f`` set on every loop (used by the tuner)."""
        data = self.echo()
        for section in [data["hyperparameters"]] + [
            lo["hyperparameters"] for lo in data["loops"].values()
        ]:
            if P0 is not None:
                section["P0"] = float(P0)
                section["R_theta"] = None
            if p_f is not None:
                section["p_f"] = float(p_f)
                section["filter"] = None
        data["loops"] = {
            k: {kk: {f: v for f, v in vv.items() if v is not None} for kk, vv in lo.items()}
            for k, lo in data["loops"].items()
        }
        return Scenario.model_validate(data)


# --- loading ----------------------------------------------------------------


def scenario_json_schema():
    """JSON schema of scenario files (also shipped as ``schema/scenario.schema.json``)."""
    return Scenario.model_json_schema()


def preset_names():
    root = resources.files("ctrcac") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def _preset_text(name):
    return (resources.files("ctrcac") / "presets" / f"{name}.yaml").read_text()


def _node_line(root, loc):
    """1-based YAML line of the deepest node reachable along ``loc``."""
    node, line = root, None
    for key in loc:
        if node is None:
            break
        line = node.start_mark.line + 1
        nxt = None
        if isinstance(node, yaml.MappingNode):
            # union tags (e.g. the plant kind) appear in loc but not in the file
            nxt = node
            for k, v in node.value:
                if k.value == str(key):
                    line, nxt = k.start_mark.line + 1, v
                    break
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            nxt = node.value[key]
        node = nxt
    return line


def _format_validation(exc, root=None):
    lines = []
    for err in exc.errors():
        loc = err["loc"]
        path = ".".join(str(p) for p in loc) or "<root>"
        line = _node_line(root, loc) if root is not None else None
        where = f"line {line}: " if line else ""
        lines.append(f"{where}{path}: {err['msg']}")
    return "; ".join(lines)


def parse_scenario(text, source="<string>"):
    """Parse and schema-validate YAML text; also checks cross-section consistency."""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ScenarioParseError(f"{source}: invalid YAML{where}: {exc}") from None
    if not isinstance(data, dict):
        raise ScenarioParseError(f"{source}: top level must be a mapping")
    try:
        scn = Scenario.model_validate(data)
    except ValidationError as exc:
        root = yaml.compose(text)
        raise ScenarioParseError(f"{source}: {_format_validation(exc, root)}") from None
    try:
        build_system(scn)
        scn.sim_config()
    except ConfigurationError as exc:
        raise ScenarioSemanticError(f"{source}: {exc}") from None
    return scn


def load_scenario(path):
    """Load a scenario file, or a bundled preset by name."""
    p = Path(path)
    if not p.exists():
        name = str(path)
        if name in preset_names():
            return parse_scenario(_preset_text(name), source=f"preset {name}")
        raise FileNotFoundError(f"no scenario file or preset named {path!r}")
    try:
        text = p.read_text()
    except OSError as exc:
        raise FileNotFoundError(str(exc)) from exc
    return parse_scenario(text, source=str(p))


# --- construction -----------------------------------------------------------


def _matrix(value, n, name):
    M = np.asarray(value, dtype=float)
    if M.ndim == 0:
        return float(M) * np.eye(n)
    if M.shape != (n, n):
        raise ConfigurationError(f"{name} must be {n}x{n}, got {M.shape}")
    return M


def _loop_config(scn, loop_name):
    par = scn.parameterization.model_dump()
    hyp = scn.hyperparameters.model_dump()
    over = scn.loops.get(loop_name)
    if over is not None:
        par.update(over.parameterization)
        for key, val in over.hyperparameters.items():
            hyp[key] = val
            if key == "P0":
                hyp["R_theta"] = None
            elif key == "R_theta":
                hyp["P0"] = None
            elif key == "p_f":
                hyp["filter"] = None
            elif key == "filter":
                hyp["p_f"] = None
    try:
        par = ParameterizationSection.model_validate(par)
        hyp = HyperparameterSection.model_validate(hyp)
    except ValidationError as exc:
        raise ConfigurationError(f"loop {loop_name!r}: {_format_validation(exc)}") from None
    return par, hyp


def build_loop(par, hyp, n_x=2, record_oracle=True):
    n_theta = regressor_size(par.kind, par.order, n_x)
    dims = Dimensions(1, 1, n_theta)
    if hyp.P0 is not None:
        hp = Hyperparameters.from_scalars(dims, hyp.P0, p0_role=hyp.P0_role)
        R_theta = hp.R_theta
    else:
        R_theta = _matrix(hyp.R_theta, n_theta, "R_theta")
    hp = Hyperparameters(R_z=_matrix(hyp.R_z, 1, "R_z"), R_u=_matrix(hyp.R_u, 1, "R_u"), R_theta=R_theta)
    if hyp.p_f is not None:
        filt = FilterRealization.first_order(hyp.p_f)
    else:
        f = hyp.filter
        filt = FilterRealization(A_f=f.A, B_f=f.B, C_f=f.C, D_f=f.D)
    return AdaptiveLoop(
        kind=par.kind, hp=hp, filt=filt, order=par.order, n_x=n_x,
        deriv_mode=par.deriv_mode, eps=par.eps, k_outer=par.k_outer,
        record_oracle=record_oracle,
    )


def build_system(scn):
    """Closed-loop system described by a validated scenario.

    Raises
    ------
    ConfigurationError
        For inconsistent combinations of plant, architecture, loops and
        reference.
    """
    arch = scn.architecture.kind
    plant_cfg, ref = scn.plant, scn.reference
    if plant_cfg.kind != PLANT_FOR[arch]:
        raise ConfigurationError(f"architecture {arch!r} needs a {PLANT_FOR[arch]!r} plant, got {plant_cfg.kind!r}")
    if ref.kind != REFERENCE_FOR[plant_cfg.kind]:
        raise ConfigurationError(f"plant {plant_cfg.kind!r} needs a {REFERENCE_FOR[plant_cfg.kind]!r} reference")
    unknown = set(scn.loops) - set(LOOP_NAMES[arch])
    if unknown:
        raise ConfigurationError(f"unknown loop names {sorted(unknown)} for {arch!r} (expected {LOOP_NAMES[arch]})")
    rec = scn.sim.record_oracle
    loops = [build_loop(*_loop_config(scn, n), record_oracle=rec) for n in LOOP_NAMES[arch]]

    if plant_cfg.kind == "double_integrator":
        cls = {"servo": ServoLoop, "ppi": CascadedPpiLoop, "fsfi": FsfiLoop}[arch]
        return cls(loops[0], plant=DoubleIntegrator(), step=ref.value, step_time=ref.t_step,
                   u_limit=scn.architecture.u_limit, x0_plant=plant_cfg.initial_state)
    if plant_cfg.kind == "bicopter":
        plant = Bicopter(m=plant_cfg.m, J=plant_cfg.J, g=plant_cfg.g)
        ellipse = (ref.a, ref.b, np.radians(ref.phi_deg), ref.omega)
        return BicopterAutopilot(*loops, plant=plant, ellipse=ellipse,
                                 gravity_ff=scn.architecture.gravity_ff,
                                 x0_plant=plant_cfg.initial_state)
    if len(plant_cfg.tau_dist) != 3 or len(plant_cfg.initial_angles_deg) != 3 or len(plant_cfg.initial_rates) != 3:
        raise ConfigurationError("rigid-body vectors must have three components")
    if len(ref.angles_deg) != 3:
        raise ConfigurationError("attitude reference must have three angles")
    plant = RigidBody(J=plant_cfg.J, tau_dist=plant_cfg.tau_dist)
    x0 = np.concatenate([np.radians(plant_cfg.initial_angles_deg), plant_cfg.initial_rates])
    return AttitudeStack(loops, plant=plant, reference=np.radians(ref.angles_deg),
                         u_limit=scn.architecture.u_limit, x0_plant=x0)
