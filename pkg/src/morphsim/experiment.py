"""Turn a :class:`~morphsim.config.ScenarioConfig` into runs.

``build_scenario`` resolves a configuration into a simulator
:class:`~morphsim.simulator.Scenario` (certificate included).  ``run_config``
executes it; for passage scenarios it first flies the unswitched approach,
schedules the fold at the passage entrance from that run's attitude errors
and then flies the switched mission.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import analysis as an
from . import controllers as ctl
from . import planner as pl
from .config import ScenarioConfig
from .errors import ConfigInvalid, MorphsimError, NotSettled
from .rigid_body import Configuration, DisturbanceModel, SwitchingSignal, diag_offset
from .simulator import AttitudeReference, PositionLoop, Scenario, SimLog, run
from .so3 import GainSet, exp_so3


def configurations(cfg: ScenarioConfig) -> list:
    out = []
    for k, c in enumerate(cfg.vehicle.configurations):
        nominal = np.asarray(c.nominal, dtype=float)
        if c.true is not None:
            true = np.asarray(c.true, dtype=float)
        elif c.offset is not None:
            true = nominal + diag_offset(c.offset)
        else:
            true = nominal.copy()
        try:
            out.append(Configuration(c.index, true, nominal, c.lambda_min, c.lambda_max))
        except (ValueError, MorphsimError) as exc:
            raise ConfigInvalid(str(exc), f"vehicle.configurations[{k}]") from None
    return out


def certificate_case(cfg: ScenarioConfig):
    case = cfg.controller.case
    if case == "known":
        return "known"
    if case in ("adaptive", "robust"):
        return "adaptive"
    return None


def gain_set(cfg: ScenarioConfig, cfgs=None) -> GainSet:
    """Gains with ``c`` resolved; ``c`` left unset picks :func:`analysis.best_c`."""
    g = cfg.gains
    if g.c is not None:
        return GainSet(g.k_R, g.k_Omega, g.c, tuple(g.G))
    cfgs = cfgs if cfgs is not None else configurations(cfg)
    case = certificate_case(cfg) or "known"
    probe = GainSet(g.k_R, g.k_Omega, 1.0, tuple(g.G))
    c = an.best_c(cfgs, probe, case, phi_level=g.phi_level)
    return GainSet(g.k_R, g.k_Omega, c, tuple(g.G))


def certify(cfg: ScenarioConfig, cfgs=None, gains=None):
    """Certificate matching the configured controller (``None`` for the baseline)."""
    cfgs = cfgs if cfgs is not None else configurations(cfg)
    gains = gains if gains is not None else gain_set(cfg, cfgs)
    case = certificate_case(cfg)
    level = cfg.gains.phi_level
    if case == "known":
        return an.certify_case1(cfgs, gains, phi_level=level)
    if case == "adaptive":
        return an.certify_case2(cfgs, gains, phi_level=level, layout=cfg.monitors.layout)
    return None


def dwell_time(cfg: ScenarioConfig, cfgs=None) -> float:
    """Known-model dwell time for the configured family and gains.

    Used as the planner's dwell-time floor; ``c`` is chosen to minimise it
    unless the configuration pins it.
    """
    if cfg.switching.tau_d is not None:
        return cfg.switching.tau_d
    cfgs = cfgs if cfgs is not None else configurations(cfg)
    g = cfg.gains
    probe = GainSet(g.k_R, g.k_Omega, 1.0, tuple(g.G))
    c = an.best_c(cfgs, probe, "known", phi_level=g.phi_level)
    return an.certify_case1(cfgs, GainSet(g.k_R, g.k_Omega, c, tuple(g.G)),
                            phi_level=g.phi_level).tau_d


def robust_params(cfg: ScenarioConfig, dist: DisturbanceModel):
    r = cfg.controller.robust
    if r is None:
        if cfg.controller.case in ("robust", "robust_baseline"):
            return ctl.RobustParams(delta_R=dist.delta_R)
        return None
    delta = dist.delta_R if r.delta_R is None else r.delta_R
    return ctl.RobustParams(delta, r.eta, r.eta_policy, r.gamma, r.eta_max, r.epsilon_smooth,
                            r.sign, r.law, r.nu)


def disturbance(cfg: ScenarioConfig) -> DisturbanceModel:
    d = cfg.disturbance
    try:
        return DisturbanceModel(d.kind, d.amplitude, d.frequency, d.phase, d.table, d.delta_R)
    except ValueError as exc:
        raise ConfigInvalid(str(exc), "disturbance") from None


def initial_error(cfg: ScenarioConfig) -> np.ndarray:
    ini = cfg.initial
    if ini.random_error_angle is None:
        return np.asarray(ini.attitude_error, dtype=float)
    rng = np.random.default_rng(cfg.integration.seed)
    axis = rng.normal(size=3)
    return ini.random_error_angle * axis / np.linalg.norm(axis)


def position_reference(cfg: ScenarioConfig, tau_s=0.0, tau_d=0.0):
    ref = cfg.reference
    if ref.kind == "waypoint":
        return pl.waypoint_reference(ref.r_des)
    req = pl.PlannerRequest(tuple(ref.r_des), tuple(ref.v_des), tau_s, tau_d)
    return pl.MinJerkReference(pl.min_jerk(req, ref.tau))


def build_scenario(cfg: ScenarioConfig, signal=None, tau_s=0.0, tau_d=0.0,
                   reference=None, hover=False) -> Scenario:
    """Resolve ``cfg`` into a runnable scenario.

    ``signal`` overrides the configured switching; ``hover`` replaces a
    position reference by station keeping at the start point (used to
    measure the settling time).
    """
    cfgs = configurations(cfg)
    gains = gain_set(cfg, cfgs)
    cert = certify(cfg, cfgs, gains)
    dist = disturbance(cfg)
    sw = cfg.switching
    if signal is None:
        if sw.mode == "signal":
            try:
                signal = SwitchingSignal([(t, p) for t, p in sw.breakpoints], {c.index for c in cfgs})
            except ValueError as exc:
                raise ConfigInvalid(str(exc), "switching.breakpoints") from None
        else:
            signal = SwitchingSignal.constant(sw.outside)
    ref = cfg.reference
    att_ref = pos_loop = None
    if ref.kind in ("hold", "sinusoid", "chirp"):
        att_ref = AttitudeReference(ref.kind, exp_so3(ref.attitude0), tuple(ref.amplitude),
                                    tuple(ref.frequency), tuple(ref.phase), ref.w0, ref.w1,
                                    ref.sweep_time)
    else:
        if hover:
            reference = pl.waypoint_reference(cfg.initial.pos)
        elif reference is None:
            reference = position_reference(cfg, tau_s, tau_d)
        pos_loop = PositionLoop(reference, ref.yaw, ref.k_x, ref.k_v)
    plan = None
    if cert is not None and cert.case == "adaptive":
        plan = an.SwitchPlan(tau_s, sw.rho)
    try:
        return Scenario(
            configurations=cfgs, gains=gains, controller=cfg.controller.case, signal=signal,
            mass=cfg.vehicle.mass, robust=robust_params(cfg, dist),
            adaptation_gain=cfg.controller.adaptation_gain, disturbance=dist,
            attitude_reference=att_ref, position_loop=pos_loop,
            attitude_error0=tuple(initial_error(cfg)), Omega0=tuple(cfg.initial.Omega),
            pos0=tuple(cfg.initial.pos), vel0=tuple(cfg.initial.vel),
            dt=cfg.integration.dt, horizon=cfg.integration.horizon,
            log_every=cfg.integration.log_every, certificate=cert, switch_plan=plan,
            monitor_tol=cfg.monitors.tol, name=cfg.name,
        )
    except ValueError as exc:
        raise ConfigInvalid(str(exc)) from None


@dataclass
class RunResult:
    log: SimLog
    scenario: Scenario
    schedule: pl.ScheduleResult | None = None
    approach: SimLog | None = None
    info: dict = field(default_factory=dict)

    @property
    def violations(self):
        return self.log.violations


def settling_time(cfg: ScenarioConfig) -> float:
    """Settling time of the configured initial attitude error while hovering."""
    if cfg.switching.tau_s is not None:
        return cfg.switching.tau_s
    sc = build_scenario(cfg, hover=True)
    return an.estimate_settling_time(sc, cfg.switching.rho)


def arrival_time(log: SimLog, r_des, tol) -> float:
    """First logged time with ``|pos - r_des| <= tol``."""
    pos = log.data[:, [log._index[c] for c in ("pos_x", "pos_y", "pos_z")]]
    d = np.linalg.norm(pos - np.asarray(r_des, dtype=float), axis=1)
    hit = np.nonzero(d <= tol)[0]
    if hit.size == 0:
        raise NotSettled(f"the vehicle never came within {tol} m of the passage entrance")
    return float(log.t[hit[0]])


def plan_mission(cfg: ScenarioConfig):
    """Planner-level view of a passage scenario: ``(reference, tau_s, tau_d)``.

    Raises :class:`~morphsim.errors.DurationTooShort` when a pinned
    duration undercuts ``max(tau_s, tau_d)``.
    """
    tau_d = dwell_time(cfg)
    tau_s = settling_time(cfg)
    if cfg.reference.kind == "waypoint":
        return pl.waypoint_reference(cfg.reference.r_des), tau_s, tau_d
    return position_reference(cfg, tau_s, tau_d), tau_s, tau_d


def run_config(cfg: ScenarioConfig) -> RunResult:
    """Run a configuration end to end.

    For ``switching.mode = "schedule"`` this raises
    :class:`~morphsim.errors.SettlingViolation` or
    :class:`~morphsim.errors.DwellViolation` when the fold cannot be placed
    legally; the exception carries the approach log as ``approach``.
    """
    if cfg.switching.mode == "signal":
        sc = build_scenario(cfg)
        return RunResult(run(sc), sc)
    reference, tau_s, tau_d = plan_mission(cfg)
    sc1 = build_scenario(cfg, reference=reference, tau_s=tau_s, tau_d=tau_d)
    approach = run(sc1)
    sw = cfg.switching
    # a planned segment fixes the entrance time; a step command is timed by
    # when the vehicle actually gets there
    t_enter = getattr(reference, "arrival_time", None)
    if t_enter is None:
        t_enter = arrival_time(approach, cfg.reference.r_des, sw.arrival_tolerance)
    passage = pl.Passage(t_enter, t_enter + sw.passage_duration, sw.inside, sw.outside)
    info = {"tau_s": tau_s, "tau_d": tau_d, "t_enter": t_enter, "rho": sw.rho,
            "z1_at_enter": approach.z1_at(t_enter), "reference": reference.describe()}
    plan = an.SwitchPlan(tau_s, sw.rho)
    try:
        sched = pl.schedule_switch(plan, sc1.certificate, passage, approach.z1_at, tau_d=tau_d)
    except Exception as exc:
        exc.approach = approach
        exc.info = info
        raise
    sc2 = build_scenario(cfg, signal=sched.signal, reference=reference, tau_s=tau_s, tau_d=tau_d)
    log = run(sc2)
    info["signal"] = sched.signal.breakpoints
    return RunResult(log, sc2, sched, approach, info)
