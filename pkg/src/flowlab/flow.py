"""Time stepping of the solution flow F_t(x) and the derivative flow T_xF_t(v).

The integrator is the Stratonovich Heun scheme: an Euler predictor followed by
a trapezoidal corrector in both the noise and the drift, which targets the
Stratonovich solution without forming second derivatives or Levy areas.  It is
exact for additive noise with constant drift.  The derivative flow is stepped
with the same predictor as the base point, so the pair scheme is the exact
differential of the base scheme whenever the supplied jacobians are exact.

Common noise: all members of a batch passed to one integration call consume
the same Brownian increments.  That is the flow coupling used everywhere in
flowlab, from curve transport to variance-collapsed finite differences.

Explosion is declared when the model's escape coordinate exceeds a finite
radius (default 1e6) or the state leaves floating-point range; exploded
members are frozen and never updated again.  Stopping times are resolved to
grid points, a bias of order dt.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ContractError
from .geometry import EmbeddedModel, ManifoldModel, vec_norm
from .systems import VectorFieldSystem, as_stratonovich

Array = np.ndarray

DEFAULT_EXPLOSION_RADIUS = 1e6
UNDERFLOW_FLOOR = 1e-300

_U64 = np.uint64


@dataclass(frozen=True)
class StepSchedule:
    """Uniform time grid with step dt and n_steps steps."""

    dt: float
    n_steps: int

    def __post_init__(self):
        if self.dt <= 0 or self.n_steps < 1:
            raise ContractError("schedule needs dt > 0 and n_steps >= 1")

    @property
    def horizon(self) -> float:
        return self.dt * self.n_steps

    def times(self) -> Array:
        return np.arange(self.n_steps + 1) * self.dt

    def step_of_time(self, t: float) -> int:
        return min(self.n_steps, int(round(t / self.dt)))


def schedule_for(t: float, dt: float) -> StepSchedule:
    n = int(round(t / dt))
    if n < 1:
        raise ContractError("horizon shorter than one step")
    return StepSchedule(dt=dt, n_steps=n)


class BrownianDriver:
    """Counter-based Brownian increment source (Philox keyed streams).

    The same (seed, stream, schedule) triple always reproduces bit-identical
    increments, and distinct streams are independent, so assigning stream ids
    by path index gives reproducible parallel Monte Carlo.
    """

    def __init__(self, seed: int, dim: int, stream: int = 0):
        self.seed = int(seed) % 2 ** 64
        self.stream = int(stream) % 2 ** 64
        self.dim = int(dim)

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed, self.stream], dtype=_U64)
        return np.random.Generator(np.random.Philox(key=key))

    def increments(self, sched: StepSchedule) -> Array:
        """Gaussian increments with variance dt, shape (n_steps, dim)."""
        g = self.generator()
        return g.standard_normal((sched.n_steps, self.dim)) * np.sqrt(sched.dt)

    def for_path(self, k: int) -> "BrownianDriver":
        return BrownianDriver(self.seed, self.dim, stream=self.stream + int(k))

    def __repr__(self):
        return f"BrownianDriver(seed={self.seed}, stream={self.stream}, dim={self.dim})"


# ----------------------------------------------------------------------
# stop rules
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class StopRule:
    kind: str
    radius: float = 0.0
    center: Optional[Array] = None
    indicator: Optional[Callable[[Array], Array]] = None
    t: float = 0.0

    def triggered(self, x: Array) -> Array:
        if self.kind == "exit_radius":
            c = 0.0 if self.center is None else np.asarray(self.center, dtype=float)
            return vec_norm(np.asarray(x, dtype=float) - c) > self.radius
        if self.kind == "exit_set":
            return np.asarray(self.indicator(x), dtype=bool)
        if self.kind == "horizon":
            return np.zeros(np.asarray(x).shape[:-1], dtype=bool)
        raise ContractError(f"unknown stop rule {self.kind!r}")


def ExitRadius(radius: float, center=None) -> StopRule:
    return StopRule(kind="exit_radius", radius=float(radius), center=None if center is None else np.asarray(center, dtype=float))


def ExitSet(indicator: Callable[[Array], Array]) -> StopRule:
    return StopRule(kind="exit_set", indicator=indicator)


def Horizon(t: float) -> StopRule:
    return StopRule(kind="horizon", t=float(t))


# ----------------------------------------------------------------------
# stepping kernel
# ----------------------------------------------------------------------

class Stepper:
    """Heun stepping with explosion bookkeeping, shared by every estimator."""

    def __init__(self, system: VectorFieldSystem, r_expl: float = DEFAULT_EXPLOSION_RADIUS,
                 reproject: bool = True):
        self.system = as_stratonovich(system)
        self.model: ManifoldModel = system.model
        self.r_expl = float(r_expl)
        self.embedded = isinstance(self.model, EmbeddedModel) and reproject

    def step_x(self, x: Array, dB: Array, dt: float) -> Array:
        s = self.system
        a0 = s.drift(x)
        b0 = s.diffusion(x, dB)
        xp = x + b0 + a0 * dt
        x1 = x + 0.5 * (b0 + s.diffusion(xp, dB)) + 0.5 * dt * (a0 + s.drift(xp))
        if self.embedded:
            x1 = self.model.retract(x1)
        return x1

    def step_pair(self, x: Array, v: Array, dB: Array, dt: float):
        """Coupled (x, v) step; the v update is the differential of the x update."""
        s = self.system
        a0 = s.drift(x)
        b0 = s.diffusion(x, dB)
        ja0 = s.drift_jacobian(x, v)
        jb0 = s.diffusion_jacobian(x, dB, v)
        xp = x + b0 + a0 * dt
        vp = v + jb0 + ja0 * dt
        x1 = x + 0.5 * (b0 + s.diffusion(xp, dB)) + 0.5 * dt * (a0 + s.drift(xp))
        v1 = v + 0.5 * (jb0 + s.diffusion_jacobian(xp, dB, vp)) \
               + 0.5 * dt * (ja0 + s.drift_jacobian(xp, vp))
        if self.embedded:
            x1 = self.model.retract(x1)
            v1 = self.model.tangent_project(x1, v1)
        return x1, v1

    def classify(self, x: Array):
        """(exploded, domain_exit) masks for candidate states."""
        x = np.asarray(x, dtype=float)
        finite = np.isfinite(x).all(axis=-1)
        with np.errstate(over="ignore", invalid="ignore"):
            esc = np.where(finite, self.model.escape_coordinate(np.where(finite[..., None], x, 0.0)), np.inf)
        exploded = ~finite | (esc > self.r_expl)
        domain_exit = finite & ~self.model.admissible(np.where(finite[..., None], x, 0.0)) & ~exploded
        return exploded, domain_exit


# ----------------------------------------------------------------------
# results
# ----------------------------------------------------------------------

@dataclass
class FlowResult:
    """Recorded trajectory of a common-noise member batch."""

    times: Array                 # (n_steps + 1,)
    states: Array                # (n_steps + 1, B, d)
    exploded: Array              # (B,) bool
    explosion_step: Array        # (B,) int, n_steps + 1 if never
    domain_exit: Array           # (B,) bool
    domain_exit_step: Array      # (B,) int

    @property
    def n_members(self) -> int:
        return self.states.shape[1]

    def final_states(self) -> Array:
        return self.states[-1]


@dataclass
class DerivativeFlowResult(FlowResult):
    mode: str = "direct"
    vs: Optional[Array] = None          # (n_steps + 1, B, d) in direct mode
    log_norms: Optional[Array] = None   # (n_steps + 1, B), natural log of |v_t|
    directions: Optional[Array] = None  # (n_steps + 1, B, d) in log_radial mode
    martingale: Optional[Array] = None  # (n_steps + 1, B) M_t accumulator
    quad_variation: Optional[Array] = None
    drift_accumulator: Optional[Array] = None  # a_t
    underflow_advice: bool = False


def _as_members(x0) -> tuple:
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim == 1:
        return x0[None, :], True
    if x0.ndim == 2:
        return x0, False
    raise ContractError("initial points must be a point or a batch of points")


def integrate_flow(system: VectorFieldSystem, x0, sched: StepSchedule,
                   driver: BrownianDriver, r_expl: float = DEFAULT_EXPLOSION_RADIUS) -> FlowResult:
    """Integrate the flow from one point or a common-noise batch of points.

    NaN or overflow is reported through the explosion flags, never raised.
    """
    if driver.dim != system.noise_dim:
        raise ContractError("driver dimension does not match system noise dimension")
    members, squeeze = _as_members(x0)
    system.model.check_admissible(members)
    stepper = Stepper(system, r_expl=r_expl)
    dW = driver.increments(sched)
    B, d = members.shape
    states = np.empty((sched.n_steps + 1, B, d))
    states[0] = members
    alive = np.ones(B, dtype=bool)
    exploded = np.zeros(B, dtype=bool)
    domain_exit = np.zeros(B, dtype=bool)
    expl_step = np.full(B, sched.n_steps + 1, dtype=int)
    exit_step = np.full(B, sched.n_steps + 1, dtype=int)
    x = members.copy()
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(sched.n_steps):
            x1 = stepper.step_x(x, dW[k], sched.dt)
            bad, out = stepper.classify(x1)
            newly_bad = alive & bad
            newly_out = alive & out
            exploded |= newly_bad
            domain_exit |= newly_out
            expl_step[newly_bad] = k + 1
            exit_step[newly_out] = k + 1
            x = np.where((alive & ~newly_bad)[:, None], x1, x)
            alive = alive & ~newly_bad
            states[k + 1] = x
    return FlowResult(times=sched.times(), states=states, exploded=exploded,
                      explosion_step=expl_step, domain_exit=domain_exit,
                      domain_exit_step=exit_step)


def integrate_derivative_flow(system: VectorFieldSystem, x0, v0, sched: StepSchedule,
                              driver: BrownianDriver, mode: str = "direct",
                              r_expl: float = DEFAULT_EXPLOSION_RADIUS) -> DerivativeFlowResult:
    """Integrate the coupled pair (x_t, v_t = T_xF_t v0).

    direct mode steps v with the linearized Heun scheme.  log_radial mode
    steps the unit direction u_t and log|v_t| together with the exponential
    representation accumulators M_t, <M, M>_t and a_t; it cannot overflow or
    underflow and agrees with direct mode within discretization tolerance.
    """
    if mode not in ("direct", "log_radial"):
        raise ContractError(f"unknown derivative-flow mode {mode!r}")
    members, _ = _as_members(x0)
    vs0, _ = _as_members(v0)
    if vs0.shape != members.shape:
        vs0 = np.broadcast_to(vs0, members.shape).copy()
    system.model.check_admissible(members)
    stepper = Stepper(system, r_expl=r_expl)
    dW = driver.increments(sched)
    B, d = members.shape
    n = sched.n_steps
    states = np.empty((n + 1, B, d))
    states[0] = members
    alive = np.ones(B, dtype=bool)
    exploded = np.zeros(B, dtype=bool)
    domain_exit = np.zeros(B, dtype=bool)
    expl_step = np.full(B, n + 1, dtype=int)
    exit_step = np.full(B, n + 1, dtype=int)
    x = members.copy()

    if mode == "direct":
        vs = np.empty((n + 1, B, d))
        vs[0] = vs0
        v = vs0.copy()
        underflow = False
        with np.errstate(over="ignore", invalid="ignore"):
            for k in range(n):
                x1, v1 = stepper.step_pair(x, v, dW[k], sched.dt)
                bad, out = stepper.classify(x1)
                newly_bad = alive & bad
                newly_out = alive & out
                exploded |= newly_bad
                domain_exit |= newly_out
                expl_step[newly_bad] = k + 1
                exit_step[newly_out] = k + 1
                keep = (alive & ~newly_bad)[:, None]
                x = np.where(keep, x1, x)
                v = np.where(keep, v1, v)
                alive = alive & ~newly_bad
                states[k + 1] = x
                vs[k + 1] = v
        nv = vec_norm(vs[-1])
        nz = vec_norm(vs0) > 0
        if np.any(nz & (nv < UNDERFLOW_FLOOR)):
            underflow = True
        log_norms = np.log(np.maximum(vec_norm(vs), UNDERFLOW_FLOOR))
        return DerivativeFlowResult(times=sched.times(), states=states, exploded=exploded,
                                    explosion_step=expl_step, domain_exit=domain_exit,
                                    domain_exit_step=exit_step, mode=mode, vs=vs,
                                    log_norms=log_norms, underflow_advice=underflow)

    # log_radial
    sys_strat = stepper.system
    n0 = vec_norm(vs0)
    zero_members = n0 == 0.0
    u = np.where(zero_members[:, None], 0.0, vs0 / np.where(n0 == 0.0, 1.0, n0)[:, None])
    L = np.where(zero_members, -np.inf, np.log(np.where(n0 == 0.0, 1.0, n0)))
    logs = np.empty((n + 1, B))
    dirs = np.empty((n + 1, B, d))
    Ms = np.zeros((n + 1, B))
    QVs = np.zeros((n + 1, B))
    As = np.zeros((n + 1, B))
    logs[0] = L
    dirs[0] = u
    M = np.zeros(B)
    QV = np.zeros(B)
    acc = np.zeros(B)
    m = system.noise_dim
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for k in range(n):
            # left-endpoint Ito accumulators for M and <M, M>
            g = np.zeros((B, m))
            for i in range(m):
                e = np.zeros(m)
                e[i] = 1.0
                ji = sys_strat.diffusion_jacobian(x, e, u)
                g[:, i] = np.sum(ji * u, axis=-1)
            dM = np.sum(g * dW[k], axis=-1)
            dQV = np.sum(g * g, axis=-1) * sched.dt
            x1, w = stepper.step_pair(x, u, dW[k], sched.dt)
            nw = vec_norm(w)
            dL = np.where(nw > 0, np.log(np.maximum(nw, UNDERFLOW_FLOOR)), 0.0)
            bad, out = stepper.classify(x1)
            newly_bad = alive & bad
            newly_out = alive & out
            exploded |= newly_bad
            domain_exit |= newly_out
            expl_step[newly_bad] = k + 1
            exit_step[newly_out] = k + 1
            keep = alive & ~newly_bad
            keepc = keep[:, None]
            x = np.where(keepc, x1, x)
            u = np.where(keepc & (nw > 0)[:, None], w / np.where(nw == 0.0, 1.0, nw)[:, None], u)
            L = np.where(keep, L + dL, L)
            M = np.where(keep, M + dM, M)
            QV = np.where(keep, QV + dQV, QV)
            # a_t fills in so that log|v| = log|v0| + M - QV/2 + a holds exactly
            acc = np.where(keep, acc + dL - dM + 0.5 * dQV, acc)
            alive = alive & ~newly_bad
            states[k + 1] = x
            logs[k + 1] = L
            dirs[k + 1] = u
            Ms[k + 1] = M
            QVs[k + 1] = QV
            As[k + 1] = acc
    return DerivativeFlowResult(times=sched.times(), states=states, exploded=exploded,
                                explosion_step=expl_step, domain_exit=domain_exit,
                                domain_exit_step=exit_step, mode=mode,
                                log_norms=logs, directions=dirs, martingale=Ms,
                                quad_variation=QVs, drift_accumulator=As)


# ----------------------------------------------------------------------
# exit times, curve transport
# ----------------------------------------------------------------------

@dataclass
class ExitTimes:
    steps: Array        # per-member first triggering step, n_steps if never
    times: Array
    triggered: Array    # bool per member
    min_step: int       # S^K over the batch
    min_time: float


def exit_time(result: FlowResult, rule: StopRule) -> ExitTimes:
    """First grid step where the rule triggers, per member; horizon if never.

    Explosion counts as having left every bounded set, so an exploded member
    that has not yet triggered the rule triggers at its explosion step.
    """
    n_steps = result.states.shape[0] - 1
    sched_dt = result.times[1] - result.times[0]
    if rule.kind == "horizon":
        step = min(n_steps, int(round(rule.t / sched_dt)))
        steps = np.full(result.n_members, step, dtype=int)
        trig = np.ones(result.n_members, dtype=bool)
    else:
        mask = rule.triggered(result.states)  # (n+1, B)
        expl = result.exploded[None, :] & (np.arange(n_steps + 1)[:, None] >= result.explosion_step[None, :])
        mask = mask | expl
        trig = mask.any(axis=0)
        steps = np.where(trig, mask.argmax(axis=0), n_steps)
    return ExitTimes(steps=steps, times=steps * sched_dt, triggered=trig,
                     min_step=int(steps.min()), min_time=float(steps.min() * sched_dt))


@dataclass(frozen=True)
class CurveSample:
    """Piecewise-C1 curve discretization: nodes, tangents and parameter values."""

    points: Array     # (k, d)
    tangents: Array   # (k, d)
    params: Array     # (k,), nondecreasing

    def __post_init__(self):
        if self.points.shape != self.tangents.shape or self.points.shape[0] != self.params.shape[0]:
            raise ContractError("curve nodes, tangents and params must align")


def segment_curve(a, b, n_nodes: int) -> CurveSample:
    """Straight segment from a to b sampled at n_nodes, arclength parametrized."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    s = np.linspace(0.0, 1.0, n_nodes)
    pts = a[None, :] + s[:, None] * (b - a)[None, :]
    length = float(vec_norm(b - a))
    tangents = np.tile((b - a) / (length if length else 1.0), (n_nodes, 1))
    return CurveSample(points=pts, tangents=tangents, params=s * length)


@dataclass
class TransportResult:
    image_points: Array
    image_tangents: Array
    length: float
    initial_length: float
    exploded_node: Optional[int]
    min_puncture_distance: Optional[float]


def transport_curve(system: VectorFieldSystem, curve: CurveSample, sched: StepSchedule,
                    driver: BrownianDriver, r_expl: float = DEFAULT_EXPLOSION_RADIUS) -> TransportResult:
    """Transport a sampled curve by the flow and its tangents by the derivative
    flow under one shared driver; the image length is the quadrature of
    |T F_t(sigma'(s))| over the curve parameter."""
    res = integrate_derivative_flow(system, curve.points, curve.tangents, sched, driver,
                                    mode="direct", r_expl=r_expl)
    xT = res.states[-1]
    vT = res.vs[-1]
    model = system.model
    init_speed = np.array([model.metric_norm(curve.points[i], curve.tangents[i])
                           for i in range(curve.points.shape[0])], dtype=float)
    initial_length = float(np.trapezoid(init_speed, curve.params))
    exploded_node = None
    if np.any(res.exploded):
        exploded_node = int(np.argmax(res.exploded))
        length = float("inf")
    else:
        speed = np.array([model.metric_norm(xT[i], vT[i]) for i in range(xT.shape[0])], dtype=float)
        length = float(np.trapezoid(speed, curve.params))
    min_punct = None
    if hasattr(model, "puncture_distance"):
        min_punct = float(np.min(model.puncture_distance(res.states)))
    return TransportResult(image_points=xT, image_tangents=vT, length=length,
                           initial_length=initial_length, exploded_node=exploded_node,
                           min_puncture_distance=min_punct)


# ----------------------------------------------------------------------
# CSV trajectory dump
# ----------------------------------------------------------------------

def write_trajectory_csv(fh, results, include_v: bool = False) -> None:
    """RFC-4180 dump of one FlowResult per path id.

    Header: path_id, step, time, state components, v components (optional),
    exploded flag.
    """
    import csv

    writer = csv.writer(fh)
    first = results[0]
    d = first.states.shape[-1]
    head = ["path_id", "step", "time"] + [f"x{i+1}" for i in range(d)]
    if include_v:
        head += [f"v{i+1}" for i in range(d)]
    head.append("exploded")
    writer.writerow(head)
    for pid, res in enumerate(results):
        n = res.states.shape[0]
        for k in range(n):
            row = [pid, k, repr(float(res.times[k]))]
            row += [repr(float(c)) for c in res.states[k, 0]]
            if include_v:
                row += [repr(float(c)) for c in res.vs[k, 0]]
            row.append(int(res.exploded[0] and k >= res.explosion_step[0]))
            writer.writerow(row)
