"""Monte Carlo estimation of the moment functionals: derivative-flow moments
over compact grids, stopped moments on radius ladders, exponential functionals
with their convexity companion bound, radial moments against user-supplied
envelopes, and the moment-exponent regression.

Conventions shared by every estimator here:

  * path k uses the Brownian stream (seed, stream0 + k); results are therefore
    deterministic for a given seed and independent of worker count;
  * all members of a compact grid ride the same increments per path (common
    noise), which is what sup-over-K quantities require;
  * time integrals are left-endpoint Riemann sums on the step grid and
    stopping times are resolved to grid points (bias O(dt));
  * the derivative flow is tracked in log scale through a transported tangent
    frame, so norms never overflow; |T_xF_t| means the operator norm of the
    frame matrix;
  * sup over a compact set means max over the finite grid supplied by the
    caller, with the grid recorded in the result.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .criteria import direction_sample
from .errors import CapabilityError, ContractError
from .flow import BrownianDriver, StepSchedule, Stepper, schedule_for
from .geometry import CurvatureData, EmbeddedModel, vec_norm
from .parallel import run_chunks
from .systems import VectorFieldSystem

Array = np.ndarray

Z95 = 1.959963984540054

EXP_OVERFLOW = 700.0


@dataclass
class MomentEstimate:
    """Monte Carlo mean with its normal confidence interval and diagnostics.

    ``truncated`` counts paths that hit the explosion radius; sup-type
    functionals are then lower bounds only.  When ``log_space`` is set, value
    is the natural log of the estimate and se is the relative standard error.
    """

    value: float
    se: float
    n_paths: int
    seed: int
    confidence: float = 0.95
    truncated: int = 0
    log_space: bool = False
    lower_bound_only: bool = False
    invalid: bool = False
    extra: dict = field(default_factory=dict)

    def ci(self):
        return (self.value - Z95 * self.se, self.value + Z95 * self.se)

    def to_dict(self):
        lo, hi = self.ci()
        out = {
            "value": self.value, "se": self.se, "ci": [lo, hi],
            "n_paths": self.n_paths, "confidence": self.confidence,
            "truncated": self.truncated, "seed": self.seed,
            "log_space": self.log_space,
        }
        if self.lower_bound_only:
            out["lower_bound_only"] = True
        if self.invalid:
            out["invalid"] = True
        if self.extra:
            out["extra"] = self.extra
        return out


def _mean_estimate(values: Array, seed: int, truncated: int = 0, **kw) -> MomentEstimate:
    values = np.asarray(values, dtype=float)
    n = values.size
    value = float(np.mean(values))
    se = float(np.std(values) / np.sqrt(n)) if n > 1 else 0.0
    return MomentEstimate(value=value, se=se, n_paths=n, seed=seed,
                          truncated=truncated, invalid=not np.isfinite(value), **kw)


def _estimate_from_exponents(expo: Array, seed: int, truncated: int = 0) -> MomentEstimate:
    """Mean of exp(expo) with log-space fallback past the overflow threshold."""
    expo = np.asarray(expo, dtype=float)
    n = expo.size
    mx = float(np.max(expo))
    if mx <= EXP_OVERFLOW:
        return _mean_estimate(np.exp(expo), seed, truncated)
    shifted = np.exp(expo - mx)
    m = float(np.mean(shifted))
    log_value = mx + float(np.log(m))
    rel_se = float(np.std(shifted) / (m * np.sqrt(n)))
    return MomentEstimate(value=log_value, se=rel_se, n_paths=n, seed=seed,
                          truncated=truncated, log_space=True)


def _chunk_increments(driver: BrownianDriver, lo: int, hi: int, sched: StepSchedule) -> Array:
    out = np.empty((hi - lo, sched.n_steps, driver.dim))
    for k in range(lo, hi):
        out[k - lo] = driver.for_path(k).increments(sched)
    return out


def _grid_array(grid) -> Array:
    g = np.asarray(grid, dtype=float)
    if g.ndim == 1:
        g = g[None, :]
    if g.ndim != 2:
        raise ContractError("grid must be a point or an array of points")
    return g


def _grid_frames(system: VectorFieldSystem, grid: Array) -> Array:
    """Orthonormal initial frame per grid point, shape (G, k, d)."""
    model = system.model
    G, d = grid.shape
    if isinstance(model, EmbeddedModel):
        frames = np.stack([model.tangent_frame(grid[g]).T for g in range(G)])
    else:
        frames = np.broadcast_to(np.eye(d), (G, d, d)).copy()
    return frames


def _log_opnorm(L: Array, U: Array) -> Array:
    """log operator norm of the frame with log-lengths L (..., k) and unit
    directions U (..., k, d); overflow-safe via the shifted Gram matrix."""
    k = L.shape[-1]
    if k == 1:
        return L[..., 0]
    Lm = L.max(axis=-1, keepdims=True)
    s = np.exp(L - Lm)
    W = s[..., None] * U
    G = np.einsum("...ki,...li->...kl", W, W)
    lam = np.linalg.eigvalsh(G)[..., -1]
    return Lm[..., 0] + 0.5 * np.log(np.maximum(lam, 1e-300))


class _FrameScan:
    """Stream the coupled (x, frame) evolution for one chunk of paths.

    State shapes: x (C, G, d); per-member log-lengths L (C, G, k) and unit
    directions U (C, G, k, d).  Members are frozen once exploded.
    """

    def __init__(self, system: VectorFieldSystem, grid: Array, sched: StepSchedule,
                 driver: BrownianDriver, lo: int, hi: int, r_expl: float = 1e6):
        self.system = system
        self.model = system.model
        self.sched = sched
        self.stepper = Stepper(system, r_expl=r_expl)
        self.dW = _chunk_increments(driver, lo, hi, sched)
        C = hi - lo
        G, d = grid.shape
        frames = _grid_frames(system, grid)           # (G, k, d)
        k = frames.shape[1]
        self.C, self.G, self.k, self.d = C, G, k, d
        self.x = np.broadcast_to(grid, (C, G, d)).copy()
        self.U = np.broadcast_to(frames, (C, G, k, d)).copy()
        self.L = np.zeros((C, G, k))
        self.alive = np.ones((C, G), dtype=bool)
        self.base_offset = self._metric_offset(self.x)

    def _metric_offset(self, x):
        return np.asarray(self.model.log_metric_factor(x))

    def log_frame_opnorm(self) -> Array:
        """(C, G) log of |T F| in the model metric, relative to the start."""
        return _log_opnorm(self.L, self.U) + self._metric_offset(self.x) - self.base_offset

    def step(self, i: int) -> None:
        dB = self.dW[:, i][:, None, None, :]           # (C, 1, 1, m)
        xk = self.x[:, :, None, :]                     # broadcast x over the frame
        xb = np.broadcast_to(xk, self.U.shape).copy()
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            x1k, w = self.stepper.step_pair(xb, self.U, dB, self.sched.dt)
            x1 = x1k[:, :, 0, :]
            bad, _ = self.stepper.classify(x1)
            keep = self.alive & ~bad
            nw = vec_norm(w)
            dL = np.where(nw > 0, np.log(np.maximum(nw, 1e-300)), 0.0)
            keep3 = keep[:, :, None]
            self.x = np.where(keep[:, :, None], x1, self.x)
            self.U = np.where((keep3 & (nw > 0))[..., None],
                              w / np.where(nw == 0.0, 1.0, nw)[..., None], self.U)
            self.L = np.where(keep3, self.L + dL, self.L)
            self.alive = keep

    def truncated_paths(self) -> Array:
        return ~self.alive.all(axis=1)


# ----------------------------------------------------------------------
# derivative-flow moments
# ----------------------------------------------------------------------

@dataclass
class GridMomentResult:
    sup: MomentEstimate
    per_point: List[MomentEstimate]
    grid: List[list]
    p: float
    t: float
    dt: float

    def to_dict(self):
        return {"sup": self.sup.to_dict(),
                "per_point": [m.to_dict() for m in self.per_point],
                "grid": self.grid, "p": self.p, "t": self.t, "dt": self.dt}


def estimate_sup_derivative_moment(system: VectorFieldSystem, grid, p: float, t: float,
                                   n_paths: int, seed: int, dt: float = 1e-3,
                                   terminal: bool = False, stream0: int = 0,
                                   workers: int = 1, r_expl: float = 1e6) -> GridMomentResult:
    """sup_{x in K} E sup_{s<=t} |T_xF_s|^p over a finite grid K.

    ``terminal=True`` drops the running sup and uses |T_xF_t|^p.  Exploded
    paths keep their running max up to explosion and flag the estimate as a
    lower bound.
    """
    if p <= 0:
        raise ContractError("p must be positive")
    grid = _grid_array(grid)
    sched = schedule_for(t, dt)
    driver = BrownianDriver(seed, system.noise_dim, stream=stream0)

    def chunk(lo, hi):
        scan = _FrameScan(system, grid, sched, driver, lo, hi, r_expl=r_expl)
        run = scan.log_frame_opnorm()
        for i in range(sched.n_steps):
            scan.step(i)
            cur = scan.log_frame_opnorm()
            run = np.where(scan.alive, np.maximum(run, cur), run)
        logv = scan.log_frame_opnorm() if terminal else run
        return {"logv": logv, "trunc": scan.truncated_paths()}

    out = run_chunks(n_paths, chunk, workers=workers)
    trunc = int(out["trunc"].sum())
    per_point = []
    for g in range(grid.shape[0]):
        est = _estimate_from_exponents(p * out["logv"][:, g], seed, truncated=trunc)
        est.lower_bound_only = trunc > 0 and not terminal
        if trunc == n_paths:
            est.invalid = True
        per_point.append(est)
    if all(e.invalid for e in per_point):
        sup = per_point[0]
        sup.invalid = True
    else:
        sup = max((e for e in per_point if not e.invalid), key=lambda e: e.value)
    return GridMomentResult(sup=sup, per_point=per_point,
                            grid=[list(r) for r in grid], p=p, t=sched.horizon, dt=dt)


@dataclass
class StoppedMomentResult:
    radii: List[float]
    per_radius_sup: List[MomentEstimate]
    per_point: List[List[MomentEstimate]]
    liminf_proxy: float
    grid: List[list]
    t: float
    dt: float

    def to_dict(self):
        return {"radii": self.radii,
                "per_radius_sup": [m.to_dict() for m in self.per_radius_sup],
                "liminf_proxy": self.liminf_proxy, "grid": self.grid,
                "t": self.t, "dt": self.dt}


def estimate_stopped_moment(system: VectorFieldSystem, grid, radii: Sequence[float],
                            t: float, n_paths: int, seed: int, dt: float = 1e-3,
                            center=None, stream0: int = 0, workers: int = 1) -> StoppedMomentResult:
    """sup_{x in K} E(|T_xF_{S_j^K}| 1{S_j^K < t}) along an increasing radius
    ladder, where S_j^K is the first time any grid member leaves radius R_j.

    The diagnostic liminf proxy is the min of the three largest rungs.
    """
    radii = [float(r) for r in radii]
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise ContractError("radius ladder must be strictly increasing")
    grid = _grid_array(grid)
    sched = schedule_for(t, dt)
    driver = BrownianDriver(seed, system.noise_dim, stream=stream0)
    c = np.zeros(grid.shape[1]) if center is None else np.asarray(center, dtype=float)
    J = len(radii)

    def chunk(lo, hi):
        scan = _FrameScan(system, grid, sched, driver, lo, hi)
        C, G = scan.C, scan.G
        stopped = np.zeros((C, J), dtype=bool)
        value = np.zeros((C, G, J))
        for i in range(sched.n_steps):
            scan.step(i)
            dist = vec_norm(scan.x - c)                      # (C, G)
            logF = scan.log_frame_opnorm()
            # a member that explodes has left every radius
            outside = (dist[:, :, None] > np.asarray(radii)) | (~scan.alive)[:, :, None]
            trig = outside.any(axis=1)                        # (C, J)
            newly = trig & ~stopped
            if i < sched.n_steps - 1:                         # strict S_j < t
                with np.errstate(over="ignore"):
                    value = np.where(newly[:, None, :], np.exp(logF)[:, :, None], value)
            stopped |= newly
        return {"value": value, "trunc": scan.truncated_paths()}

    out = run_chunks(n_paths, chunk, workers=workers)
    trunc = int(out["trunc"].sum())
    per_point: List[List[MomentEstimate]] = []
    per_radius_sup: List[MomentEstimate] = []
    for j in range(J):
        col = []
        for g in range(grid.shape[0]):
            col.append(_mean_estimate(out["value"][:, g, j], seed, truncated=trunc))
        per_point.append(col)
        per_radius_sup.append(max(col, key=lambda e: e.value))
    tail = per_radius_sup[-3:] if J >= 3 else per_radius_sup
    liminf_proxy = float(min(e.value for e in tail))
    return StoppedMomentResult(radii=radii, per_radius_sup=per_radius_sup,
                               per_point=per_point, liminf_proxy=liminf_proxy,
                               grid=[list(r) for r in grid], t=sched.horizon, dt=dt)


# ----------------------------------------------------------------------
# exponential functionals
# ----------------------------------------------------------------------

def estimate_exponential_functional(system: VectorFieldSystem, f: Callable[[Array], Array],
                                    x0, t: float, theta: float, n_paths: int, seed: int,
                                    dt: float = 1e-3, stream0: int = 0,
                                    workers: int = 1):
    """E exp(theta int_0^t f(x_s) ds) together with its convexity companion
    (1/t) int_0^t E exp(theta t f(x_s)) ds, both on the same paths.

    Returns (estimate, companion_bound_estimate).  Integrals are left-endpoint
    sums; the pathwise convexity inequality holds exactly for the discretized
    quantities, so the companion is never below the estimate up to Monte Carlo
    noise.
    """
    if theta < 0:
        raise ContractError("theta must be nonnegative")
    x0 = np.asarray(x0, dtype=float)
    sched = schedule_for(t, dt)
    driver = BrownianDriver(seed, system.noise_dim, stream=stream0)
    horizon = sched.horizon

    def chunk(lo, hi):
        dW = _chunk_increments(driver, lo, hi, sched)
        C = hi - lo
        stepper = Stepper(system)
        x = np.broadcast_to(x0, (C, x0.shape[-1])).copy()
        alive = np.ones(C, dtype=bool)
        integral = np.zeros(C)
        lse = np.full(C, -np.inf)
        with np.errstate(over="ignore", invalid="ignore"):
            for i in range(sched.n_steps):
                fx = np.asarray(f(x), dtype=float)
                integral = np.where(alive, integral + fx * sched.dt, integral)
                lse = np.where(alive,
                               np.logaddexp(lse, theta * horizon * fx + np.log(sched.dt)),
                               lse)
                x1 = stepper.step_x(x, dW[:, i], sched.dt)
                bad, _ = stepper.classify(x1)
                keep = alive & ~bad
                x = np.where(keep[:, None], x1, x)
                alive = keep
        return {"expo": theta * integral, "jensen_log": lse - np.log(horizon),
                "trunc": ~alive}

    out = run_chunks(n_paths, chunk, workers=workers)
    trunc = int(out["trunc"].sum())
    main = _estimate_from_exponents(out["expo"], seed, truncated=trunc)
    companion = _estimate_from_exponents(out["jensen_log"], seed, truncated=trunc)
    return main, companion


# ----------------------------------------------------------------------
# radial moments
# ----------------------------------------------------------------------

@dataclass
class RadialMomentResult:
    moment: MomentEstimate
    exit_probabilities: Dict[str, float]
    exit_probability_se: Dict[str, float]
    bound: Optional[float]
    bound_satisfied: Optional[bool]
    exit_bounds: Optional[Dict[str, float]]
    r0: float
    p: float
    t: float

    def to_dict(self):
        return {"moment": self.moment.to_dict(),
                "exit_probabilities": self.exit_probabilities,
                "exit_probability_se": self.exit_probability_se,
                "bound": self.bound, "bound_satisfied": self.bound_satisfied,
                "exit_bounds": self.exit_bounds, "r0": self.r0, "p": self.p, "t": self.t}


def _radial_fn(system: VectorFieldSystem, curvature: CurvatureData):
    model = system.model
    if isinstance(model, EmbeddedModel):
        if model._pole_distance is None:
            raise CapabilityError("radial estimates need closed-form pole distance")
        return lambda x: model._pole_distance(x)[0]
    if curvature.pole is None:
        raise CapabilityError("radial estimates need a pole in CurvatureData")
    pole = np.asarray(curvature.pole, dtype=float)
    return lambda x: vec_norm(np.asarray(x, dtype=float) - pole)


def estimate_radial_moment(system: VectorFieldSystem, curvature: CurvatureData, x0,
                           p: float, t: float, n_paths: int, seed: int,
                           dt: float = 1e-3, radius_ladder: Sequence[float] = (),
                           k0: Optional[float] = None, stream0: int = 0,
                           workers: int = 1) -> RadialMomentResult:
    """E(1 + r(x_t))^p plus exit probabilities P(T_n < t) for a radius ladder,
    compared against the envelope (1 + r(x0))^p e^{k0 (1 + p^2) t} when a k0
    is supplied."""
    radial = _radial_fn(system, curvature)
    x0 = np.asarray(x0, dtype=float)
    sched = schedule_for(t, dt)
    driver = BrownianDriver(seed, system.noise_dim, stream=stream0)
    ladder = [float(n) for n in radius_ladder]

    def chunk(lo, hi):
        dW = _chunk_increments(driver, lo, hi, sched)
        C = hi - lo
        stepper = Stepper(system)
        x = np.broadcast_to(x0, (C, x0.shape[-1])).copy()
        alive = np.ones(C, dtype=bool)
        rmax = np.asarray(radial(x)).copy()
        with np.errstate(over="ignore", invalid="ignore"):
            for i in range(sched.n_steps):
                x1 = stepper.step_x(x, dW[:, i], sched.dt)
                bad, _ = stepper.classify(x1)
                keep = alive & ~bad
                x = np.where(keep[:, None], x1, x)
                alive = keep
                r = np.where(alive, np.asarray(radial(x)), np.inf)
                rmax = np.maximum(rmax, r)
        return {"r_final": np.asarray(radial(x)), "r_max": rmax, "trunc": ~alive}

    out = run_chunks(n_paths, chunk, workers=workers)
    trunc = int(out["trunc"].sum())
    values = (1.0 + out["r_final"]) ** p
    moment = _mean_estimate(values, seed, truncated=trunc)
    r0 = float(np.asarray(radial(x0[None, :]))[0])
    exit_p, exit_se = {}, {}
    for n_rad in ladder:
        hits = (out["r_max"] > n_rad).astype(float)
        exit_p[f"{n_rad:g}"] = float(np.mean(hits))
        exit_se[f"{n_rad:g}"] = float(np.std(hits) / np.sqrt(hits.size))
    bound = bound_ok = exit_bounds = None
    if k0 is not None:
        bound = float((1.0 + r0) ** p * np.exp(k0 * (1.0 + p * p) * sched.horizon))
        bound_ok = bool(moment.value <= bound + 3.0 * moment.se)
        exit_bounds = {key: float(bound / float(key) ** p) for key in exit_p}
    return RadialMomentResult(moment=moment, exit_probabilities=exit_p,
                              exit_probability_se=exit_se, bound=bound,
                              bound_satisfied=bound_ok, exit_bounds=exit_bounds,
                              r0=r0, p=p, t=sched.horizon)


# ----------------------------------------------------------------------
# moment exponent
# ----------------------------------------------------------------------

@dataclass
class MomentExponentResult:
    slope: float
    intercept: float
    residuals: List[float]
    horizons: List[float]
    log_moments: List[float]
    per_horizon: List[MomentEstimate]
    excluded: List[int]
    p: float

    def to_dict(self):
        return {"slope": self.slope, "intercept": self.intercept,
                "residuals": self.residuals, "horizons": self.horizons,
                "log_moments": self.log_moments,
                "per_horizon": [m.to_dict() for m in self.per_horizon],
                "excluded": self.excluded, "p": self.p}


def estimate_moment_exponent(system: VectorFieldSystem, grid, p: float,
                             horizons: Sequence[float], n_paths: int, seed: int,
                             dt: float = 1e-3, stream0: int = 0,
                             workers: int = 1) -> MomentExponentResult:
    """Least-squares slope of log sup_K E|T_xF_t|^p over a horizon ladder;
    negative slopes witness p-th-moment stability."""
    horizons = [float(h) for h in horizons]
    if any(b <= a for a, b in zip(horizons, horizons[1:])):
        raise ContractError("horizons must be strictly increasing")
    grid = _grid_array(grid)
    sched = schedule_for(horizons[-1], dt)
    steps = [sched.step_of_time(h) for h in horizons]
    driver = BrownianDriver(seed, system.noise_dim, stream=stream0)

    def chunk(lo, hi):
        scan = _FrameScan(system, grid, sched, driver, lo, hi)
        snaps = np.zeros((scan.C, scan.G, len(steps)))
        for i in range(sched.n_steps):
            scan.step(i)
            for h_idx, s in enumerate(steps):
                if s == i + 1:
                    snaps[:, :, h_idx] = scan.log_frame_opnorm()
        return {"snaps": snaps, "trunc": scan.truncated_paths()}

    out = run_chunks(n_paths, chunk, workers=workers)
    trunc = int(out["trunc"].sum())
    per_horizon, ys, excluded = [], [], []
    for h_idx in range(len(horizons)):
        ests = [_estimate_from_exponents(p * out["snaps"][:, g, h_idx], seed, truncated=trunc)
                for g in range(grid.shape[0])]
        sup = max(ests, key=lambda e: e.value if not e.log_space else np.inf)
        per_horizon.append(sup)
        y = sup.value if sup.log_space else (np.log(sup.value) if sup.value > 0 else np.nan)
        if not np.isfinite(y):
            excluded.append(h_idx)
            ys.append(np.nan)
        else:
            ys.append(float(y))
    use = [i for i in range(len(horizons)) if i not in excluded]
    if len(use) < 2:
        raise ContractError("not enough usable horizons for the regression")
    tarr = np.array([horizons[i] for i in use])
    yarr = np.array([ys[i] for i in use])
    slope, intercept = np.polyfit(tarr, yarr, 1)
    resid = yarr - (slope * tarr + intercept)
    return MomentExponentResult(slope=float(slope), intercept=float(intercept),
                                residuals=[float(r) for r in resid],
                                horizons=horizons, log_moments=ys,
                                per_horizon=per_horizon, excluded=excluded, p=p)


# ----------------------------------------------------------------------
# exponential functional of sup H_1 for gradient systems
# ----------------------------------------------------------------------

def _gradient_h1_batch(system: VectorFieldSystem, x: Array, v: Array) -> Array:
    """H_1(x)(v, v) for unit-ish tangent v, batched, gradient systems only."""
    from .geometry import second_fundamental_form

    model: EmbeddedModel = system.model
    nv2 = np.sum(v * v, axis=-1)
    avv = second_fundamental_form(model, x, v, v)
    if model.mean_curvature is not None:
        tra = model.mean_curvature(x)
    else:
        raise CapabilityError("gradient H_1 batch evaluation needs mean curvature data")
    hs = np.zeros(nv2.shape)
    m = system.noise_dim
    for i in range(m):
        e = np.zeros(m)
        e[i] = 1.0
        ji = system.diffusion_jacobian(x, e, v)
        ji = model.tangent_project(x, ji)
        hs = hs + np.sum(ji * ji, axis=-1)
    zq = np.zeros(nv2.shape)
    if system.z_drift_jacobian is not None:
        dz = model.tangent_project(x, np.asarray(system.z_drift_jacobian(x, v), dtype=float))
        zq = np.sum(dz * v, axis=-1)
    return (-np.sum(avv * tra, axis=-1) + 2.0 * hs
            - np.sum(avv * avv, axis=-1) / np.where(nv2 == 0.0, 1.0, nv2)
            + 2.0 * zq)


def sup_h1_field(system: VectorFieldSystem, n_directions: int = 16) -> Callable[[Array], Array]:
    """x -> sup_{|v|=1} H_1(x)(v, v) over a fixed tangent direction sample."""
    if not (system.is_gradient and isinstance(system.model, EmbeddedModel)):
        raise CapabilityError("sup H_1 field is for gradient Brownian systems")
    model = system.model
    dirs = direction_sample(model.ambient_dim, n_directions)

    def f(x):
        x = np.asarray(x, dtype=float)
        best = np.full(x.shape[:-1], -np.inf)
        for d0 in dirs:
            v = model.tangent_project(x, np.broadcast_to(d0, x.shape))
            nv = vec_norm(v)
            ok = nv > 1e-8
            v = v / np.where(ok, nv, 1.0)[..., None]
            h = _gradient_h1_batch(system, x, v)
            best = np.where(ok, np.maximum(best, h), best)
        return best

    return f


def estimate_girsanov_one_completeness(system: VectorFieldSystem, grid, t: float,
                                       n_paths: int, seed: int, dt: float = 1e-2,
                                       n_directions: int = 16, stream0: int = 0,
                                       workers: int = 1) -> GridMomentResult:
    """sup_{x in K} E exp(1/2 int_0^T f(F_s(x)) ds) with f = sup_{|v|=1} H_1;
    finiteness is the one-completeness evidence for gradient systems."""
    f = sup_h1_field(system, n_directions=n_directions)
    grid = _grid_array(grid)
    sched = schedule_for(t, dt)
    driver = BrownianDriver(seed, system.noise_dim, stream=stream0)

    def chunk(lo, hi):
        dW = _chunk_increments(driver, lo, hi, sched)
        C = hi - lo
        G = grid.shape[0]
        stepper = Stepper(system)
        x = np.broadcast_to(grid, (C, G, grid.shape[1])).copy()
        alive = np.ones((C, G), dtype=bool)
        integral = np.zeros((C, G))
        with np.errstate(over="ignore", invalid="ignore"):
            for i in range(sched.n_steps):
                fx = f(x)
                integral = np.where(alive, integral + fx * sched.dt, integral)
                x1 = stepper.step_x(x, dW[:, i][:, None, :], sched.dt)
                bad, _ = stepper.classify(x1)
                keep = alive & ~bad
                x = np.where(keep[..., None], x1, x)
                alive = keep
        return {"expo": 0.5 * integral, "trunc": ~alive.all(axis=1)}

    out = run_chunks(n_paths, chunk, workers=workers)
    trunc = int(out["trunc"].sum())
    per_point = [_estimate_from_exponents(out["expo"][:, g], seed, truncated=trunc)
                 for g in range(grid.shape[0])]
    sup = max(per_point, key=lambda e: e.value)
    return GridMomentResult(sup=sup, per_point=per_point,
                            grid=[list(r) for r in grid], p=1.0, t=sched.horizon, dt=dt)
