"""The H_p bilinear form in its three incarnations, growth-condition
certification over sampled regions, Lyapunov drift bounds, and the verdict
engine mapping certified bounds to completeness theorems.

A word on semantics: sampling cannot prove a global inequality.  Every
certificate issued here is labeled ``sampled-only`` evidence; "failed" means a
diverging trend or an explicit witness was found on the sample set.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc

from .errors import CapabilityError, ContractError
from .geometry import (
    CurvatureData,
    EmbeddedModel,
    FlatModel,
    ManifoldModel,
    PuncturedFlatModel,
    RescaledFlatModel,
    pole_distance,
    second_fundamental_form,
    vec_norm,
)
from .systems import (
    VectorFieldSystem,
    as_ito,
    as_stratonovich,
    effective_drift,
    fd_directional,
    adjoint,
    isometry_defect,
)

Array = np.ndarray

#: ratio growth across the sampled radius range that flags a diverging trend
DIVERGENCE_FACTOR = 4.0

#: smallest worst ratio a diverging trend can have; below this the growth is
#: within the noise/transient band of a bounded condition
MIN_DIVERGENT_RATIO = 0.5

#: default radius sweep for growth certification
DEFAULT_RADII = tuple(np.geomspace(0.5, 1.0e3, 12))

DEFAULT_DIRECTIONS = 32

ISOMETRY_TOL = 1e-6


# ----------------------------------------------------------------------
# deterministic sample sets
# ----------------------------------------------------------------------

def direction_sample(dim: int, n: int) -> Array:
    """n unit directions in R^dim from an unscrambled Sobol set (deterministic)."""
    eng = qmc.Sobol(d=dim, scramble=False)
    m = int(np.ceil(np.log2(2 * n + 8)))
    pts = eng.random_base2(m)[1:]  # drop the all-zeros point
    g = ndtri(np.clip(pts, 1e-12, 1.0 - 1e-12))
    nz = vec_norm(g) > 1e-9
    g = g[nz][:n]
    return g / vec_norm(g)[..., None]


def tangent_directions(model: ManifoldModel, x: Array, n: int) -> Array:
    """Unit tangent directions at x; ambient Sobol directions projected for
    embedded models."""
    dirs = direction_sample(model.ambient_dim, n)
    if isinstance(model, EmbeddedModel):
        dirs = model.tangent_project(np.broadcast_to(x, dirs.shape), dirs)
        keep = vec_norm(dirs) > 1e-8
        dirs = dirs[keep]
        dirs = dirs / vec_norm(dirs)[..., None]
    return dirs


def sample_states(model: ManifoldModel, radii: Sequence[float], n_dirs: int) -> List[Array]:
    """Sample points grouped by radius band.

    Flat-family models: points r * direction per radius.  Embedded models with
    a radial sampler use it; otherwise the model's generic sampler is used and
    the radius grouping is nominal (compact manifolds).
    """
    if isinstance(model, EmbeddedModel):
        if model.sampler is None:
            raise CapabilityError("embedded model has no point sampler")
        rng = np.random.Generator(np.random.Philox(key=np.array([0x5EED, 0xD1CE], dtype=np.uint64)))
        pts = model.sampler(rng, n_dirs * max(1, len(radii) // 2))
        # nominal single band for compact models; unbounded ones sort by escape
        esc = model.escape_coordinate(pts)
        order = np.argsort(esc, kind="stable")
        pts = pts[order]
        bands = np.array_split(pts, min(len(radii), max(1, len(pts) // n_dirs)))
        return [b for b in bands if len(b)]
    dirs = direction_sample(model.ambient_dim, n_dirs)
    return [np.asarray(r) * dirs for r in radii]


# ----------------------------------------------------------------------
# H_p backends
# ----------------------------------------------------------------------

def _covariant_column_jacobians(system: VectorFieldSystem, x: Array, v: Array) -> Array:
    """grad X^i(v) for each i, stacked (..., dim, m); ambient derivative
    projected onto the tangent space for embedded models."""
    s = as_stratonovich(system)
    J = s.column_jacobians(x, v)
    model = system.model
    if isinstance(model, EmbeddedModel):
        J = np.stack([model.tangent_project(x, J[..., i]) for i in range(J.shape[-1])], axis=-1)
    return J


def _z_field(system: VectorFieldSystem):
    """The Brownian-with-drift field Z = A^X and its directional derivative."""
    if system.z_drift is not None and system.z_drift_jacobian is not None:
        return system.z_drift, system.z_drift_jacobian
    dec = effective_drift(system)
    z = dec.a_x

    def zjac(x, v):
        return fd_directional(z, x, v)

    return z, zjac


def _grad_z_quad(system: VectorFieldSystem, x: Array, v: Array) -> float:
    z, zjac = _z_field(system)
    dz = np.asarray(zjac(x, v), dtype=float)
    model = system.model
    if isinstance(model, EmbeddedModel):
        dz = model.tangent_project(x, dz)
    return float(np.sum(dz * v, axis=-1))


def _ricci_fn(model: ManifoldModel, curvature: Optional[CurvatureData]):
    if curvature is not None and curvature.ricci is not None:
        return curvature.ricci
    if isinstance(model, EmbeddedModel) and model.ricci is not None:
        return model.ricci
    return None


def eval_Hp(system: VectorFieldSystem, x, v, p: float, backend: str = "auto",
            curvature: Optional[CurvatureData] = None) -> float:
    """H_p(x)(v, v), the bilinear form driving d|v_t|^p.

    Backends:
      * ``euclidean`` (flat models): 2<DA v, v> + sum|DX^i v|^2
        + (p-2) sum <DX^i v, v>^2 / |v|^2 with the Ito-form drift A.
      * ``ricci`` (isometric X^*X = Id systems with Ricci data):
        2<grad Z v, v> - Ric(v,v) + sum|grad X^i v|^2 + (p-2) q.
      * ``gauss`` (embedded gradient systems): -<alpha(v,v), trace alpha>
        + 2|alpha(v,.)|_HS^2 + (p-2)|alpha(v,v)|^2/|v|^2 + 2<grad Z v, v>.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    nv2 = float(np.sum(v * v))
    if nv2 == 0.0:
        raise ContractError("H_p is evaluated at v != 0")
    model = system.model
    if backend == "auto":
        if isinstance(model, EmbeddedModel):
            backend = "gauss" if system.is_gradient else "ricci"
        else:
            backend = "euclidean"

    if backend == "euclidean":
        if isinstance(model, (EmbeddedModel, RescaledFlatModel)):
            raise CapabilityError("euclidean backend needs a flat model")
        s = as_ito(system)
        da = np.asarray(s.drift_jacobian(x, v), dtype=float)
        J = s.column_jacobians(x, v)
        hs = float(np.sum(J * J))
        inner = np.einsum("...im,...i->...m", J, v)
        qdir = float(np.sum(inner * inner))
        return 2.0 * float(np.sum(da * v)) + hs + (p - 2.0) * qdir / nv2

    if backend == "ricci":
        ric = _ricci_fn(model, curvature)
        if ric is None:
            raise CapabilityError("ricci backend needs Ricci curvature data")
        defect = isometry_defect(system, x)
        if defect > ISOMETRY_TOL:
            raise CapabilityError(f"system is not isometric at x (defect {defect:.2e})")
        J = _covariant_column_jacobians(system, x, v)
        hs = float(np.sum(J * J))
        inner = np.einsum("...im,...i->...m", J, v)
        qdir = float(np.sum(inner * inner))
        return (2.0 * _grad_z_quad(system, x, v) - float(ric(x, v))
                + hs + (p - 2.0) * qdir / nv2)

    if backend == "gauss":
        if not isinstance(model, EmbeddedModel):
            raise CapabilityError("gauss backend needs an embedded model")
        if not system.is_gradient:
            raise CapabilityError("gauss backend applies to gradient Brownian systems")
        avv = second_fundamental_form(model, x, v, v)
        frame = model.tangent_frame(x)
        trace_alpha = np.zeros(model.ambient_dim)
        a_hs = 0.0
        for j in range(frame.shape[1]):
            fj = frame[:, j]
            trace_alpha = trace_alpha + second_fundamental_form(model, x, fj, fj)
            avfj = second_fundamental_form(model, x, v, fj)
            a_hs += float(np.sum(avfj * avfj))
        return (-float(np.sum(avv * trace_alpha)) + 2.0 * a_hs
                + (p - 2.0) * float(np.sum(avv * avv)) / nv2
                + 2.0 * _grad_z_quad(system, x, v))

    raise CapabilityError(f"unknown H_p backend {backend!r}")


def eval_Htilde(system: VectorFieldSystem, x, v, backend: str = "auto",
                curvature: Optional[CurvatureData] = None) -> float:
    """The variant form with coefficient -2 on the directional term: the
    member of the affine family H_p at p = 0."""
    return eval_Hp(system, x, v, 0.0, backend=backend, curvature=curvature)


@dataclass
class HpReport:
    backend: str
    p: float
    points: List[list]
    values: List[float]
    max_ratio: float
    disagreement: Optional[float] = None

    def to_dict(self):
        return {
            "backend": self.backend, "p": self.p,
            "points": self.points, "values": self.values,
            "max_ratio": self.max_ratio,
            "disagreement": self.disagreement,
        }


def hp_report(system: VectorFieldSystem, samples, p: float,
              backends: Sequence[str] = ("auto",),
              curvature: Optional[CurvatureData] = None) -> List[HpReport]:
    """Evaluate H_p over (x, v) samples per backend and record the worst ratio
    H_p(v, v)/|v|^2; when two or more backends apply their max disagreement is
    reported."""
    reports = []
    tables = []
    for b in backends:
        vals, ratios = [], []
        for x, v in samples:
            h = eval_Hp(system, x, v, p, backend=b, curvature=curvature)
            vals.append(float(h))
            ratios.append(float(h / np.sum(np.square(v))))
        tables.append(vals)
        reports.append(HpReport(backend=b, p=p,
                                points=[list(np.ravel(x)) for x, _ in samples],
                                values=vals, max_ratio=float(np.max(ratios))))
    if len(tables) >= 2:
        arr = np.array(tables)
        dis = float(np.max(np.abs(arr - arr[0])))
        for r in reports:
            r.disagreement = dis
    return reports


# ----------------------------------------------------------------------
# growth certification
# ----------------------------------------------------------------------

@dataclass
class ConditionCheck:
    name: str
    constant: float            # minimal c certifying the inequality on the samples
    worst_ratio: float
    worst_point: list
    diverging: bool
    band_ratios: List[float]   # max ratio per radius band

    def to_dict(self):
        return {"name": self.name, "constant": self.constant,
                "worst_ratio": self.worst_ratio, "worst_point": self.worst_point,
                "diverging": self.diverging, "band_ratios": self.band_ratios}


@dataclass
class GrowthProfile:
    kind: str
    conditions: List[ConditionCheck]
    radii: List[float]
    n_directions: int
    status: str = "sampled-only"

    def ok(self) -> bool:
        return all(not c.diverging and np.isfinite(c.worst_ratio) for c in self.conditions)

    def to_dict(self):
        return {"kind": self.kind, "status": self.status, "radii": self.radii,
                "n_directions": self.n_directions,
                "conditions": [c.to_dict() for c in self.conditions]}


def _condition_from_bands(name: str, band_pts: List[Array],
                          ratio_fn: Callable[[Array], float]) -> ConditionCheck:
    band_ratios, worst, worst_pt = [], -np.inf, None
    for pts in band_pts:
        band_worst = -np.inf
        for x in pts:
            r = float(ratio_fn(x))
            if not np.isfinite(r):
                r = np.inf
            if r > band_worst:
                band_worst = r
            if r > worst:
                worst, worst_pt = r, x
        band_ratios.append(band_worst)
    top, bottom = band_ratios[-1], band_ratios[0]
    # a diverging trend: the far band holds the global max, dwarfs the near
    # band, and is large in absolute terms (sign-crossing transients and
    # finite-difference noise live below MIN_DIVERGENT_RATIO)
    diverging = (not np.isfinite(worst)) or (
        top > MIN_DIVERGENT_RATIO and top >= worst
        and top > DIVERGENCE_FACTOR * max(bottom, 1e-6)
    )
    return ConditionCheck(name=name, constant=float(worst), worst_ratio=float(worst),
                          worst_point=[] if worst_pt is None else [float(c) for c in np.ravel(worst_pt)],
                          diverging=bool(diverging),
                          band_ratios=[float(b) for b in band_ratios])


def _sup_dirs(fn: Callable[[Array], float], dirs: Array) -> float:
    return max(float(fn(v)) for v in dirs)


def _coeff_norm_sq(system: VectorFieldSystem, x: Array) -> float:
    B = as_stratonovich(system).diffusion_columns(x)
    return float(np.sum(B * B))


def _grad_x_norm_sq(system: VectorFieldSystem, x: Array, dirs: Array) -> float:
    def one(v):
        J = _covariant_column_jacobians(system, x, v)
        return float(np.sum(J * J))
    return _sup_dirs(one, dirs)


def _r_term_fn(system: VectorFieldSystem, curvature: Optional[CurvatureData]):
    """sum <R(X^i, v)X^i, v> as a callable, or None when unavailable.

    Zero on flat models; -Ric(v, v) for isometric systems with Ricci data.
    """
    model = system.model
    if isinstance(model, (FlatModel, PuncturedFlatModel)):
        return lambda x, v: 0.0
    ric = _ricci_fn(model, curvature)
    if ric is None:
        return None

    def term(x, v):
        if isometry_defect(system, x) > ISOMETRY_TOL:
            raise CapabilityError("curvature rewriting needs an isometric system")
        return -float(ric(x, v))

    return term


def check_growth(system: VectorFieldSystem, kind: str,
                 radii: Sequence[float] = DEFAULT_RADII,
                 n_directions: int = DEFAULT_DIRECTIONS,
                 epsilon: float = 0.5, p: float = 1.0,
                 curvature: Optional[CurvatureData] = None) -> GrowthProfile:
    """Certify a growth-condition family on a sampled region.

    kinds: ``linear_growth`` (|X| and <x, A> against (1+|x|^2) envelopes),
    ``sublog_derivative`` (derivative envelopes 1 + ln(1+|x|^2)),
    ``epsilon_exponent`` (the relaxed-exponent family), ``pole_conditions``
    (radial envelopes with the Hessian comparison bound) and ``h_bound``
    (sup H_p / |v|^2).  The verdict is evidence on samples, never a proof.
    """
    model = system.model
    band_pts = sample_states(model, radii, n_directions)
    dirs_at = lambda x: tangent_directions(model, x, n_directions)
    conds: List[ConditionCheck] = []

    if kind == "linear_growth":
        s_ito = as_ito(system) if not isinstance(model, EmbeddedModel) else system
        conds.append(_condition_from_bands(
            "coeff_linear_growth", band_pts,
            lambda x: np.sqrt(_coeff_norm_sq(system, x)) / np.sqrt(1.0 + np.sum(x * x))))
        conds.append(_condition_from_bands(
            "drift_radial_growth", band_pts,
            lambda x: float(np.sum(x * s_ito.drift(x))) / (1.0 + float(np.sum(x * x)))))
    elif kind == "sublog_derivative":
        s_ito = as_ito(system) if not isinstance(model, EmbeddedModel) else system
        env = lambda x: 1.0 + np.log1p(float(np.sum(x * x)))
        conds.append(_condition_from_bands(
            "grad_X_sq_sublog", band_pts,
            lambda x: _grad_x_norm_sq(system, x, dirs_at(x)) / env(x)))
        conds.append(_condition_from_bands(
            "grad_A_sublog", band_pts,
            lambda x: _sup_dirs(lambda v: float(np.sum(s_ito.drift_jacobian(x, v) * v)), dirs_at(x)) / env(x)))
    elif kind == "epsilon_exponent":
        s_ito = as_ito(system) if not isinstance(model, EmbeddedModel) else system
        half = 0.5 - epsilon
        conds.append(_condition_from_bands(
            "coeff_columns_growth", band_pts,
            lambda x: float(np.max(vec_norm(as_stratonovich(system).diffusion_columns(x), axis=-2)))
            / (1.0 + np.sum(x * x)) ** half))
        conds.append(_condition_from_bands(
            "drift_radial_growth", band_pts,
            lambda x: float(np.sum(x * s_ito.drift(x))) / (1.0 + float(np.sum(x * x))) ** (1.0 - epsilon)))
        conds.append(_condition_from_bands(
            "column_jacobian_growth", band_pts,
            lambda x: _grad_x_norm_sq(system, x, dirs_at(x)) / (1.0 + float(np.sum(x * x))) ** epsilon))
        conds.append(_condition_from_bands(
            "grad_A_growth", band_pts,
            lambda x: _sup_dirs(lambda v: float(np.sum(s_ito.drift_jacobian(x, v) * v)), dirs_at(x))
            / (1.0 + float(np.sum(x * x))) ** epsilon))
    elif kind == "pole_conditions":
        if curvature is None:
            curvature = CurvatureData()
        dec = effective_drift(system)
        rterm = _r_term_fn(system, curvature)

        def radial(x):
            return pole_distance(model, curvature, x)

        conds.append(_condition_from_bands(
            "coeff_vs_hessian_bound", band_pts,
            lambda x: _coeff_norm_sq(system, x) * radial(x)[2] / (1.0 + radial(x)[0])))
        conds.append(_condition_from_bands(
            "effective_drift_radial", band_pts,
            lambda x: float(np.sum(radial(x)[1] * dec.a_x(x))) / (1.0 + radial(x)[0])))
        conds.append(_condition_from_bands(
            "grad_X_sq_sublog_r", band_pts,
            lambda x: _grad_x_norm_sq(system, x, dirs_at(x)) / (1.0 + np.log1p(radial(x)[0]))))
        if rterm is not None:
            def cond4(x):
                def quad(v):
                    da = fd_directional(dec.a_x, x, v)
                    if isinstance(model, EmbeddedModel):
                        da = model.tangent_project(x, da)
                    return 2.0 * float(np.sum(da * v)) + rterm(x, v)
                return _sup_dirs(quad, dirs_at(x)) / (1.0 + np.log1p(radial(x)[0]))
            conds.append(_condition_from_bands("drift_curvature_sublog_r", band_pts, cond4))
    elif kind == "h_bound":
        def ratio(x):
            dirs = dirs_at(x)
            return _sup_dirs(lambda v: eval_Hp(system, x, v, p, curvature=curvature), dirs)
        conds.append(_condition_from_bands(f"H_{p:g}_upper_bound", band_pts, ratio))
    else:
        raise ContractError(f"unknown growth profile kind {kind!r}")

    return GrowthProfile(kind=kind, conditions=conds, radii=[float(r) for r in radii],
                         n_directions=n_directions)


# ----------------------------------------------------------------------
# Lyapunov drift bound (the exponential-moment lemma)
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class ScalarField:
    """C^2 scalar function with gradient and Hessian oracles."""

    value: Callable[[Array], Array]
    grad: Callable[[Array], Array]
    hessian: Callable[[Array], Array]


def scalar_field(value, grad=None, hessian=None, dim: Optional[int] = None) -> ScalarField:
    """Wrap a scalar function, filling in derivatives by central differences."""
    if grad is None:
        def grad(x, _f=value):
            x = np.asarray(x, dtype=float)
            h = 1e-5 * (1.0 + vec_norm(x))
            out = np.empty_like(x)
            for i in range(x.shape[-1]):
                e = np.zeros(x.shape[-1])
                e[i] = 1.0
                out[..., i] = (_f(x + h * e) - _f(x - h * e)) / (2.0 * h)
            return out
    if hessian is None:
        def hessian(x, _g=grad):
            x = np.asarray(x, dtype=float)
            d = x.shape[-1]
            h = 1e-5 * (1.0 + vec_norm(x))
            out = np.empty(x.shape[:-1] + (d, d))
            for i in range(d):
                e = np.zeros(d)
                e[i] = 1.0
                out[..., :, i] = (_g(x + h * e) - _g(x - h * e)) / (2.0 * h)
            return 0.5 * (out + np.swapaxes(out, -1, -2))
    return ScalarField(value=value, grad=grad, hessian=hessian)


@dataclass
class LyapunovBound:
    k: float
    witness_point: list
    n_samples: int

    def certificate(self, c: float, g0: float, t: float) -> float:
        """Upper bound exp(c (g(x0) + k t)) for E exp(c g(x_{t ^ tau}))."""
        return float(np.exp(c * (g0 + self.k * t)))


def lyapunov_drift_bound(system: VectorFieldSystem, g: ScalarField, points) -> LyapunovBound:
    """k = sup over samples of 1/2 sum |Dg(X^i)|^2 + 1/2 sum D^2g(X^i, X^i) + Dg(A)
    with the Ito-form drift; finite k certifies E e^{c g(x_{t^tau})} <= e^{c(g(x0)+kt)}."""
    if isinstance(system.model, EmbeddedModel):
        raise CapabilityError("the drift bound is computed in flat coordinates")
    s = as_ito(system)
    best, best_x = -np.inf, None
    pts = list(points)
    for x in pts:
        x = np.asarray(x, dtype=float)
        dg = np.asarray(g.grad(x), dtype=float)
        H = np.asarray(g.hessian(x), dtype=float)
        B = s.diffusion_columns(x)
        val = float(np.sum(dg * s.drift(x)))
        for i in range(s.noise_dim):
            xi = B[..., i]
            val += 0.5 * float(np.sum(dg * xi)) ** 2
            val += 0.5 * float(xi @ H @ xi)
        if val > best:
            best, best_x = val, x
    return LyapunovBound(k=float(best), witness_point=[float(c) for c in np.ravel(best_x)],
                         n_samples=len(pts))


# ----------------------------------------------------------------------
# verdicts
# ----------------------------------------------------------------------

@dataclass
class TheoremVerdict:
    theorem: str
    status: str                      # certified | failed | not-applicable
    conditions: List[dict] = field(default_factory=list)
    constants: Dict[str, float] = field(default_factory=dict)
    failing_sample: Optional[list] = None
    reason: Optional[str] = None

    def to_dict(self):
        out = {"theorem": self.theorem, "status": self.status,
               "conditions": self.conditions, "constants": self.constants}
        if self.failing_sample is not None:
            out["failing_sample"] = self.failing_sample
        if self.reason is not None:
            out["reason"] = self.reason
        return out


@dataclass
class VerdictReport:
    entries: List[TheoremVerdict]
    basis: str = "sampled-only"

    def status_of(self, theorem: str) -> str:
        for e in self.entries:
            if e.theorem == theorem:
                return e.status
        return "not-applicable"

    def to_dict(self):
        return {"basis": self.basis, "entries": [e.to_dict() for e in self.entries]}


@dataclass
class CertifyConfig:
    theorems: Sequence[str] = ("Cor5.2", "Thm5.3", "Thm6.2", "Thm8.1", "Cor8.3")
    p: float = 1.0
    epsilon: float = 0.5
    radii: Sequence[float] = DEFAULT_RADII
    n_directions: int = DEFAULT_DIRECTIONS
    curvature: Optional[CurvatureData] = None


def _verdict_from_profile(theorem: str, profiles: Sequence[GrowthProfile]) -> TheoremVerdict:
    conds = [c for pr in profiles for c in pr.conditions]
    bad = [c for c in conds if c.diverging or not np.isfinite(c.worst_ratio)]
    status = "failed" if bad else "certified"
    return TheoremVerdict(
        theorem=theorem, status=status,
        conditions=[c.to_dict() for c in conds],
        constants={c.name: c.constant for c in conds if np.isfinite(c.constant)},
        failing_sample=bad[0].worst_point if bad else None,
    )


def _flat_metric(model: ManifoldModel) -> bool:
    return isinstance(model, (FlatModel, PuncturedFlatModel)) and not isinstance(model, RescaledFlatModel)


def _na(theorem: str, reason: str) -> TheoremVerdict:
    return TheoremVerdict(theorem=theorem, status="not-applicable", reason=reason)


def certify(system: VectorFieldSystem, config: CertifyConfig = CertifyConfig()) -> VerdictReport:
    """Evaluate the hypotheses of the requested theorems on sampled regions and
    record per-theorem verdicts with witnesses.

    Punctured models are metrically incomplete, so completeness theorems are
    not applicable there; the rescaled metric carries no connection, so the
    derivative-form conditions are not applicable either.
    """
    model = system.model
    entries: List[TheoremVerdict] = []
    incomplete = isinstance(model, PuncturedFlatModel)
    rescaled = isinstance(model, RescaledFlatModel)
    kw = dict(radii=config.radii, n_directions=config.n_directions, curvature=config.curvature)

    for theorem in config.theorems:
        if incomplete:
            entries.append(_na(theorem, "underlying metric space is incomplete (puncture)"))
            continue
        if rescaled:
            entries.append(_na(theorem, "rescaled metric has no connection attached"))
            continue
        try:
            if theorem == "Cor5.2":
                entries.append(_certify_cor52(system, config, theorem))
            elif theorem == "Thm5.1":
                entries.append(_certify_thm51(system, config))
            elif theorem == "Thm5.3":
                prof = check_growth(system, "h_bound", p=1.0, **kw)
                entries.append(_verdict_from_profile(theorem, [prof]))
            elif theorem == "Thm6.2":
                if not _flat_metric(model):
                    entries.append(_na(theorem, "stated for flat space"))
                else:
                    profs = [check_growth(system, "linear_growth", **kw),
                             check_growth(system, "sublog_derivative", **kw)]
                    entries.append(_verdict_from_profile(theorem, profs))
            elif theorem == "Cor6.3":
                if not _flat_metric(model):
                    entries.append(_na(theorem, "stated for flat space"))
                else:
                    prof = check_growth(system, "epsilon_exponent", epsilon=config.epsilon, **kw)
                    entries.append(_verdict_from_profile(theorem, [prof]))
            elif theorem == "Thm7.1":
                entries.append(_certify_pole(system, config, theorem))
            elif theorem == "Prop7.2":
                entries.append(_certify_prop72(system, config))
            elif theorem == "Thm8.1":
                entries.append(_certify_thm81(system, config))
            elif theorem == "Thm8.2":
                entries.append(_certify_thm82(system, config))
            elif theorem == "Cor8.3":
                entries.append(_certify_cor83(system, config))
            elif theorem == "Diffeo":
                entries.append(_certify_diffeo(system, config))
            else:
                entries.append(_na(theorem, "unknown theorem id"))
        except CapabilityError as exc:
            entries.append(_na(theorem, str(exc)))
    return VerdictReport(entries=entries)


def _certify_cor52(system: VectorFieldSystem, config: CertifyConfig, theorem: str) -> TheoremVerdict:
    model = system.model
    rterm = _r_term_fn(system, config.curvature)
    if rterm is None:
        return _na(theorem, "curvature term unavailable (need flat model or Ricci data)")
    band_pts = sample_states(model, config.radii, config.n_directions)
    dec = effective_drift(system)

    c1 = _condition_from_bands(
        "grad_X_bounded", band_pts,
        lambda x: np.sqrt(_grad_x_norm_sq(system, x, tangent_directions(model, x, config.n_directions))))

    def quad_ratio(x):
        def quad(v):
            da = fd_directional(dec.a_x, x, v)
            if isinstance(model, EmbeddedModel):
                da = model.tangent_project(x, da)
            return 2.0 * float(np.sum(da * v)) + rterm(x, v)
        return _sup_dirs(quad, tangent_directions(model, x, config.n_directions))

    c2 = _condition_from_bands("drift_curvature_upper_bound", band_pts, quad_ratio)
    prof = GrowthProfile(kind="cor5.2", conditions=[c1, c2],
                         radii=[float(r) for r in config.radii],
                         n_directions=config.n_directions)
    return _verdict_from_profile(theorem, [prof])


def _certify_thm51(system: VectorFieldSystem, config: CertifyConfig) -> TheoremVerdict:
    """Constant-f instance: find c with |grad X|^2 <= c and H_p <= 6 p c on samples.

    With f = c constant, the exponential-functional hypothesis holds
    automatically, so the certificate reduces to the two pointwise bounds.
    """
    model = system.model
    band_pts = sample_states(model, config.radii, config.n_directions)
    p = config.p
    cond_g = _condition_from_bands(
        "grad_X_sq_bounded", band_pts,
        lambda x: _grad_x_norm_sq(system, x, tangent_directions(model, x, config.n_directions)))

    def h_ratio(x):
        dirs = tangent_directions(model, x, config.n_directions)
        return _sup_dirs(lambda v: eval_Hp(system, x, v, p, curvature=config.curvature), dirs) / (6.0 * p)

    cond_h = _condition_from_bands("H_p_over_6p", band_pts, h_ratio)
    verdict = _verdict_from_profile("Thm5.1", [GrowthProfile(
        kind="thm5.1", conditions=[cond_g, cond_h],
        radii=[float(r) for r in config.radii], n_directions=config.n_directions)])
    if verdict.status == "certified":
        verdict.constants["f_constant"] = max(cond_g.constant, cond_h.constant, 0.0)
    return verdict


def _certify_pole(system: VectorFieldSystem, config: CertifyConfig, theorem: str) -> TheoremVerdict:
    curvature = config.curvature or CurvatureData()
    has_pole = (isinstance(system.model, EmbeddedModel) and system.model._pole_distance is not None) \
        or curvature.pole is not None
    if not has_pole:
        return _na(theorem, "no pole data available")
    prof = check_growth(system, "pole_conditions", radii=config.radii,
                        n_directions=config.n_directions, curvature=curvature)
    return _verdict_from_profile(theorem, [prof])


def _certify_prop72(system: VectorFieldSystem, config: CertifyConfig) -> TheoremVerdict:
    curvature = config.curvature or CurvatureData()
    model = system.model
    has_pole = (isinstance(model, EmbeddedModel) and model._pole_distance is not None) \
        or curvature.pole is not None
    if not has_pole:
        return _na("Prop7.2", "no pole data available")
    eps = config.epsilon
    band_pts = sample_states(model, config.radii, config.n_directions)
    dec = effective_drift(system)

    def radial(x):
        return pole_distance(model, curvature, x)

    conds = [
        _condition_from_bands(
            "coeff_vs_hessian_bound_eps", band_pts,
            lambda x: _coeff_norm_sq(system, x) * radial(x)[2] / (1.0 + radial(x)[0]) ** (2.0 - eps)),
        _condition_from_bands(
            "grad_X_sq_growth_eps", band_pts,
            lambda x: _grad_x_norm_sq(system, x, tangent_directions(model, x, config.n_directions))
            / (1.0 + radial(x)[0]) ** eps),
        _condition_from_bands(
            "effective_drift_radial_eps", band_pts,
            lambda x: float(np.sum(radial(x)[1] * dec.a_x(x))) / (1.0 + radial(x)[0]) ** (2.0 - eps)),
        _condition_from_bands(
            "H_p_growth_eps", band_pts,
            lambda x: _sup_dirs(lambda v: eval_Hp(system, x, v, config.p, curvature=config.curvature),
                                tangent_directions(model, x, config.n_directions))
            / (1.0 + radial(x)[0]) ** eps),
    ]
    prof = GrowthProfile(kind="prop7.2", conditions=conds,
                         radii=[float(r) for r in config.radii],
                         n_directions=config.n_directions)
    return _verdict_from_profile("Prop7.2", [prof])


def _certify_thm81(system: VectorFieldSystem, config: CertifyConfig) -> TheoremVerdict:
    model = system.model
    ric = _ricci_fn(model, config.curvature)
    if ric is None:
        return _na("Thm8.1", "Ricci curvature data unavailable")
    band_pts = sample_states(model, config.radii, config.n_directions)
    probe = band_pts[0][0]
    if isometry_defect(system, np.asarray(probe, dtype=float)) > ISOMETRY_TOL:
        return _na("Thm8.1", "system is not a Brownian system (X^*X != Id)")

    c1 = _condition_from_bands(
        "grad_X_bounded", band_pts,
        lambda x: np.sqrt(_grad_x_norm_sq(system, x, tangent_directions(model, x, config.n_directions))))

    def lower_ratio(x):
        dirs = tangent_directions(model, x, config.n_directions)
        return _sup_dirs(lambda v: _grad_z_quad(system, x, v) - 0.5 * float(ric(x, v)), dirs)

    c2 = _condition_from_bands("gradZ_minus_half_ric_upper", band_pts, lower_ratio)
    prof = GrowthProfile(kind="thm8.1", conditions=[c1, c2],
                         radii=[float(r) for r in config.radii],
                         n_directions=config.n_directions)
    return _verdict_from_profile("Thm8.1", [prof])


def _certify_thm82(system: VectorFieldSystem, config: CertifyConfig) -> TheoremVerdict:
    model = system.model
    curvature = config.curvature or CurvatureData()
    ric = _ricci_fn(model, curvature)
    has_pole = (isinstance(model, EmbeddedModel) and model._pole_distance is not None) \
        or curvature.pole is not None
    if ric is None or not has_pole:
        return _na("Thm8.2", "needs Ricci data and a pole configuration (cut locus avoided)")
    band_pts = sample_states(model, config.radii, config.n_directions)
    probe = band_pts[0][0]
    if isometry_defect(system, np.asarray(probe, dtype=float)) > ISOMETRY_TOL:
        return _na("Thm8.2", "system is not a Brownian system (X^*X != Id)")
    z, _ = _z_field(system)

    def radial(x):
        return pole_distance(model, curvature, x)

    conds = [
        _condition_from_bands(
            "ric_quadratic_lower", band_pts,
            lambda x: _sup_dirs(lambda v: -float(ric(x, v)), tangent_directions(model, x, config.n_directions))
            / (1.0 + radial(x)[0] ** 2)),
        _condition_from_bands(
            "drift_radial", band_pts,
            lambda x: float(np.sum(radial(x)[1] * z(x))) / (1.0 + radial(x)[0])),
        _condition_from_bands(
            "grad_X_sq_sublog_r", band_pts,
            lambda x: _grad_x_norm_sq(system, x, tangent_directions(model, x, config.n_directions))
            / (1.0 + np.log1p(radial(x)[0]))),
        _condition_from_bands(
            "two_gradZ_minus_ric_sublog_r", band_pts,
            lambda x: _sup_dirs(lambda v: 2.0 * _grad_z_quad(system, x, v) - float(ric(x, v)),
                                tangent_directions(model, x, config.n_directions))
            / (1.0 + np.log1p(radial(x)[0]))),
    ]
    prof = GrowthProfile(kind="thm8.2", conditions=conds,
                         radii=[float(r) for r in config.radii],
                         n_directions=config.n_directions)
    return _verdict_from_profile("Thm8.2", [prof])


def _certify_cor83(system: VectorFieldSystem, config: CertifyConfig) -> TheoremVerdict:
    model = system.model
    if not (isinstance(model, EmbeddedModel) and system.is_gradient):
        return _na("Cor8.3", "stated for gradient Brownian systems of embeddings")
    band_pts = sample_states(model, config.radii, config.n_directions)
    ref = np.asarray(band_pts[0][0], dtype=float)
    z, _ = _z_field(system)

    def r_proxy(x):
        # ambient distance stands in for the intrinsic one (lower bound)
        return float(vec_norm(np.asarray(x, dtype=float) - ref))

    def sff_sq(x):
        dirs = tangent_directions(model, x, config.n_directions)
        def one(v):
            J = _covariant_column_jacobians(system, x, v)
            return float(np.sum(J * J))  # = |alpha(v, .)|_HS^2 for gradient systems
        return _sup_dirs(one, dirs)

    conds = [
        _condition_from_bands(
            "sff_sq_sublog", band_pts,
            lambda x: sff_sq(x) / (1.0 + np.log1p(r_proxy(x)))),
        _condition_from_bands(
            "drift_radial", band_pts,
            lambda x: float(vec_norm(z(x))) / (1.0 + r_proxy(x))),
        _condition_from_bands(
            "gradZ_sublog", band_pts,
            lambda x: _sup_dirs(lambda v: _grad_z_quad(system, x, v),
                                tangent_directions(model, x, config.n_directions))
            / (1.0 + np.log1p(r_proxy(x)))),
    ]
    prof = GrowthProfile(kind="cor8.3", conditions=conds,
                         radii=[float(r) for r in config.radii],
                         n_directions=config.n_directions)
    verdict = _verdict_from_profile("Cor8.3", [prof])
    if verdict.status == "certified":
        # the adjoint of a gradient Brownian system is gradient Brownian with -Z
        verdict.constants["diffeomorphism"] = 1.0
    return verdict


def _certify_diffeo(system: VectorFieldSystem, config: CertifyConfig) -> TheoremVerdict:
    """Flow-of-diffeomorphisms verdict: a strong-completeness certificate must
    hold for the system and for its adjoint."""
    if system.is_gradient:
        route = "Cor8.3"
        fwd = _certify_cor83(system, config)
        bwd = _certify_cor83(adjoint(system), config)
    elif _flat_metric(system.model):
        route = "Cor5.2"
        fwd = _certify_cor52(system, config, route)
        bwd = _certify_cor52(adjoint(system), config, route)
    else:
        route = "Thm8.1"
        fwd = _certify_thm81(system, config)
        bwd = _certify_thm81(adjoint(system), config)
    if fwd.status == "not-applicable" or bwd.status == "not-applicable":
        return _na("Diffeo", f"route {route} not applicable")
    status = "certified" if fwd.status == bwd.status == "certified" else "failed"
    out = TheoremVerdict(theorem="Diffeo", status=status,
                         conditions=[{"forward": fwd.to_dict(), "adjoint": bwd.to_dict()}],
                         constants={})
    if status == "failed":
        bad = fwd if fwd.status == "failed" else bwd
        out.failing_sample = bad.failing_sample
    return out
