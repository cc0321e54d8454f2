"""Geometric backends: flat space, punctured and rescaled variants, isometric
embeddings.

Everything else in the library talks to a ``ManifoldModel``: the integrator
asks for retractions and escape coordinates, the bilinear forms ask for
projections, second fundamental forms and Ricci data, the estimators ask for
metric norms.  Models are immutable after construction and safe to read from
any number of workers.

State arrays follow the broadcasting convention used across flowlab: the last
axis is the ambient coordinate axis, leading axes are batch axes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import CapabilityError, ContractError, DomainError, SingularPointError

Array = np.ndarray

#: relative step for finite-difference derivatives of user-supplied fields
FD_REL_STEP = 1e-5

#: tangency tolerance for contract checks: 1e-8 * (1 + |v|)
TANGENCY_TOL = 1e-8


def vec_norm(x: Array, axis: int = -1) -> Array:
    return np.sqrt(np.sum(np.square(x), axis=axis))


def coth(z):
    return 1.0 / np.tanh(z)


@dataclass(frozen=True)
class CurvatureData:
    """Curvature inputs for radial estimates and the Ricci form.

    ``ricci(x, v)`` returns Ric_x(v, v).  ``sectional_lower_bound`` is the
    nondecreasing function L with L >= 1 such that sectional curvatures are
    bounded below by -L(r)^2; it defaults to the constant 1.  ``pole`` is the
    base point of the distance function r when one exists.
    """

    ricci: Optional[Callable[[Array, Array], Array]] = None
    sectional_lower_bound: Optional[Callable[[Array], Array]] = None
    pole: Optional[Array] = None

    def lower_bound_fn(self) -> Callable[[Array], Array]:
        if self.sectional_lower_bound is None:
            return lambda r: np.ones_like(np.asarray(r, dtype=float))
        return self.sectional_lower_bound


class ManifoldModel:
    """Base class; concrete models override the geometric primitives."""

    kind = "abstract"

    def __init__(self, ambient_dim: int, intrinsic_dim: int):
        if intrinsic_dim > ambient_dim or intrinsic_dim <= 0:
            raise ContractError("need 0 < intrinsic_dim <= ambient_dim")
        self.ambient_dim = int(ambient_dim)
        self.intrinsic_dim = int(intrinsic_dim)

    # -- admissibility ------------------------------------------------
    def admissible(self, x: Array) -> Array:
        """Boolean mask of states inside the model's domain."""
        x = np.asarray(x, dtype=float)
        return np.isfinite(x).all(axis=-1)

    def check_admissible(self, x: Array) -> None:
        ok = self.admissible(x)
        if not np.all(ok):
            raise DomainError(f"state outside admissible set of {self.kind} model")

    # -- metric and tangent structure ---------------------------------
    def metric_norm(self, x: Array, v: Array) -> Array:
        return vec_norm(np.asarray(v, dtype=float))

    def log_metric_factor(self, x: Array) -> Array:
        """log of the conformal factor w(x) with |v|_x = w(x)|v|; 0 for isometric models."""
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1])

    def tangent_project(self, x: Array, u: Array) -> Array:
        return np.asarray(u, dtype=float)

    def retract(self, x: Array) -> Array:
        return np.asarray(x, dtype=float)

    # -- explosion bookkeeping ----------------------------------------
    def escape_coordinate(self, x: Array) -> Array:
        """Scalar that tends to infinity exactly when x leaves every compact set."""
        return vec_norm(np.asarray(x, dtype=float))


class FlatModel(ManifoldModel):
    """R^n with the Euclidean metric."""

    kind = "flat"

    def __init__(self, dim: int):
        super().__init__(dim, dim)

    def __repr__(self):
        return f"FlatModel({self.ambient_dim})"


class PuncturedFlatModel(FlatModel):
    """R^n minus a point.  The metric is still flat, so the puncture only
    restricts the admissible set; dynamics never special-case it."""

    kind = "punctured_flat"

    def __init__(self, dim: int, puncture, exclusion_radius: float = 1e-8):
        super().__init__(dim)
        self.puncture = np.asarray(puncture, dtype=float).reshape(dim)
        self.exclusion_radius = float(exclusion_radius)

    def admissible(self, x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        ok = np.isfinite(x).all(axis=-1)
        return ok & (vec_norm(x - self.puncture) > self.exclusion_radius)

    def puncture_distance(self, x: Array) -> Array:
        return vec_norm(np.asarray(x, dtype=float) - self.puncture)

    def __repr__(self):
        return f"PuncturedFlatModel({self.ambient_dim}, puncture={self.puncture})"


class RescaledFlatModel(ManifoldModel):
    """R^n (minus an excluded set) with the conformal norm |v|_x = w(x)|v|.

    Only the metric norm is used for this model; no connection is attached to
    the rescaled metric, so covariant derivatives are never requested from it.
    """

    kind = "rescaled_flat"

    def __init__(self, dim: int, weight: Callable[[Array], Array],
                 excluded=None, exclusion_radius: float = 1e-12):
        super().__init__(dim, dim)
        self.weight = weight
        self.excluded = None if excluded is None else np.asarray(excluded, dtype=float).reshape(dim)
        self.exclusion_radius = float(exclusion_radius)

    def admissible(self, x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        ok = np.isfinite(x).all(axis=-1)
        if self.excluded is not None:
            ok = ok & (vec_norm(x - self.excluded) > self.exclusion_radius)
        return ok

    def metric_norm(self, x: Array, v: Array) -> Array:
        self.check_admissible(x)
        w = np.asarray(self.weight(np.asarray(x, dtype=float)))
        if np.any(w <= 0):
            raise DomainError("metric weight must be positive on the admissible set")
        return w * vec_norm(np.asarray(v, dtype=float))

    def log_metric_factor(self, x: Array) -> Array:
        return np.log(np.asarray(self.weight(np.asarray(x, dtype=float))))

    def escape_coordinate(self, x: Array) -> Array:
        # points where w blows up are at metric infinity, like |x| -> inf
        r = vec_norm(np.asarray(x, dtype=float))
        if self.excluded is not None:
            d = vec_norm(np.asarray(x, dtype=float) - self.excluded)
            with np.errstate(divide="ignore"):
                return np.maximum(r, 1.0 / d)
        return r


class EmbeddedModel(ManifoldModel):
    """Isometrically embedded submanifold of R^m given by chart data.

    ``projection(x)`` returns the orthogonal projection onto the tangent space
    as an (m, m) matrix (batched over leading axes).  ``retraction`` maps
    near-manifold ambient points back onto the manifold.  Analytic second
    fundamental form / projection derivative / Ricci / pole-distance callables
    are optional; finite differences of the projection field fill in for a
    missing second fundamental form.
    """

    kind = "embedded"

    def __init__(self, name: str, ambient_dim: int, intrinsic_dim: int,
                 projection: Callable[[Array], Array],
                 retraction: Callable[[Array], Array],
                 sff: Optional[Callable[[Array, Array, Array], Array]] = None,
                 dprojection: Optional[Callable[[Array, Array], Array]] = None,
                 ricci: Optional[Callable[[Array, Array], Array]] = None,
                 pole: Optional[Array] = None,
                 pole_distance: Optional[Callable[[Array], tuple]] = None,
                 sampler: Optional[Callable[[np.random.Generator, int], Array]] = None,
                 admissible: Optional[Callable[[Array], Array]] = None,
                 mean_curvature: Optional[Callable[[Array], Array]] = None):
        super().__init__(ambient_dim, intrinsic_dim)
        self.name = name
        self.projection = projection
        self.retraction = retraction
        self.sff = sff
        self.dprojection = dprojection
        self.ricci = ricci
        self.pole = None if pole is None else np.asarray(pole, dtype=float)
        self._pole_distance = pole_distance
        self.sampler = sampler
        self._admissible = admissible
        self.mean_curvature = mean_curvature  # trace of alpha, batched

    def admissible(self, x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        ok = np.isfinite(x).all(axis=-1)
        if self._admissible is not None:
            ok = ok & np.asarray(self._admissible(x))
        return ok

    def tangent_project(self, x: Array, u: Array) -> Array:
        P = self.projection(np.asarray(x, dtype=float))
        return np.einsum("...ij,...j->...i", P, np.asarray(u, dtype=float))

    def normal_project(self, x: Array, u: Array) -> Array:
        u = np.asarray(u, dtype=float)
        return u - self.tangent_project(x, u)

    def retract(self, x: Array) -> Array:
        return self.retraction(np.asarray(x, dtype=float))

    def is_tangent(self, x: Array, v: Array) -> Array:
        v = np.asarray(v, dtype=float)
        resid = vec_norm(self.normal_project(x, v))
        return resid <= TANGENCY_TOL * (1.0 + vec_norm(v))

    def tangent_frame(self, x: Array) -> Array:
        """Orthonormal basis of the tangent space, columns of an (m, k) array.

        Single point only.  Deterministic: eigenvectors of the projection
        matrix with eigenvalue 1 as returned by ``eigh``.
        """
        P = self.projection(np.asarray(x, dtype=float))
        if P.ndim != 2:
            raise ContractError("tangent_frame takes a single point")
        w, V = np.linalg.eigh(P)
        cols = V[:, w > 0.5]
        if cols.shape[1] != self.intrinsic_dim:
            raise ContractError("projection rank does not match intrinsic dimension")
        return cols

    def __repr__(self):
        return f"EmbeddedModel({self.name}, m={self.ambient_dim}, n={self.intrinsic_dim})"


# ----------------------------------------------------------------------
# module-level operations (the public surface used by the rest of flowlab)
# ----------------------------------------------------------------------

def tangent_project(model: ManifoldModel, x: Array, u: Array) -> Array:
    """Project an ambient vector onto the tangent space at x.

    Identity on flat-family models.  Raises ``DomainError`` when x is not
    admissible (puncture, outside chart).
    """
    model.check_admissible(x)
    return model.tangent_project(x, u)


def metric_norm(model: ManifoldModel, x: Array, v: Array) -> Array:
    """Norm of v in the model's metric at x."""
    model.check_admissible(x)
    return model.metric_norm(x, v)


def second_fundamental_form(model: ManifoldModel, x: Array, v: Array, w: Array) -> Array:
    """alpha_x(v, w): the normal-valued second fundamental form of an embedding.

    Uses the model's analytic form when present, otherwise central finite
    differences of the projection field (relative step ``FD_REL_STEP``):
    alpha(v, w) = Y(x) (D_v P)(x) w for tangent v, w.
    """
    if not isinstance(model, EmbeddedModel):
        raise CapabilityError("second fundamental form needs an embedded model")
    model.check_admissible(x)
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    for name, vec in (("v", v), ("w", w)):
        if not np.all(model.is_tangent(x, vec)):
            raise ContractError(f"{name} is not tangent at x beyond tolerance")
    if model.sff is not None:
        return model.sff(x, v, w)
    return _sff_fd(model, x, v, w)


def _sff_fd(model: EmbeddedModel, x: Array, v: Array, w: Array) -> Array:
    # bilinearity: differentiate along the unit direction of v, scale back after
    nv = np.asarray(vec_norm(v))
    vhat = v / np.where(nv == 0.0, 1.0, nv)[..., None]
    if model.dprojection is not None:
        dP = model.dprojection(x, vhat)
    else:
        h = np.asarray(FD_REL_STEP * (1.0 + vec_norm(x)))
        hv = h[..., None] * vhat
        dP = (model.projection(x + hv) - model.projection(x - hv)) / (2.0 * h)[..., None, None]
    dPw = np.einsum("...ij,...j->...i", dP, w)
    alpha_unit = dPw - model.tangent_project(x, dPw)
    return nv[..., None] * alpha_unit


def pole_distance(model: ManifoldModel, data: CurvatureData, x: Array):
    """Distance to the pole with its differential and the Hessian comparison
    bound L(r) coth(r L(r)).

    Returns ``(r, dr, hessian_bound)``.  Supported on flat-family models with
    a pole point, and on embedded built-ins that carry a closed-form distance
    (no geodesic solver is attempted).
    """
    model.check_admissible(x)
    x = np.asarray(x, dtype=float)
    if isinstance(model, EmbeddedModel):
        if model._pole_distance is None:
            raise CapabilityError(f"model {model.kind} has no closed-form pole distance")
        r, dr = model._pole_distance(x)
    else:
        pole = data.pole
        if pole is None:
            raise CapabilityError("pole_distance needs a pole in CurvatureData")
        diff = x - np.asarray(pole, dtype=float)
        r = vec_norm(diff)
        if np.any(r == 0.0):
            raise SingularPointError("dr is undefined at the pole itself")
        dr = diff / (r[..., None] if np.ndim(r) else r)
    L = data.lower_bound_fn()(r)
    if np.any(L < 1.0):
        raise ContractError("sectional lower bound L must satisfy L >= 1")
    bound = L * coth(np.maximum(r, 1e-300) * L)
    return r, dr, bound


# ----------------------------------------------------------------------
# built-in embedded models
# ----------------------------------------------------------------------

def _sphere_projection(x: Array) -> Array:
    x = np.asarray(x, dtype=float)
    n2 = np.sum(x * x, axis=-1)[..., None, None]
    outer = x[..., :, None] * x[..., None, :]
    return np.eye(x.shape[-1]) - outer / n2


def _sphere_dprojection(x: Array, v: Array) -> Array:
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    n2 = np.sum(x * x, axis=-1)[..., None, None]
    xv = np.sum(x * v, axis=-1)[..., None, None]
    sym = x[..., :, None] * v[..., None, :] + v[..., :, None] * x[..., None, :]
    outer = x[..., :, None] * x[..., None, :]
    return -sym / n2 + 2.0 * xv * outer / (n2 * n2)


def sphere_model(n: int) -> EmbeddedModel:
    """Unit sphere S^{n-1} isometrically embedded in R^n."""
    if n < 2:
        raise ContractError("sphere needs ambient dimension >= 2")

    def sff(x, v, w):
        x = np.asarray(x, dtype=float)
        inner = np.sum(np.asarray(v, dtype=float) * np.asarray(w, dtype=float), axis=-1)
        n2 = np.sum(x * x, axis=-1)
        return -(inner / n2)[..., None] * x

    def retraction(x):
        x = np.asarray(x, dtype=float)
        return x / vec_norm(x)[..., None]

    def ricci(x, v):
        v = np.asarray(v, dtype=float)
        return (n - 2) * np.sum(v * v, axis=-1)

    def sampler(rng, k):
        pts = rng.standard_normal((k, n))
        return pts / vec_norm(pts)[..., None]

    def mean_curvature(x):
        x = np.asarray(x, dtype=float)
        n2 = np.sum(x * x, axis=-1)[..., None]
        return -(n - 1) * x / n2

    return EmbeddedModel(
        name=f"sphere({n})", ambient_dim=n, intrinsic_dim=n - 1,
        projection=_sphere_projection, retraction=retraction,
        sff=sff, dprojection=_sphere_dprojection, ricci=ricci,
        sampler=sampler, mean_curvature=mean_curvature,
    )


def _paraboloid_projection(x: Array) -> Array:
    x = np.asarray(x, dtype=float)
    u = x[..., :2]
    uu = np.sum(u * u, axis=-1)[..., None, None]
    # J = [[I2], [u^T]], P = J (I + u u^T)^{-1} J^T via Sherman-Morrison
    J = np.zeros(x.shape[:-1] + (3, 2))
    J[..., 0, 0] = 1.0
    J[..., 1, 1] = 1.0
    J[..., 2, :] = u
    inv = np.eye(2) - (u[..., :, None] * u[..., None, :]) / (1.0 + uu)
    return np.einsum("...ik,...kl,...jl->...ij", J, inv, J)


def paraboloid_model() -> EmbeddedModel:
    """Paraboloid of revolution z = |u|^2 / 2 in R^3, pole at the vertex.

    Gaussian curvature K = (1 + |u|^2)^{-2} > 0, so the sectional lower bound
    L = 1 is valid and the vertex distance has a closed form along meridians.
    """

    def retraction(x):
        x = np.asarray(x, dtype=float).copy()
        x[..., 2] = 0.5 * np.sum(x[..., :2] ** 2, axis=-1)
        return x

    def sff(x, v, w):
        x = np.asarray(x, dtype=float)
        q = np.sum(np.asarray(v, dtype=float)[..., :2] * np.asarray(w, dtype=float)[..., :2], axis=-1)
        e3 = np.zeros(x.shape[:-1] + (3,))
        e3[..., 2] = 1.0
        P = _paraboloid_projection(x)
        y_e3 = e3 - np.einsum("...ij,...j->...i", P, e3)
        return q[..., None] * y_e3

    def ricci(x, v):
        x = np.asarray(x, dtype=float)
        rho2 = np.sum(x[..., :2] ** 2, axis=-1)
        v = np.asarray(v, dtype=float)
        return np.sum(v * v, axis=-1) / (1.0 + rho2) ** 2

    def pole_dist(x):
        x = np.asarray(x, dtype=float)
        u = x[..., :2]
        rho = vec_norm(u)
        if np.any(rho == 0.0):
            raise SingularPointError("dr is undefined at the vertex")
        r = 0.5 * (rho * np.sqrt(1.0 + rho ** 2) + np.arcsinh(rho))
        uhat = u / rho[..., None]
        merid = np.concatenate([uhat, rho[..., None]], axis=-1)
        dr = merid / np.sqrt(1.0 + rho ** 2)[..., None]
        return r, dr

    def sampler(rng, k):
        u = rng.standard_normal((k, 2)) * 1.5
        z = 0.5 * np.sum(u * u, axis=-1)
        return np.concatenate([u, z[:, None]], axis=1)

    def mean_curvature(x):
        # trace alpha = tr(P Q) Y e3 with Q the chart-plane quadratic form
        x = np.asarray(x, dtype=float)
        P = _paraboloid_projection(x)
        trq = P[..., 0, 0] + P[..., 1, 1]
        e3 = np.zeros(x.shape[:-1] + (3,))
        e3[..., 2] = 1.0
        y_e3 = e3 - np.einsum("...ij,...j->...i", P, e3)
        return trq[..., None] * y_e3

    return EmbeddedModel(
        name="paraboloid", ambient_dim=3, intrinsic_dim=2,
        projection=_paraboloid_projection, retraction=retraction,
        sff=sff, ricci=ricci, pole=np.zeros(3), pole_distance=pole_dist,
        sampler=sampler, mean_curvature=mean_curvature,
    )


def graph_model(dim: int, height: Callable[[Array], Array],
                grad_height: Callable[[Array], Array]) -> EmbeddedModel:
    """Graph embedding u -> (u, h(u)) of R^dim into R^{dim+1}.

    Second fundamental form falls back to finite differences of the
    projection field unless the caller attaches one.
    """

    def projection(x):
        x = np.asarray(x, dtype=float)
        u = x[..., :dim]
        g = np.asarray(grad_height(u), dtype=float)
        # tangent basis rows (e_j, dh/du_j); normal nu ~ (-grad h, 1)
        nu = np.concatenate([-g, np.ones(g.shape[:-1] + (1,))], axis=-1)
        nu = nu / vec_norm(nu)[..., None]
        return np.eye(dim + 1) - nu[..., :, None] * nu[..., None, :]

    def retraction(x):
        x = np.asarray(x, dtype=float).copy()
        x[..., dim] = np.asarray(height(x[..., :dim]))
        return x

    return EmbeddedModel(
        name=f"graph({dim})", ambient_dim=dim + 1, intrinsic_dim=dim,
        projection=projection, retraction=retraction,
    )
