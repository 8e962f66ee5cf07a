"""Moment-like state of a polygonal feature set and its analytic dynamics.

The controlled state is the 4-vector ``[sx, sy, sigma_bar, a_bar]``:
vertex-centroid coordinates on the normalized image plane, the log of the
shoelace area, and the tangent of the reference angle (the direction from
the centroid to the midpoint of two reference vertices).

All public functions operate on a single polygon. The ``_batch``-suffixed
helpers accept leading batch dimensions on the vertex array and are used by
the predictive controller, which rolls out many candidate trajectories at
once; they skip validation and report trouble through non-finite outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .camera import interaction_matrices
from .errors import AngleSingularity, DegenerateArea, StepDegeneracy

__all__ = [
    "EPS_AREA",
    "EPS_ANGLE",
    "PolygonFeatures",
    "centroid",
    "signed_area_sum",
    "area",
    "extract_state",
    "area_gradient",
    "angle_gradient",
    "dynamics_matrix",
    "state_jacobian",
    "propagate_discrete",
]

# Degeneracy guards (normalized units^2 and normalized units). Tracking
# tasks never approach these legitimately; reject instead of regularizing.
EPS_AREA = 1e-9
EPS_ANGLE = 1e-6


@dataclass(frozen=True)
class PolygonFeatures:
    """Ordered polygon vertices on the normalized image plane.

    ``reference_pair`` holds the (0-based) indices of the two vertices whose
    midpoint defines the orientation feature; they default to the first two.
    """

    vertices: np.ndarray
    reference_pair: tuple = (0, 1)

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
            raise ValueError("vertices must be an (N, 2) array with N >= 3")
        if not np.isfinite(v).all():
            raise ValueError("vertices must be finite")
        i, j = self.reference_pair
        n = v.shape[0]
        if i == j or not (0 <= i < n and 0 <= j < n):
            raise ValueError("reference pair must be two distinct in-range indices")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "reference_pair", (int(i), int(j)))
        if _shoelace_sum(v) == 0.0:
            raise ValueError("polygon has zero signed area sum")

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]


# ---------------------------------------------------------------------------
# batched kernels (vertices shaped (..., N, 2))
# ---------------------------------------------------------------------------


def _shoelace_terms(pts):
    """Per-edge determinants d_j = x_j*y_{j+1} - x_{j+1}*y_j, cyclic."""
    x = pts[..., 0]
    y = pts[..., 1]
    xn = np.roll(x, -1, axis=-1)
    yn = np.roll(y, -1, axis=-1)
    return x * yn - xn * y


def _shoelace_sum(pts):
    return _shoelace_terms(pts).sum(axis=-1)


def _area_grad_batch(pts):
    """Gradient of the shoelace area w.r.t. each vertex, shape (..., N, 2)."""
    x = pts[..., 0]
    y = pts[..., 1]
    sign = np.sign(_shoelace_sum(pts))
    gx = np.roll(y, -1, axis=-1) - np.roll(y, 1, axis=-1)
    gy = np.roll(x, 1, axis=-1) - np.roll(x, -1, axis=-1)
    return 0.5 * sign[..., None, None] * np.stack([gx, gy], axis=-1)


def _angle_parts(pts, ref):
    """Numerator/denominator (E2, E1) of the reference-angle tangent."""
    i, j = ref
    c = pts.mean(axis=-2)
    e1 = pts[..., i, 0] + pts[..., j, 0] - 2.0 * c[..., 0]
    e2 = pts[..., i, 1] + pts[..., j, 1] - 2.0 * c[..., 1]
    return e1, e2


def _angle_grad_batch(pts, ref):
    """Quotient-rule gradient of the angle tangent, shape (..., N, 2).

    Every vertex couples through the centroid (-2/N per coordinate); the
    reference vertices carry an extra unit term.
    """
    n = pts.shape[-2]
    i, j = ref
    e1, e2 = _angle_parts(pts, ref)
    w = np.full(n, -2.0 / n)
    w[i] += 1.0
    w[j] += 1.0
    inv_e1 = 1.0 / e1
    gx = (-e2 * inv_e1 * inv_e1)[..., None] * w
    gy = inv_e1[..., None] * w
    return np.stack([gx, gy], axis=-1)


def _state_batch(pts, ref):
    """Moment state (..., 4) without degeneracy checks; invalid -> non-finite."""
    c = pts.mean(axis=-2)
    sigma = 0.5 * np.abs(_shoelace_sum(pts))
    e1, e2 = _angle_parts(pts, ref)
    with np.errstate(divide="ignore", invalid="ignore"):
        sig_bar = np.log(sigma)
        a_bar = e2 / e1
    return np.stack([c[..., 0], c[..., 1], sig_bar, a_bar], axis=-1)


def _dynamics_batch(pts, z, ref):
    """Chain-rule dynamics matrix g, shape (..., 4, 6), plus reusable terms.

    Returns ``(g, L, sigma, agrad, angrad)`` so callers that also need the
    per-vertex interaction matrices or the state Jacobian rows do not
    recompute them.
    """
    L = interaction_matrices(pts, z)
    rows12 = L.mean(axis=-3)
    sigma = 0.5 * np.abs(_shoelace_sum(pts))
    agrad = _area_grad_batch(pts)
    angrad = _angle_grad_batch(pts, ref)
    with np.errstate(divide="ignore", invalid="ignore"):
        row3 = np.einsum("...nc,...ncj->...j", agrad, L) / sigma[..., None]
    row4 = np.einsum("...nc,...ncj->...j", angrad, L)
    # Analytically null entries; enforced exactly.
    row3[..., [0, 1, 5]] = 0.0
    row4[..., [0, 1, 2]] = 0.0
    g = np.concatenate(
        [rows12, row3[..., None, :], row4[..., None, :]], axis=-2
    )
    return g, L, sigma, agrad, angrad


# ---------------------------------------------------------------------------
# public single-polygon operations
# ---------------------------------------------------------------------------


def centroid(poly: PolygonFeatures):
    """Arithmetic mean of the vertices."""
    return poly.vertices.mean(axis=0)


def signed_area_sum(poly: PolygonFeatures) -> float:
    """Cyclic sum of the shoelace determinants (twice the signed area)."""
    return float(_shoelace_sum(poly.vertices))


def area(poly: PolygonFeatures) -> float:
    """Polygon area sigma = |signed_area_sum| / 2."""
    return 0.5 * abs(signed_area_sum(poly))


def extract_state(poly: PolygonFeatures):
    """Moment state [sx, sy, log(sigma), tan(angle)] of the polygon.

    Raises :class:`DegenerateArea` for near-flat polygons and
    :class:`AngleSingularity` when the reference direction is vertical in
    the tangent parametrization.
    """
    sigma = area(poly)
    if sigma <= EPS_AREA:
        raise DegenerateArea(f"polygon area {sigma:.3e} at or below guard")
    e1, _ = _angle_parts(poly.vertices, poly.reference_pair)
    if abs(e1) <= EPS_ANGLE:
        raise AngleSingularity(f"angle denominator {e1:.3e} at or below guard")
    return _state_batch(poly.vertices, poly.reference_pair)


def area_gradient(poly: PolygonFeatures):
    """Per-vertex gradient of the area sigma, shape (N, 2)."""
    if abs(signed_area_sum(poly)) <= 2.0 * EPS_AREA:
        raise DegenerateArea("area gradient undefined for degenerate polygon")
    return _area_grad_batch(poly.vertices)


def angle_gradient(poly: PolygonFeatures):
    """Per-vertex gradient of the angle tangent, shape (N, 2)."""
    e1, _ = _angle_parts(poly.vertices, poly.reference_pair)
    if abs(e1) <= EPS_ANGLE:
        raise AngleSingularity("angle gradient undefined near singular reference")
    return _angle_grad_batch(poly.vertices, poly.reference_pair)


def dynamics_matrix(poly: PolygonFeatures, x, z: float, mode: str = "chain_rule"):
    """4x6 input map g such that d/dt state = g @ nu under camera motion.

    ``chain_rule`` (default) derives every entry from the vertices through
    the analytic gradients and is the ground truth used for control.
    ``paper_closed_form`` reproduces the printed closed-form rows instead:
    the area row then carries a constant factor of 9 on its angular-rate
    terms with the opposite column pairing, and rows 1-2 read the centroid
    entries from ``x`` rather than the vertices. The two modes are compared,
    not mixed.
    """
    x = np.asarray(x, dtype=float)
    if mode == "chain_rule":
        _check_nondegenerate(poly)
        g, _, _, _, _ = _dynamics_batch(poly.vertices, z, poly.reference_pair)
        return g
    if mode == "paper_closed_form":
        return _dynamics_closed_form(poly, x, z)
    raise ValueError(f"unknown mode {mode!r}")


def _check_nondegenerate(poly: PolygonFeatures):
    if area(poly) <= EPS_AREA:
        raise DegenerateArea("dynamics undefined for degenerate polygon")
    e1, _ = _angle_parts(poly.vertices, poly.reference_pair)
    if abs(e1) <= EPS_ANGLE:
        raise AngleSingularity("dynamics undefined near singular reference angle")


def _dynamics_closed_form(poly: PolygonFeatures, x, z: float):
    if z <= 0:
        raise ValueError("depth must be positive")
    _check_nondegenerate(poly)
    pts = poly.vertices
    xs = pts[:, 0]
    ys = pts[:, 1]
    n = poly.n_vertices
    d = _shoelace_terms(pts)
    _, _, _, a_bar = x

    g = np.zeros((4, 6))
    # The printed centroid rows are the vertex-averaged interaction matrix
    # (its depth columns written through the state); both modes share the
    # identical averaging arithmetic so rows 1-2 agree exactly.
    g[:2] = interaction_matrices(pts, z).mean(axis=0)
    sum_xd = float(((xs + np.roll(xs, -1)) * d).sum())
    sum_yd = float(((ys + np.roll(ys, -1)) * d).sum())
    g[2] = [0.0, 0.0, 2.0 / z, 9.0 * sum_xd, -9.0 * sum_yd, 0.0]

    i, j = poly.reference_pair
    e1 = xs[i] + xs[j] - 2.0 * np.mean(xs)
    g44 = (
        ys[i] ** 2 + ys[j] ** 2 - (2.0 / n) * float((ys * ys).sum())
    ) / e1 - a_bar * (
        xs[i] * ys[i] + xs[j] * ys[j] - (2.0 / n) * float((xs * ys).sum())
    ) / e1
    g45 = a_bar * (
        xs[i] ** 2 + xs[j] ** 2 - (2.0 / n) * float((xs * xs).sum())
    ) / e1 - (
        xs[i] * ys[i] + xs[j] * ys[j] - (2.0 / n) * float((xs * ys).sum())
    ) / e1
    g[3] = [0.0, 0.0, 0.0, g44, g45, -(a_bar * a_bar) - 1.0]
    return g


def state_jacobian(poly: PolygonFeatures):
    """Jacobian of the moment state w.r.t. the flattened vertices, (4, 2N).

    Rows 1-2 are the constant centroid averaging blocks; rows 3-4 are the
    log-area and angle gradients.
    """
    _check_nondegenerate(poly)
    n = poly.n_vertices
    jac = np.zeros((4, 2 * n))
    jac[0, 0::2] = 1.0 / n
    jac[1, 1::2] = 1.0 / n
    jac[2] = (_area_grad_batch(poly.vertices) / area(poly)).ravel()
    jac[3] = _angle_grad_batch(poly.vertices, poly.reference_pair).ravel()
    return jac


def propagate_discrete(poly: PolygonFeatures, x, nu, target_flow, dt: float, z: float):
    """One Euler step of the coupled vertex/state model at depth ``z``.

    Vertices advance by their interaction-matrix flow plus the target flow;
    the moment state advances by its own input map plus the state-Jacobian
    coupling to the same target flow. Returns ``(poly', x')``. Raises
    :class:`StepDegeneracy` if the stepped polygon collapses.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    x = np.asarray(x, dtype=float)
    nu = np.asarray(nu, dtype=float)
    flow = np.asarray(target_flow, dtype=float).reshape(poly.n_vertices, 2)
    if not (np.isfinite(x).all() and np.isfinite(nu).all() and np.isfinite(flow).all()):
        raise ValueError("inputs must be finite")
    _check_nondegenerate(poly)

    g, L, sigma, agrad, angrad = _dynamics_batch(poly.vertices, z, poly.reference_pair)
    new_pts = poly.vertices + (L @ nu) * dt + flow * dt

    coupling = np.empty(4)
    coupling[:2] = flow.mean(axis=0)
    coupling[2] = float((agrad * flow).sum()) / sigma
    coupling[3] = float((angrad * flow).sum())
    new_x = x + (g @ nu) * dt + coupling * dt

    if 0.5 * abs(_shoelace_sum(new_pts)) <= EPS_AREA:
        raise StepDegeneracy("propagated polygon is degenerate")
    e1, _ = _angle_parts(new_pts, poly.reference_pair)
    if abs(e1) <= EPS_ANGLE:
        raise StepDegeneracy("propagated polygon has singular reference angle")
    return PolygonFeatures(new_pts, poly.reference_pair), new_x
