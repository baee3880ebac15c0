"""Curved cubic surface elements built from flat triangles with vertex normals.

Each flat triangle is upgraded to a 10-node cubic element in two stages:
Hermite-like arcs are fitted along the edges leaving vertex 1, then a family
of cross arcs sweeps between them. Node layout on the reference triangle
(r, s >= 0, r + s <= 1), numbered 1..10 and stored 0-based in that order:

    1 = (0, 0)    2 = (1/3, 0)    3 = (0, 1/3)    4 = (1, 0)    5 = (2/3, 0)
    6 = (0, 2/3)  7 = (2/3, 1/3)  8 = (1/3, 2/3)  9 = (0, 1)   10 = (1/3, 1/3)

Vertices are nodes 1, 4, 9; node 10 is interior. Positions anywhere on an
element come from the cubic Lagrange basis on these nodes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import FlatMesh


class DegenerateArcError(ValueError):
    """An edge arc could not be fitted (normal nearly parallel to the chord)."""


class DegenerateElementError(ValueError):
    """An element's surface Jacobian vanished."""


# ---------------------------------------------------------------------------
# edge arcs


@dataclass(frozen=True)
class CubicArc:
    """Space curve x(t) = c0 + c1 t + c2 t^2 + c3 t^3, t in [0, 1]."""

    c0: np.ndarray
    c1: np.ndarray
    c2: np.ndarray
    c3: np.ndarray


def fit_arc(p0, n0, p1, n1) -> CubicArc:
    """Fit a cubic arc between two surface points with outward unit normals.

    Endpoint tangents are the chord projected orthogonally to each endpoint
    normal. Their magnitude is 2|c|/(1 + cos(theta)), theta being half the
    turning angle between the projected directions; this reproduces straight
    segments exactly (theta = 0 gives chord length) and keeps circular arcs
    accurate to fourth order, where plain chord-length tangents would leave
    an O(theta^2) bulge error.
    """
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    n0 = np.asarray(n0, dtype=float)
    n1 = np.asarray(n1, dtype=float)
    chord = p1 - p0
    clen = float(np.linalg.norm(chord))
    if clen < 1e-300:
        raise DegenerateArcError("arc endpoints coincide")
    t0 = chord - np.dot(chord, n0) * n0
    t1 = chord - np.dot(chord, n1) * n1
    l0 = float(np.linalg.norm(t0))
    l1 = float(np.linalg.norm(t1))
    if l0 < 1e-12 * clen or l1 < 1e-12 * clen:
        raise DegenerateArcError(
            "endpoint normal is nearly parallel to the chord"
        )
    t0 /= l0
    t1 /= l1
    cos2t = float(np.clip(np.dot(t0, t1), -1.0, 1.0))
    cost = np.sqrt(0.5 * (1.0 + cos2t))
    mag = 2.0 * clen / (1.0 + cost)
    m0 = mag * t0
    m1 = mag * t1
    return CubicArc(
        c0=p0,
        c1=m0,
        c2=-3.0 * p0 + 3.0 * p1 - 2.0 * m0 - m1,
        c3=2.0 * p0 - 2.0 * p1 + m0 + m1,
    )


def arc_point(arc: CubicArc, t: float) -> np.ndarray:
    return arc.c0 + t * (arc.c1 + t * (arc.c2 + t * arc.c3))


def arc_velocity(arc: CubicArc, t: float) -> np.ndarray:
    return arc.c1 + t * (2.0 * arc.c2 + t * (3.0 * arc.c3))


def arc_acceleration(arc: CubicArc, t: float) -> np.ndarray:
    return 2.0 * arc.c2 + 6.0 * t * arc.c3


def arc_normal(arc: CubicArc, t: float, reference) -> tuple[np.ndarray, bool]:
    """Unit surface normal along an arc, from the curvature direction.

    The curvature vector is the acceleration with its tangential component
    removed, scaled by 1/|velocity|; only its direction matters here. The
    sign is fixed to give a positive dot product with `reference`. Where the
    arc is locally straight (|curvature| < 1e-12) the reference itself is
    returned and the second element of the result is True.
    """
    reference = np.asarray(reference, dtype=float)
    v = arc_velocity(arc, t)
    a = arc_acceleration(arc, t)
    v2 = float(np.dot(v, v))
    if v2 < 1e-300:
        return reference.copy(), True
    kappa = (a - (np.dot(v, a) / v2) * v) / np.sqrt(v2)
    klen = float(np.linalg.norm(kappa))
    if klen < 1e-12:
        return reference.copy(), True
    n = kappa / klen
    if float(np.dot(n, reference)) < 0.0:
        n = -n
    return n, False


# ---------------------------------------------------------------------------
# reference-triangle layout and the cubic Lagrange basis

REFERENCE_NODES = np.array(
    [
        (0.0, 0.0),
        (1.0 / 3.0, 0.0),
        (0.0, 1.0 / 3.0),
        (1.0, 0.0),
        (2.0 / 3.0, 0.0),
        (0.0, 2.0 / 3.0),
        (2.0 / 3.0, 1.0 / 3.0),
        (1.0 / 3.0, 2.0 / 3.0),
        (0.0, 1.0),
        (1.0 / 3.0, 1.0 / 3.0),
    ]
)

VERTEX_LOCAL = (0, 3, 8)  # local indices of the three triangle vertices

_MONO_POWERS = ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2),
                (3, 0), (2, 1), (1, 2), (0, 3))


def _monomials(pts: np.ndarray) -> np.ndarray:
    r = pts[..., 0]
    s = pts[..., 1]
    return np.stack([r**i * s**j for i, j in _MONO_POWERS], axis=-1)


def _monomial_gradients(pts: np.ndarray):
    r = pts[..., 0]
    s = pts[..., 1]
    zero = np.zeros_like(r)
    dr = np.stack(
        [i * r ** (i - 1) * s**j if i else zero for i, j in _MONO_POWERS],
        axis=-1,
    )
    ds = np.stack(
        [j * r**i * s ** (j - 1) if j else zero for i, j in _MONO_POWERS],
        axis=-1,
    )
    return dr, ds


def _basis_coefficients() -> np.ndarray:
    """Invert the generalized Vandermonde of cubic monomials at the nodes."""
    vand = _monomials(REFERENCE_NODES)
    coef = np.linalg.inv(vand)
    check = vand @ coef - np.eye(10)
    if np.abs(check).max() > 1e-13:
        raise RuntimeError("cubic Lagrange basis failed its Kronecker check")
    probe = np.array([(0.2, 0.3), (0.05, 0.9), (1.0 / 3.0, 1.0 / 3.0)])
    sums = _monomials(probe) @ coef
    if np.abs(sums.sum(axis=1) - 1.0).max() > 1e-13:
        raise RuntimeError("cubic Lagrange basis failed partition of unity")
    return coef


_BASIS_COEF = _basis_coefficients()


def shape_functions(r: float, s: float) -> np.ndarray:
    """The 10 cubic Lagrange basis values at reference point (r, s)."""
    return _monomials(np.array([r, s], dtype=float)) @ _BASIS_COEF


def shape_gradients(r: float, s: float) -> np.ndarray:
    """(10, 2) array of (dN/dr, dN/ds) at reference point (r, s)."""
    dr, ds = _monomial_gradients(np.array([r, s], dtype=float))
    return np.stack([dr @ _BASIS_COEF, ds @ _BASIS_COEF], axis=-1)


def shape_matrix(pts: np.ndarray) -> np.ndarray:
    """Basis values at many points: (m, 2) -> (m, 10)."""
    return _monomials(np.asarray(pts, dtype=float)) @ _BASIS_COEF


def shape_gradient_matrices(pts: np.ndarray):
    """Basis gradients at many points: (m, 2) -> pair of (m, 10)."""
    dr, ds = _monomial_gradients(np.asarray(pts, dtype=float))
    return dr @ _BASIS_COEF, ds @ _BASIS_COEF


# ---------------------------------------------------------------------------
# curved elements


@dataclass(frozen=True)
class CurvedElement:
    """10-node cubic element: positions, unit normals, source vertex ids."""

    nodes: np.ndarray  # (10, 3)
    node_normals: np.ndarray  # (10, 3) unit vectors
    vertex_ids: tuple[int, int, int]  # global ids at local (0,0), (1,0), (0,1)

    def __post_init__(self):
        nd = np.array(self.nodes, dtype=float).reshape(10, 3)
        nn = np.array(self.node_normals, dtype=float).reshape(10, 3)
        lengths = np.linalg.norm(nn, axis=1)
        if np.abs(lengths - 1.0).max() > 1e-12:
            raise ValueError("node normals must be unit length")
        nd.setflags(write=False)
        nn.setflags(write=False)
        object.__setattr__(self, "nodes", nd)
        object.__setattr__(self, "node_normals", nn)
        object.__setattr__(self, "vertex_ids", tuple(int(i) for i in self.vertex_ids))


@dataclass(frozen=True)
class SurfaceFrame:
    """Local geometry at one point of an element."""

    position: np.ndarray
    d_dr: np.ndarray
    d_ds: np.ndarray
    normal: np.ndarray
    jacobian: float


def rs_to_uv(r: float, s: float) -> tuple[float, float]:
    """Map reference coordinates to arc parameters u = r+s, v = s/(r+s)."""
    u = r + s
    if u == 0.0:
        return 0.0, 0.0
    return u, s / u


def _blend_reference(n0: np.ndarray, n1: np.ndarray, t: float) -> np.ndarray:
    """Unit interpolant of two endpoint normals, used as a sign reference."""
    ref = (1.0 - t) * n0 + t * n1
    length = float(np.linalg.norm(ref))
    if length < 1e-12:
        raise DegenerateArcError("endpoint normals are antiparallel")
    return ref / length


def nodes_from_vertex_data(x1, n1, x2, n2, x3, n3):
    """Build the 10 node positions and normals from three vertices.

    Arcs are fitted along edges 1-2 and 1-3; every other node lies on a
    cross arc swept between those two at fixed u. The u = 1 cross arc joins
    vertices 2 and 3, the u = 2/3 one passes through edge nodes 5 and 6 and
    carries the interior node at its parameter midpoint. Vertex nodes keep
    the input positions and normals bitwise.
    """
    nodes = np.empty((10, 3))
    normals = np.empty((10, 3))
    nodes[0], normals[0] = x1, n1
    nodes[3], normals[3] = x2, n2
    nodes[8], normals[8] = x3, n3

    arc12 = fit_arc(x1, n1, x2, n2)
    arc13 = fit_arc(x1, n1, x3, n3)
    third = 1.0 / 3.0
    for local, u in ((1, third), (4, 2 * third)):
        nodes[local] = arc_point(arc12, u)
        normals[local], _ = arc_normal(arc12, u, _blend_reference(n1, n2, u))
    for local, u in ((2, third), (5, 2 * third)):
        nodes[local] = arc_point(arc13, u)
        normals[local], _ = arc_normal(arc13, u, _blend_reference(n1, n3, u))

    # cross arc at u = 1: edge between vertices 2 and 3, nodes 7 and 8
    y1 = arc_point(arc12, 1.0)
    y2 = arc_point(arc13, 1.0)
    ny1, _ = arc_normal(arc12, 1.0, n2)
    ny2, _ = arc_normal(arc13, 1.0, n3)
    cross = fit_arc(y1, ny1, y2, ny2)
    for local, v in ((6, third), (7, 2 * third)):
        nodes[local] = arc_point(cross, v)
        normals[local], _ = arc_normal(cross, v, _blend_reference(ny1, ny2, v))

    # cross arc at u = 2/3 through edge nodes 5 and 6: interior node 10
    cross = fit_arc(nodes[4], normals[4], nodes[5], normals[5])
    nodes[9] = arc_point(cross, 0.5)
    normals[9], _ = arc_normal(
        cross, 0.5, _blend_reference(normals[4], normals[5], 0.5)
    )
    return nodes, normals


def build_curved_element(mesh: FlatMesh, face_index: int) -> CurvedElement:
    """Curved cubic element for one face of a mesh."""
    if not 0 <= face_index < mesh.n_faces:
        raise IndexError(
            f"face index {face_index} outside [0, {mesh.n_faces})"
        )
    a, b, c = (int(i) for i in mesh.faces[face_index])
    try:
        nodes, normals = nodes_from_vertex_data(
            mesh.vertices[a], mesh.normals[a],
            mesh.vertices[b], mesh.normals[b],
            mesh.vertices[c], mesh.normals[c],
        )
    except DegenerateArcError as exc:
        raise DegenerateArcError(f"face {face_index}: {exc}") from None
    return CurvedElement(nodes=nodes, node_normals=normals, vertex_ids=(a, b, c))


def element_frame(elem: CurvedElement, r: float, s: float) -> SurfaceFrame:
    """Position, tangents, oriented unit normal, and Jacobian at (r, s)."""
    basis = shape_functions(r, s)
    grads = shape_gradients(r, s)
    position = basis @ elem.nodes
    d_dr = grads[:, 0] @ elem.nodes
    d_ds = grads[:, 1] @ elem.nodes
    cr = np.cross(d_dr, d_ds)
    jac = float(np.linalg.norm(cr))
    if jac < 1e-14:
        raise DegenerateElementError(f"vanishing Jacobian at (r, s) = ({r}, {s})")
    normal = cr / jac
    if float(np.dot(normal, basis @ elem.node_normals)) < 0.0:
        normal = -normal
    return SurfaceFrame(
        position=position, d_dr=d_dr, d_ds=d_ds, normal=normal, jacobian=jac
    )


def frames_at(node_pos: np.ndarray, node_nrm: np.ndarray, pts: np.ndarray):
    """Vectorized frames for many elements at the same reference points.

    node_pos, node_nrm: (n_e, 10, 3). pts: (m, 2).
    Returns positions (n_e, m, 3), oriented unit normals (n_e, m, 3), and
    Jacobians (n_e, m).
    """
    basis = shape_matrix(pts)  # (m, 10)
    g_r, g_s = shape_gradient_matrices(pts)
    pos = np.einsum("mk,eki->emi", basis, node_pos)
    xr = np.einsum("mk,eki->emi", g_r, node_pos)
    xs = np.einsum("mk,eki->emi", g_s, node_pos)
    cr = np.cross(xr, xs)
    jac = np.linalg.norm(cr, axis=-1)
    nrm = cr / jac[..., None]
    hint = np.einsum("mk,eki->emi", basis, node_nrm)
    sign = np.where(np.einsum("emi,emi->em", nrm, hint) < 0.0, -1.0, 1.0)
    return pos, nrm * sign[..., None], jac
