"""Convex hull of the data: facets, triangulation, volume, membership, sampling.

The hull is computed by an incremental quickhull in general dimension (desk
scale, d <= 5 or so).  Facets are kept simplicial throughout, so coplanar
patches simply appear as several facets sharing a normal.  The triangulation
of the hull body fans from the lowest-index hull vertex: every facet not
containing that vertex is coned to it, which keeps all simplex corners at
data points and makes volumes exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateData, DuplicatePoints, EmptyGrid
from .rng import RngStream

# Absolute slack tolerance for membership tests, applied after normalizing
# facet normals to unit length.
MEMBERSHIP_TOL = 1e-9


@dataclass(frozen=True)
class Dataset:
    """The n distinct observation points in R^d."""

    points: np.ndarray
    n: int
    d: int


def make_dataset(points) -> Dataset:
    """Validate raw coordinates and wrap them in a :class:`Dataset`.

    Raises ``DuplicatePoints`` if two rows coincide and ``DegenerateData`` if
    the points do not affinely span R^d (which also catches n < d+1).
    """
    pts = np.ascontiguousarray(np.asarray(points, dtype=float))
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2 or pts.size == 0:
        raise DegenerateData("points must form a nonempty (n, d) array")
    if not np.all(np.isfinite(pts)):
        raise DegenerateData("points must be finite")
    n, d = pts.shape

    order = np.lexsort(pts.T[::-1])
    same = np.all(pts[order[1:]] == pts[order[:-1]], axis=1)
    if np.any(same):
        where = np.nonzero(same)[0]
        pairs = sorted((min(order[i], order[i + 1]), max(order[i], order[i + 1])) for i in where)
        raise DuplicatePoints(pairs)

    if n < d + 1:
        raise DegenerateData(f"need at least d+1 = {d + 1} points, got {n}")
    centered = pts - pts[0]
    if np.linalg.matrix_rank(centered) < d:
        raise DegenerateData("points are affinely dependent")
    return Dataset(points=pts, n=n, d=d)


@dataclass
class Hull:
    """Geometry of C_n = conv(x_1, ..., x_n)."""

    points: np.ndarray
    vertices: np.ndarray            # indices of hull vertices, sorted
    facet_normals: np.ndarray       # (F, d) unit outward normals
    facet_offsets: np.ndarray       # (F,) with <normal, x> <= offset inside
    facet_vertices: list            # list of d-tuples of point indices
    simplices: list                 # list of (d+1)-tuples of point indices
    simplex_volumes: np.ndarray
    total_volume: float
    _simplex_inverses: np.ndarray = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def contains(self, x) -> bool:
        """Whether x lies in C_n, up to the membership tolerance."""
        x = np.asarray(x, dtype=float).reshape(-1)
        slack = self.facet_normals @ x - self.facet_offsets
        return bool(np.max(slack) <= MEMBERSHIP_TOL)

    def contains_many(self, xs) -> np.ndarray:
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        slack = xs @ self.facet_normals.T - self.facet_offsets
        return np.max(slack, axis=1) <= MEMBERSHIP_TOL

    def bounding_box(self):
        verts = self.points[self.vertices]
        return verts.min(axis=0), verts.max(axis=0)

    def _ensure_simplex_inverses(self):
        if self._simplex_inverses is None:
            d = self.dim
            mats = np.empty((len(self.simplices), d + 1, d + 1))
            for k, simpl in enumerate(self.simplices):
                mats[k, :d, :] = self.points[list(simpl)].T
                mats[k, d, :] = 1.0
            self._simplex_inverses = np.linalg.inv(mats)

    def locate_simplex(self, x, tol=1e-9):
        """Return (simplex index, barycentric weights) of a containing simplex.

        Returns (None, None) when x is outside every simplex beyond ``tol``.
        """
        self._ensure_simplex_inverses()
        lifted = np.append(np.asarray(x, dtype=float), 1.0)
        coords = self._simplex_inverses @ lifted
        mins = coords.min(axis=1)
        best = int(np.argmax(mins))
        if mins[best] < -tol:
            return None, None
        return best, coords[best]


def _initial_simplex(points, tol):
    """Indices of d+1 affinely independent points, greedily far apart."""
    n, d = points.shape
    scale = max(1.0, float(np.max(np.abs(points))))
    lo = np.argmin(points, axis=0)
    hi = np.argmax(points, axis=0)
    cand = np.unique(np.concatenate([lo, hi]))
    best_pair, best_dist = None, -1.0
    for i in cand:
        dist = np.linalg.norm(points[cand] - points[i], axis=1)
        j = int(np.argmax(dist))
        if dist[j] > best_dist:
            best_dist, best_pair = dist[j], (int(i), int(cand[j]))
    if best_dist <= tol * scale:
        raise DegenerateData("all points coincide to tolerance")

    chosen = list(best_pair)
    basis = np.empty((d, d))
    v = points[chosen[1]] - points[chosen[0]]
    basis[0] = v / np.linalg.norm(v)
    k = 1
    while k < d:
        resid = points - points[chosen[0]]
        resid = resid - (resid @ basis[:k].T) @ basis[:k]
        norms = np.linalg.norm(resid, axis=1)
        j = int(np.argmax(norms))
        if norms[j] <= tol * scale:
            raise DegenerateData("points are affinely dependent")
        chosen.append(j)
        basis[k] = resid[j] / norms[j]
        k += 1
    return chosen


def _facet_plane(points, vert_idx, interior):
    """Unit outward normal and offset of the hyperplane through the vertices."""
    verts = points[list(vert_idx)]
    edges = verts[1:] - verts[0]
    _, _, vt = np.linalg.svd(edges)
    normal = vt[-1]
    offset = float(normal @ verts.mean(axis=0))
    if normal @ interior > offset:
        normal, offset = -normal, -offset
    return normal, offset


class _Facet:
    __slots__ = ("vertices", "normal", "offset", "neighbors", "outside", "alive")

    def __init__(self, vertices, normal, offset):
        self.vertices = tuple(vertices)
        self.normal = normal
        self.offset = offset
        self.neighbors = {}           # ridge (frozenset) -> facet
        self.outside = []             # point indices strictly above
        self.alive = True


def _quickhull(points, tol_above):
    n, d = points.shape
    init = _initial_simplex(points, tol_above)
    interior = points[init].mean(axis=0)

    facets = []
    for skip in range(d + 1):
        verts = [init[i] for i in range(d + 1) if i != skip]
        normal, offset = _facet_plane(points, verts, interior)
        facets.append(_Facet(verts, normal, offset))
    for fa in facets:
        for fb in facets:
            if fa is not fb:
                ridge = frozenset(fa.vertices) & frozenset(fb.vertices)
                if len(ridge) == d - 1:
                    fa.neighbors[ridge] = fb

    remaining = np.setdiff1d(np.arange(n), np.array(init))
    if remaining.size:
        height = np.full(remaining.size, -np.inf)
        owner = np.full(remaining.size, -1)
        for fi, f in enumerate(facets):
            h = points[remaining] @ f.normal - f.offset
            better = h > np.maximum(height, tol_above)
            height[better] = h[better]
            owner[better] = fi
        for fi, f in enumerate(facets):
            f.outside = list(remaining[owner == fi])

    stack = [f for f in facets if f.outside]
    while stack:
        facet = stack.pop()
        if not facet.alive or not facet.outside:
            continue
        out = np.array(facet.outside)
        heights = points[out] @ facet.normal - facet.offset
        apex = int(out[np.argmax(heights)])
        apex_pt = points[apex]

        # grow the set of facets visible from the apex
        visible = {id(facet): facet}
        frontier = [facet]
        while frontier:
            f = frontier.pop()
            for nb in f.neighbors.values():
                if id(nb) in visible or not nb.alive:
                    continue
                if apex_pt @ nb.normal - nb.offset > tol_above:
                    visible[id(nb)] = nb
                    frontier.append(nb)

        horizon = []                  # (ridge, outside neighbor)
        orphan = set()
        for f in visible.values():
            f.alive = False
            orphan.update(f.outside)
            for ridge, nb in f.neighbors.items():
                if id(nb) not in visible:
                    horizon.append((ridge, nb))
        orphan.discard(apex)

        new_facets = []
        half_ridges = {}
        for ridge, nb in horizon:
            verts = tuple(sorted(ridge | {apex}))
            normal, offset = _facet_plane(points, verts, interior)
            nf = _Facet(verts, normal, offset)
            nf.neighbors[ridge] = nb
            nb.neighbors[ridge] = nf
            for drop in ridge:
                sub = frozenset((ridge - {drop}) | {apex})
                if sub in half_ridges:
                    other = half_ridges.pop(sub)
                    nf.neighbors[sub] = other
                    other.neighbors[sub] = nf
                else:
                    half_ridges[sub] = nf
            new_facets.append(nf)

        if orphan:
            orphan_idx = np.array(sorted(orphan))
            height = np.full(orphan_idx.size, -np.inf)
            owner = np.full(orphan_idx.size, -1)
            for fi, f in enumerate(new_facets):
                h = points[orphan_idx] @ f.normal - f.offset
                better = h > np.maximum(height, tol_above)
                height[better] = h[better]
                owner[better] = fi
            for fi, f in enumerate(new_facets):
                f.outside = list(orphan_idx[owner == fi])

        facets.extend(new_facets)
        stack.extend(f for f in new_facets if f.outside)
        facets = [f for f in facets if f.alive]

    return [f for f in facets if f.alive]


def _simplex_volume(verts):
    d = verts.shape[1]
    edges = verts[1:] - verts[0]
    return abs(np.linalg.det(edges)) / np.prod(np.arange(1, d + 1))


def build_hull(dataset: Dataset) -> Hull:
    """Compute the convex hull of the data with triangulation and volume."""
    pts, d = dataset.points, dataset.d

    if d == 1:
        x = pts[:, 0]
        i_lo, i_hi = int(np.argmin(x)), int(np.argmax(x))
        normals = np.array([[1.0], [-1.0]])
        offsets = np.array([x[i_hi], -x[i_lo]])
        simplex = tuple(sorted((i_lo, i_hi)))
        vol = float(x[i_hi] - x[i_lo])
        return Hull(
            points=pts,
            vertices=np.array(sorted((i_lo, i_hi))),
            facet_normals=normals,
            facet_offsets=offsets,
            facet_vertices=[(i_hi,), (i_lo,)],
            simplices=[simplex],
            simplex_volumes=np.array([vol]),
            total_volume=vol,
        )

    scale = max(1.0, float(np.max(np.abs(pts))))
    facets = _quickhull(pts, tol_above=1e-10 * scale)

    vertex_set = sorted(set().union(*(f.vertices for f in facets)))
    vertices = np.array(vertex_set)
    apex = vertex_set[0]

    simplices, volumes = [], []
    for f in facets:
        if apex in f.vertices:
            continue
        simpl = tuple(sorted(f.vertices + (apex,)))
        vol = _simplex_volume(pts[list(simpl)])
        if vol > 0.0:
            simplices.append(simpl)
            volumes.append(vol)
    volumes = np.array(volumes)

    return Hull(
        points=pts,
        vertices=vertices,
        facet_normals=np.array([f.normal for f in facets]),
        facet_offsets=np.array([f.offset for f in facets]),
        facet_vertices=[f.vertices for f in facets],
        simplices=simplices,
        simplex_volumes=volumes,
        total_volume=float(volumes.sum()),
    )


def contains(hull: Hull, x) -> bool:
    """Whether x lies in C_n (facet slack at most the membership tolerance)."""
    return hull.contains(x)


def sample_uniform(hull: Hull, count: int, stream: RngStream) -> np.ndarray:
    """Draw ``count`` points uniformly from C_n.

    A simplex is selected with probability proportional to its volume, then a
    point is drawn inside it with Dirichlet(1, ..., 1) weights obtained from
    normalized exponential spacings.  The whole batch comes from one substream
    in a fixed layout, so results do not depend on downstream evaluation order.
    """
    d = hull.dim
    count = int(count)
    if count == 0:
        return np.empty((0, d))
    gen = stream.gen
    u = gen.random(count)
    expo = gen.standard_exponential((count, d + 1))

    probs = hull.simplex_volumes / hull.total_volume
    cum = np.cumsum(probs)
    cum[-1] = 1.0
    which = np.searchsorted(cum, u, side="right")

    weights = expo / expo.sum(axis=1, keepdims=True)
    corners = hull.points[np.array([list(s) for s in hull.simplices])]
    return np.einsum("kj,kjd->kd", weights, corners[which])


def axis_grid_inside(hull: Hull, points_per_axis: int) -> np.ndarray:
    """Lattice points of the bounding-box grid that fall inside C_n.

    The grid has ``points_per_axis`` points per dimension spanning the hull's
    bounding box; rows are returned in lexicographic order.
    """
    p = int(points_per_axis)
    if p < 2:
        raise ValueError("points_per_axis must be at least 2")
    lo, hi = hull.bounding_box()
    axes = [np.linspace(lo[k], hi[k], p) for k in range(hull.dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    lattice = np.stack([m.reshape(-1) for m in mesh], axis=1)
    inside = hull.contains_many(lattice)
    if not np.any(inside):
        raise EmptyGrid(f"no lattice point with {p} points per axis lies in the hull")
    return lattice[inside]
