"""Interval and triangle meshes with oriented skeleton facets and bisection.

Triangles are stored peak-first: the refinement edge of triangle
``(a, b, c)`` is the edge ``(b, c)`` opposite the newest vertex ``a``
(local edge 0).  Newest-vertex bisection through that edge preserves shape
regularity (at most four similarity classes per initial triangle); marked
refinement closes non-conforming edges by marking neighbours until the mesh
is conforming again.

Facet normals follow a convention that is a pure function of vertex indices:
the facet direction runs from the lower to the higher global vertex id and
the normal is that direction rotated by +90 degrees.  The element for which
this normal is outward is the facet's "left" element.
"""

import json

import numpy as np

from . import DpgkitError


class MeshErrorBase(DpgkitError):
    pass


class ZeroElements(MeshErrorBase):
    pass


class NonConformingMesh(MeshErrorBase):
    pass


class InvalidId(MeshErrorBase):
    pass


# ---------------------------------------------------------------------------
# 1D meshes
# ---------------------------------------------------------------------------


class Mesh1D:
    """Partition of an interval by strictly increasing vertices."""

    def __init__(self, vertices):
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 1 or v.size < 2:
            raise ZeroElements("need at least two vertices")
        if np.any(np.diff(v) <= 0.0):
            raise NonConformingMesh("vertices must be strictly increasing")
        self.vertices = v

    @property
    def n_elements(self):
        return self.vertices.size - 1

    @property
    def lengths(self):
        return np.diff(self.vertices)


def uniform_interval_mesh(m):
    """m equal elements on (0, 1)."""
    if m < 1:
        raise ZeroElements(f"need at least one element, got {m}")
    return Mesh1D(np.linspace(0.0, 1.0, m + 1))


# ---------------------------------------------------------------------------
# triangle meshes
# ---------------------------------------------------------------------------


class TriMesh:
    """Conforming triangle mesh with per-triangle refinement genealogy."""

    def __init__(self, vertices, triangles, refinement_edge=None, generation=None):
        self.vertices = np.asarray(vertices, dtype=float).reshape(-1, 2)
        self.triangles = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
        nt = self.triangles.shape[0]
        if nt == 0:
            raise ZeroElements("mesh has no triangles")
        if self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices):
            raise NonConformingMesh("triangle vertex index out of range")
        if refinement_edge is None:
            refinement_edge = np.zeros(nt, dtype=np.int64)
        self.refinement_edge = np.asarray(refinement_edge, dtype=np.int64).copy()
        if generation is None:
            generation = np.zeros(nt, dtype=np.int64)
        self.generation = np.asarray(generation, dtype=np.int64).copy()
        if np.any(self.signed_areas() <= 0.0):
            raise NonConformingMesh("triangles must be positively oriented")

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_triangles(self):
        return self.triangles.shape[0]

    def corners(self):
        """Vertex coordinates per triangle; shape (nt, 3, 2)."""
        return self.vertices[self.triangles]

    def signed_areas(self):
        c = self.corners()
        d1 = c[:, 1] - c[:, 0]
        d2 = c[:, 2] - c[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def centroids(self):
        return self.corners().mean(axis=1)

    def min_angle(self):
        """Smallest interior angle over all triangles, in radians."""
        c = self.corners()
        angles = []
        for k in range(3):
            u = c[:, (k + 1) % 3] - c[:, k]
            v = c[:, (k + 2) % 3] - c[:, k]
            cosang = (u * v).sum(axis=1) / (
                np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1)
            )
            angles.append(np.arccos(np.clip(cosang, -1.0, 1.0)))
        return float(np.min(angles))


def element_metrics(mesh):
    """Per-element (area, diameter); diameter is the longest edge."""
    areas = np.abs(mesh.signed_areas())
    c = mesh.corners()
    edges = np.stack(
        [
            np.linalg.norm(c[:, 2] - c[:, 1], axis=1),
            np.linalg.norm(c[:, 0] - c[:, 2], axis=1),
            np.linalg.norm(c[:, 1] - c[:, 0], axis=1),
        ]
    )
    return areas, edges.max(axis=0)


def uniform_square_mesh(n):
    """n x n grid of squares on the unit square, each split by its diagonal.

    Triangles are stored peak-first with the hypotenuse as refinement edge,
    so that newest-vertex bisection keeps all descendants right isosceles.
    """
    if n < 1:
        raise ZeroElements(f"need at least one cell per side, got {n}")
    xs = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(xs, xs, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (n + 1) + i

    tris = []
    for j in range(n):
        for i in range(n):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            # diagonal v00-v11; peaks are the right-angle corners
            tris.append((v10, v11, v00))
            tris.append((v01, v00, v11))
    return TriMesh(vertices, np.array(tris))


# ---------------------------------------------------------------------------
# skeleton
# ---------------------------------------------------------------------------


class Skeleton:
    """Oriented facet list of a conforming triangle mesh.

    Facets are sorted by (low, high) vertex id.  ``left[f]`` is the triangle
    for which ``normals[f]`` is the outward normal (-1 if none), ``right[f]``
    the triangle on the other side (-1 on the boundary).  ``tri_facets[t, e]``
    maps local edge ``e`` (opposite local vertex ``e``) of triangle ``t`` to
    its facet id; ``tri_signs[t, e]`` is +1 when ``t`` is the left element.
    """

    def __init__(self, facet_vertices, left, right, normals, lengths, tri_facets, tri_signs):
        self.facet_vertices = facet_vertices
        self.left = left
        self.right = right
        self.normals = normals
        self.lengths = lengths
        self.tri_facets = tri_facets
        self.tri_signs = tri_signs

    @property
    def n_facets(self):
        return self.facet_vertices.shape[0]

    @property
    def is_boundary(self):
        return (self.left < 0) | (self.right < 0)


def build_skeleton(mesh):
    """Build the oriented skeleton; raises NonConformingMesh on overshared edges."""
    incidence = {}
    for t in range(mesh.n_triangles):
        tri = mesh.triangles[t]
        for e in range(3):
            a, b = int(tri[(e + 1) % 3]), int(tri[(e + 2) % 3])
            key = (min(a, b), max(a, b))
            incidence.setdefault(key, []).append((t, e, a, b))

    keys = sorted(incidence)
    nf = len(keys)
    facet_vertices = np.array(keys, dtype=np.int64).reshape(nf, 2)
    left = np.full(nf, -1, dtype=np.int64)
    right = np.full(nf, -1, dtype=np.int64)
    tri_facets = np.full((mesh.n_triangles, 3), -1, dtype=np.int64)
    tri_signs = np.zeros((mesh.n_triangles, 3), dtype=np.int64)

    for f, key in enumerate(keys):
        sides = incidence[key]
        if len(sides) > 2:
            raise NonConformingMesh(f"edge {key} shared by {len(sides)} triangles")
        for t, e, a, b in sides:
            tri_facets[t, e] = f
            if a > b:
                # triangle traverses high->low: the id-convention normal is
                # outward for it, so it sits on the left
                if left[f] >= 0:
                    raise NonConformingMesh(f"edge {key} has two left triangles")
                left[f] = t
                tri_signs[t, e] = 1
            else:
                if right[f] >= 0:
                    raise NonConformingMesh(f"edge {key} has two right triangles")
                right[f] = t
                tri_signs[t, e] = -1

    d = mesh.vertices[facet_vertices[:, 1]] - mesh.vertices[facet_vertices[:, 0]]
    lengths = np.linalg.norm(d, axis=1)
    normals = np.column_stack([-d[:, 1], d[:, 0]]) / lengths[:, None]
    return Skeleton(facet_vertices, left, right, normals, lengths, tri_facets, tri_signs)


def assert_conforming(mesh, atol=1e-12):
    """Raise NonConformingMesh on overshared edges or hanging vertices."""
    skel = build_skeleton(mesh)  # checks incidence <= 2
    # hanging vertex: some vertex lies strictly inside an undivided facet
    v = mesh.vertices
    for f in range(skel.n_facets):
        a, b = skel.facet_vertices[f]
        pa, pb = v[a], v[b]
        d = pb - pa
        L2 = d @ d
        t = ((v - pa) @ d) / L2
        inside = (t > atol) & (t < 1.0 - atol)
        if not inside.any():
            continue
        proj = pa + t[:, None] * d
        dist = np.linalg.norm(v - proj, axis=1)
        offenders = np.where(inside & (dist <= atol * np.sqrt(L2) + atol))[0]
        offenders = [w for w in offenders if w not in (a, b)]
        if offenders:
            raise NonConformingMesh(
                f"vertex {offenders[0]} hangs on facet {(int(a), int(b))}"
            )


# ---------------------------------------------------------------------------
# newest-vertex bisection
# ---------------------------------------------------------------------------


def _normalized_triangles(mesh):
    """Roll each triangle so its refinement edge is local edge 0 (peak first)."""
    tris = mesh.triangles.copy()
    for t in range(tris.shape[0]):
        e = int(mesh.refinement_edge[t])
        if e:
            tris[t] = np.roll(tris[t], -e)
    return tris


def bisect(mesh, marked):
    """Bisect the marked triangles, closing until the mesh is conforming.

    Each triangle is split through its refinement edge; a neighbour whose
    edge gets a midpoint is refined as well, so a triangle may produce two,
    three or four children per call.  The result lists triangles sorted by
    (generation, parent id, child index).
    """
    marked = sorted(set(int(t) for t in marked))
    if not marked:
        raise InvalidId("no triangles marked for refinement")
    if marked[0] < 0 or marked[-1] >= mesh.n_triangles:
        raise InvalidId(f"marked id out of range: {marked[0]}..{marked[-1]}")

    tris = _normalized_triangles(mesh)
    nt = tris.shape[0]

    def edge_key(a, b):
        return (min(int(a), int(b)), max(int(a), int(b)))

    ref_edges = [edge_key(tris[t, 1], tris[t, 2]) for t in range(nt)]
    all_edges = [
        [edge_key(tris[t, (e + 1) % 3], tris[t, (e + 2) % 3]) for e in range(3)]
        for t in range(nt)
    ]

    # closure: every triangle touching a split edge must split its own
    # refinement edge
    need = np.zeros(nt, dtype=bool)
    need[marked] = True
    while True:
        split = {ref_edges[t] for t in range(nt) if need[t]}
        changed = False
        for t in range(nt):
            if need[t]:
                continue
            if any(e in split for e in all_edges[t]):
                need[t] = True
                changed = True
        if not changed:
            break
    split = {ref_edges[t] for t in range(nt) if need[t]}

    # midpoints in sorted edge order for determinism
    vertices = [mesh.vertices]
    midpoint = {}
    next_id = mesh.n_vertices
    for key in sorted(split):
        midpoint[key] = next_id
        next_id += 1
    vertices.append(
        0.5
        * (
            mesh.vertices[[k[0] for k in sorted(split)]]
            + mesh.vertices[[k[1] for k in sorted(split)]]
        )
    )
    new_vertices = np.vstack(vertices)

    # children of (a, b, c) with midpoint m of (b, c): (m, a, b) and (m, c, a)
    records = []  # (generation, parent, child_index, triple)
    for t in range(nt):
        a, b, c = (int(x) for x in tris[t])
        gen = int(mesh.generation[t])
        if ref_edges[t] not in split:
            records.append((gen, t, 0, (a, b, c)))
            continue
        m = midpoint[ref_edges[t]]
        child = 0
        for u, v in ((a, b), (c, a)):
            key = edge_key(u, v)
            if key in split:
                mm = midpoint[key]
                records.append((gen + 2, t, child, (mm, m, u)))
                records.append((gen + 2, t, child + 1, (mm, v, m)))
                child += 2
            else:
                records.append((gen + 1, t, child, (m, u, v)))
                child += 1

    records.sort(key=lambda r: (r[0], r[1], r[2]))
    new_tris = np.array([r[3] for r in records], dtype=np.int64)
    new_gen = np.array([r[0] for r in records], dtype=np.int64)
    return TriMesh(new_vertices, new_tris, generation=new_gen)


# ---------------------------------------------------------------------------
# JSON serialization
# ---------------------------------------------------------------------------


def mesh_to_json(mesh):
    """Deterministic JSON text for a mesh (vertices and triangles only)."""
    payload = {
        "vertices": [[float(x), float(y)] for x, y in mesh.vertices],
        "triangles": [[int(i), int(j), int(k)] for i, j, k in mesh.triangles],
    }
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def mesh_from_json(text):
    data = json.loads(text)
    return TriMesh(np.array(data["vertices"]), np.array(data["triangles"]))
