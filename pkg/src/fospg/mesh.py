"""Conforming affine 2D meshes of triangles or axis-aligned rectangles.

All generators return an immutable :class:`Mesh` whose elements are listed
counterclockwise.  Local facet ``i`` of an element runs from local vertex ``i``
to local vertex ``i + 1``.  Every global facet stores its vertex pair in the
traversal order of its *owner* element, so the stored unit normal points
outward from the owner and into the neighbor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TRIANGLE = "triangle"
RECTANGLE = "rectangle"

# boundary markers
INTERIOR = 0
OUTER = 1
HOLE = 2


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class AffineMap:
    """Affine map ``x = matrix @ xhat + translation`` from the reference element."""

    matrix: np.ndarray
    translation: np.ndarray

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.matrix))

    def __call__(self, xhat):
        return np.asarray(xhat) @ self.matrix.T + self.translation

    def inverse(self, x):
        return np.linalg.solve(self.matrix, (np.asarray(x) - self.translation).T).T


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray  # (nv, 2)
    elements: np.ndarray  # (ne, 3 or 4), counterclockwise
    kind: str
    regions: np.ndarray = None  # (ne,) int
    facet_markers_by_vertex: dict = field(default=None, repr=False)
    # derived facet tables, filled in __post_init__
    facets: np.ndarray = field(init=False, repr=False)  # (nf, 2) vertex pairs, owner order
    facet_elements: np.ndarray = field(init=False, repr=False)  # (nf, 2) owner, neighbor (-1)
    facet_local: np.ndarray = field(init=False, repr=False)  # (nf, 2) local facet index
    element_facets: np.ndarray = field(init=False, repr=False)  # (ne, nfe)
    element_facet_sign: np.ndarray = field(init=False, repr=False)  # +1 owner, -1 neighbor
    boundary_markers: np.ndarray = field(init=False, repr=False)  # (nf,)

    def __post_init__(self):
        vertices = np.ascontiguousarray(self.vertices, dtype=float)
        elements = np.ascontiguousarray(self.elements, dtype=np.int64)
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "elements", elements)
        if self.regions is None:
            object.__setattr__(self, "regions", np.ones(len(elements), dtype=np.int64))
        else:
            object.__setattr__(self, "regions", np.asarray(self.regions, dtype=np.int64))
        table = build_facets(elements)
        for key, value in table.items():
            object.__setattr__(self, key, value)
        det = self.jacobians()[1]
        if np.any(det <= 0):
            raise MeshError("inverted or degenerate element (non-positive Jacobian)")
        markers = np.where(self.facet_elements[:, 1] < 0, OUTER, INTERIOR)
        if self.facet_markers_by_vertex:
            for (a, b), m in self.facet_markers_by_vertex.items():
                hit = np.flatnonzero(
                    ((self.facets[:, 0] == a) & (self.facets[:, 1] == b))
                    | ((self.facets[:, 0] == b) & (self.facets[:, 1] == a))
                )
                markers[hit] = m
        object.__setattr__(self, "boundary_markers", markers)

    # -- sizes -------------------------------------------------------------
    @property
    def num_elements(self) -> int:
        return len(self.elements)

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_facets(self) -> int:
        return len(self.facets)

    @property
    def facets_per_element(self) -> int:
        return self.elements.shape[1]

    @property
    def boundary_facets(self) -> np.ndarray:
        return np.flatnonzero(self.facet_elements[:, 1] < 0)

    @property
    def interior_facets(self) -> np.ndarray:
        return np.flatnonzero(self.facet_elements[:, 1] >= 0)

    # -- geometry ----------------------------------------------------------
    def jacobians(self):
        """Return ``(J, det J, b)`` of the affine maps for all elements."""
        v = self.vertices[self.elements]
        if self.kind == TRIANGLE:
            J = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=-1)
        else:
            J = np.stack([v[:, 1] - v[:, 0], v[:, 3] - v[:, 0]], axis=-1)
        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        return J, det, v[:, 0]

    def affine_map(self, element: int) -> AffineMap:
        J, _, b = self.jacobians()
        return AffineMap(J[element], b[element])

    def areas(self) -> np.ndarray:
        det = self.jacobians()[1]
        return 0.5 * det if self.kind == TRIANGLE else det

    def centroids(self) -> np.ndarray:
        return self.vertices[self.elements].mean(axis=1)

    def diameters(self) -> np.ndarray:
        v = self.vertices[self.elements]
        d = np.linalg.norm(v[:, :, None, :] - v[:, None, :, :], axis=-1)
        return d.reshape(len(v), -1).max(axis=1)

    @property
    def h(self) -> float:
        return float(self.diameters().max())

    def facet_lengths(self) -> np.ndarray:
        t = self.vertices[self.facets[:, 1]] - self.vertices[self.facets[:, 0]]
        return np.linalg.norm(t, axis=1)

    def facet_normals(self) -> np.ndarray:
        """Unit normals pointing owner -> neighbor (outward on the boundary)."""
        t = self.vertices[self.facets[:, 1]] - self.vertices[self.facets[:, 0]]
        n = np.stack([t[:, 1], -t[:, 0]], axis=1)
        return n / np.linalg.norm(n, axis=1)[:, None]

    def euler_characteristic(self) -> int:
        return self.num_vertices - self.num_facets + self.num_elements


def build_facets(elements) -> dict:
    """Facet connectivity for a list of counterclockwise elements."""
    elements = np.asarray(elements, dtype=np.int64)
    ne, nfe = elements.shape
    if len(np.unique(np.sort(elements, axis=1), axis=0)) != ne:
        raise MeshError("duplicate elements")
    a = elements
    b = np.roll(elements, -1, axis=1)
    key = np.stack([np.minimum(a, b), np.maximum(a, b)], axis=-1).reshape(-1, 2)
    uniq, first, inverse, counts = np.unique(
        key, axis=0, return_index=True, return_inverse=True, return_counts=True
    )
    inverse = inverse.ravel()
    if np.any(counts > 2):
        raise MeshError("non-manifold facet shared by more than two elements")
    nf = len(uniq)
    elem_of = np.repeat(np.arange(ne), nfe)
    local_of = np.tile(np.arange(nfe), ne)
    # owner = first occurrence in element order
    owner_slot = first
    facet_elements = np.full((nf, 2), -1, dtype=np.int64)
    facet_local = np.full((nf, 2), -1, dtype=np.int64)
    facet_elements[:, 0] = elem_of[owner_slot]
    facet_local[:, 0] = local_of[owner_slot]
    slots = np.arange(ne * nfe)
    others = slots[slots != owner_slot[inverse]]
    if np.any(facet_elements[inverse[others], 1] >= 0):
        raise MeshError("inconsistent facet table")
    facet_elements[inverse[others], 1] = elem_of[others]
    facet_local[inverse[others], 1] = local_of[others]
    facets = np.stack([a.ravel()[owner_slot], b.ravel()[owner_slot]], axis=1)
    element_facets = inverse.reshape(ne, nfe)
    sign = np.where(owner_slot[inverse] == slots, 1, -1).reshape(ne, nfe)
    # the neighbor must traverse the shared facet in the opposite direction
    nb = others
    if np.any(a.ravel()[nb] != facets[inverse[nb], 1]):
        raise MeshError("inconsistent orientation: elements must be counterclockwise")
    return dict(
        facets=facets,
        facet_elements=facet_elements,
        facet_local=facet_local,
        element_facets=element_facets,
        element_facet_sign=sign,
    )


def _grid(n, x0=0.0, x1=1.0):
    t = np.linspace(x0, x1, n + 1)
    X, Y = np.meshgrid(t, t, indexing="xy")
    return np.column_stack([X.ravel(), Y.ravel()])


def _split_cells(n, cells):
    """Two triangles per cell (i, j), split along the (0,0)-(1,1) diagonal."""
    cells = np.asarray(cells, dtype=np.int64).reshape(-1, 2)
    i, j = cells[:, 0], cells[:, 1]
    v00 = j * (n + 1) + i
    v10 = v00 + 1
    v01 = v00 + n + 1
    v11 = v01 + 1
    lower = np.stack([v00, v10, v11], axis=1)
    upper = np.stack([v00, v11, v01], axis=1)
    return np.stack([lower, upper], axis=1).reshape(-1, 3)


def _check_n(n):
    if int(n) != n or n < 1:
        raise MeshError(f"mesh parameter must be a positive integer, got {n!r}")
    return int(n)


def unit_square_triangles(n: int, x0: float = 0.0, x1: float = 1.0, regions=None) -> Mesh:
    """``2 n^2`` triangles on the square ``(x0, x1)^2``."""
    n = _check_n(n)
    cells = [(i, j) for j in range(n) for i in range(n)]
    elements = _split_cells(n, cells)
    vertices = _grid(n, x0, x1)
    mesh = Mesh(vertices, elements, TRIANGLE)
    if regions is not None:
        c = mesh.centroids()
        mesh = Mesh(vertices, elements, TRIANGLE, regions=[regions(x, y) for x, y in c])
    return mesh


def unit_square_rectangles(n: int, x0: float = 0.0, x1: float = 1.0) -> Mesh:
    n = _check_n(n)
    j, i = np.divmod(np.arange(n * n), n)
    v00 = j * (n + 1) + i
    elements = np.stack([v00, v00 + 1, v00 + n + 2, v00 + n + 1], axis=1)
    return Mesh(_grid(n, x0, x1), elements, RECTANGLE)


def punctured_square(n: int) -> Mesh:
    """Triangulation of ``(0,1)^2`` minus the hole ``(4/9, 5/9)^2``.

    Hole facets carry marker :data:`HOLE`, outer facets :data:`OUTER`.
    """
    n = _check_n(n)
    if n % 9:
        raise MeshError("punctured_square needs n divisible by 9")
    lo, hi = 4 * n // 9, 5 * n // 9
    cells = [
        (i, j)
        for j in range(n)
        for i in range(n)
        if not (lo <= i < hi and lo <= j < hi)
    ]
    vertices = _grid(n)
    elements = _split_cells(n, cells)
    used = np.unique(elements)
    remap = -np.ones(len(vertices), dtype=np.int64)
    remap[used] = np.arange(len(used))
    vertices, elements = vertices[used], remap[elements]
    mesh = Mesh(vertices, elements, TRIANGLE)
    # hole facets: boundary facets whose midpoint lies on the hole boundary
    mid = vertices[mesh.facets].mean(axis=1)
    on_hole = np.all((mid > 4 / 9 - 1e-12) & (mid < 5 / 9 + 1e-12), axis=1)
    markers = {
        tuple(mesh.facets[f]): HOLE for f in mesh.boundary_facets if on_hole[f]
    }
    return Mesh(vertices, elements, TRIANGLE, facet_markers_by_vertex=markers)


def vertical_faults_region(x: float, y: float) -> int:
    """Region tag (1 inside the high-permeability strips, else 2)."""
    eps = 1e-12
    for k in range(5):
        if x <= 0.5:
            if 0.05 + 0.2 * k - eps <= y <= 0.15 + 0.2 * k + eps:
                return 1
        elif 0.2 * k - eps <= y <= 0.2 * k + 0.1 + eps:
            return 1
    return 2


def vertical_faults_mesh(n: int) -> Mesh:
    n = _check_n(n)
    if n % 20:
        raise MeshError("vertical faults mesh needs n divisible by 20")
    return unit_square_triangles(n, regions=vertical_faults_region)


def refine(mesh: Mesh, project_boundary=None) -> Mesh:
    """Uniform red refinement of a triangle mesh (1 -> 4).

    ``project_boundary`` maps new boundary midpoints (k, 2) -> (k, 2).
    """
    if mesh.kind != TRIANGLE:
        raise MeshError("refine supports triangle meshes only")
    nv = mesh.num_vertices
    mid = mesh.vertices[mesh.facets].mean(axis=1)
    if project_boundary is not None:
        bf = mesh.boundary_facets
        mid[bf] = project_boundary(mid[bf])
    vertices = np.vstack([mesh.vertices, mid])
    v = mesh.elements
    m = nv + mesh.element_facets  # midpoint of facet i sits between v_i and v_{i+1}
    elements = np.concatenate(
        [
            np.stack([v[:, 0], m[:, 0], m[:, 2]], axis=1),
            np.stack([m[:, 0], v[:, 1], m[:, 1]], axis=1),
            np.stack([m[:, 2], m[:, 1], v[:, 2]], axis=1),
            np.stack([m[:, 0], m[:, 1], m[:, 2]], axis=1),
        ]
    )
    regions = np.tile(mesh.regions, 4)
    return Mesh(vertices, elements, TRIANGLE, regions=regions)


def _project_to_circle(x):
    return x / np.linalg.norm(x, axis=1)[:, None]


def polygonal_disk(n_refine: int = 0, sides: int = 16) -> Mesh:
    """Fan triangulation of a regular polygon inscribed in the unit circle,
    refined ``n_refine`` times with boundary vertices projected to the circle."""
    if n_refine < 0:
        raise MeshError("n_refine must be nonnegative")
    t = 2 * np.pi * np.arange(sides) / sides
    vertices = np.vstack([[0.0, 0.0], np.column_stack([np.cos(t), np.sin(t)])])
    k = np.arange(sides)
    elements = np.stack([np.zeros(sides, dtype=np.int64), 1 + k, 1 + (k + 1) % sides], axis=1)
    mesh = Mesh(vertices, elements, TRIANGLE)
    for _ in range(n_refine):
        mesh = refine(mesh, project_boundary=_project_to_circle)
    return mesh


def polygon_area(mesh: Mesh) -> float:
    """Area enclosed by the boundary facets (shoelace over outward-oriented facets)."""
    bf = mesh.boundary_facets
    a = mesh.vertices[mesh.facets[bf, 0]]
    b = mesh.vertices[mesh.facets[bf, 1]]
    area = 0.5 * np.sum(a[:, 0] * b[:, 1] - b[:, 0] * a[:, 1])
    return float(area)
