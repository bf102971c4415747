"""Structured triangulations of the square (-1, 1)^2.

Node ``k`` sits at grid position ``(i, j) = (k % (n + 1), k // (n + 1))``,
i.e. nodes are numbered row by row with ``x`` varying fastest. Every grid
cell is split along its lower-left to upper-right diagonal.
"""

from dataclasses import dataclass, field

import numpy as np

DEFAULT_BOUNDS = (-1.0, 1.0, -1.0, 1.0)
_BOUNDARY_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class StructuredTriMesh:
    """Uniform triangle mesh of a rectangle.

    Attributes
    ----------
    cells_per_side : int
        Number of grid cells along each side.
    nodes : ndarray of shape (n_nodes, 2)
        Node coordinates in row-major grid order.
    triangles : ndarray of shape (n_triangles, 3)
        Counter-clockwise node index triples.
    boundary_mask : ndarray of shape (n_nodes,)
        True for nodes on the domain boundary.
    domain_bounds : tuple
        ``(xmin, xmax, ymin, ymax)``.
    """

    cells_per_side: int
    nodes: np.ndarray = field(repr=False)
    triangles: np.ndarray = field(repr=False)
    boundary_mask: np.ndarray = field(repr=False)
    domain_bounds: tuple = DEFAULT_BOUNDS

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def n_triangles(self):
        return self.triangles.shape[0]

    @property
    def h(self):
        xmin, xmax, _, _ = self.domain_bounds
        return (xmax - xmin) / self.cells_per_side

    def signed_areas(self):
        p0, p1, p2 = (self.nodes[self.triangles[:, k]] for k in range(3))
        e1, e2 = p1 - p0, p2 - p0
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def describe(self):
        """Return the two integers and four floats that rebuild this mesh."""
        return {"cells_per_side": self.cells_per_side,
                "domain_bounds": [float(b) for b in self.domain_bounds]}


def build_unit_square_mesh(cells_per_side, domain_bounds=DEFAULT_BOUNDS):
    """Triangulate the square with ``cells_per_side`` cells per side."""
    n = int(cells_per_side)
    if n != cells_per_side or n < 1:
        raise ValueError(f"cells_per_side must be a positive integer, got {cells_per_side!r}")
    xmin, xmax, ymin, ymax = (float(b) for b in domain_bounds)

    xs = np.linspace(xmin, xmax, n + 1)
    ys = np.linspace(ymin, ymax, n + 1)
    gx, gy = np.meshgrid(xs, ys)
    nodes = np.column_stack([gx.ravel(), gy.ravel()])

    i, j = np.meshgrid(np.arange(n), np.arange(n))
    ll = (j * (n + 1) + i).ravel()
    lr = ll + 1
    ul = ll + n + 1
    ur = ul + 1
    lower = np.column_stack([ll, lr, ur])
    upper = np.column_stack([ll, ur, ul])
    # interleave so the two triangles of a cell are adjacent
    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    on_boundary = (
        (np.abs(nodes[:, 0] - xmin) <= _BOUNDARY_TOL)
        | (np.abs(nodes[:, 0] - xmax) <= _BOUNDARY_TOL)
        | (np.abs(nodes[:, 1] - ymin) <= _BOUNDARY_TOL)
        | (np.abs(nodes[:, 1] - ymax) <= _BOUNDARY_TOL)
    )
    for arr in (nodes, triangles, on_boundary):
        arr.setflags(write=False)
    return StructuredTriMesh(n, nodes, triangles, on_boundary, (xmin, xmax, ymin, ymax))


def node_coordinates(mesh):
    """Node coordinates of ``mesh`` in documented row-major order."""
    return mesh.nodes
