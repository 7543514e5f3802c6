"""Conforming triangulations of polygonal 2D domains with tagged boundaries.

A :class:`Mesh` stores vertex coordinates, counterclockwise triangles and
the list of boundary edges, each tagged either Dirichlet or Navier.  Edge
connectivity (needed for the quadratic velocity space) is derived once at
construction and stored with a deterministic ``(min, max)`` key ordering.

Mesh file format (plain UTF-8 text, ``#`` starts a comment)::

    nodes N
    x y            (N lines)
    triangles T
    i j k          (T lines, 0-based)
    boundary B
    i j tag        (B lines, tag is D or N)
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable

import numpy as np


class BoundaryTag(enum.IntEnum):
    DIRICHLET = 0
    NAVIER = 1


_TAG_CHARS = {"D": BoundaryTag.DIRICHLET, "N": BoundaryTag.NAVIER}


class MeshError(ValueError):
    """Raised for malformed mesh input or inconsistent topology."""


@dataclass(frozen=True)
class EdgeGeometry:
    normal: np.ndarray
    tangent: np.ndarray
    length: float


def _readonly(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


class Mesh:
    """Triangulation with tagged boundary edges.

    Parameters
    ----------
    nodes : (N, 2) array_like
        Vertex coordinates.
    triangles : (T, 3) array_like of int
        Vertex indices.  Clockwise triangles are reordered.
    boundary_edges : (B, 2) array_like of int
        Boundary edges given by their two end vertices (any order).
    boundary_tags : (B,) array_like
        One :class:`BoundaryTag` per boundary edge.

    Notes
    -----
    Boundary edges are stored oriented counterclockwise with respect to
    their owner triangle, so that the outward normal of edge ``(a, b)`` is
    the direction ``(b - a)`` rotated by -90 degrees.
    """

    def __init__(self, nodes, triangles, boundary_edges, boundary_tags):
        nodes = np.asarray(nodes, dtype=float)
        tris = np.array(triangles, dtype=np.int64)
        if nodes.ndim != 2 or nodes.shape[1] != 2:
            raise MeshError("nodes must have shape (N, 2)")
        if not np.all(np.isfinite(nodes)):
            raise MeshError("node coordinates must be finite")
        if tris.ndim != 2 or tris.shape[1] != 3 or len(tris) == 0:
            raise MeshError("triangles must have shape (T, 3) with T >= 1")
        if tris.min() < 0 or tris.max() >= len(nodes):
            raise MeshError("triangle vertex index out of range")

        area2 = _signed_area2(nodes, tris)
        if np.any(area2 == 0.0):
            raise MeshError(f"degenerate triangle {int(np.flatnonzero(area2 == 0.0)[0])}")
        flip = area2 < 0
        tris[flip] = tris[flip][:, [0, 2, 1]]

        # local edge k joins local vertices k and k+1 (mod 3)
        local = tris[:, [[0, 1], [1, 2], [2, 0]]]  # (T, 3, 2)
        keys = np.sort(local.reshape(-1, 2), axis=1)
        edges, inverse, counts = np.unique(keys, axis=0, return_inverse=True,
                                           return_counts=True)
        inverse = inverse.reshape(-1)
        if np.any(counts > 2):
            bad = edges[np.flatnonzero(counts > 2)[0]]
            raise MeshError(f"non-manifold edge {tuple(int(i) for i in bad)}"
                            " shared by more than two triangles")

        tri_edges = inverse.reshape(-1, 3)
        owner = np.full(len(edges), -1, dtype=np.int64)
        owner_local = np.full(len(edges), -1, dtype=np.int64)
        flat_tri = np.repeat(np.arange(len(tris)), 3)
        flat_loc = np.tile(np.arange(3), len(tris))
        owner[inverse] = flat_tri
        owner_local[inverse] = flat_loc

        topo_boundary = np.flatnonzero(counts == 1)

        be = np.asarray(boundary_edges, dtype=np.int64).reshape(-1, 2)
        tags = np.asarray(boundary_tags, dtype=np.int64).reshape(-1)
        if len(be) != len(tags):
            raise MeshError("boundary_edges and boundary_tags differ in length")
        if len(tags) and not np.all(np.isin(tags, [t.value for t in BoundaryTag])):
            raise MeshError("unknown boundary tag")
        tag_of_edge = np.full(len(edges), -1, dtype=np.int64)
        if len(be):
            bkeys = np.sort(be, axis=1)
            pos = _lookup_rows(edges, bkeys)
            if np.any(pos < 0):
                bad = be[np.flatnonzero(pos < 0)[0]]
                raise MeshError(f"boundary edge {tuple(int(i) for i in bad)} is not a mesh edge")
            if np.any(counts[pos] != 1):
                bad = be[np.flatnonzero(counts[pos] != 1)[0]]
                raise MeshError(f"edge {tuple(int(i) for i in bad)} is interior but tagged as boundary")
            if len(np.unique(pos)) != len(pos):
                raise MeshError("boundary edge listed twice")
            tag_of_edge[pos] = tags
        untagged = topo_boundary[tag_of_edge[topo_boundary] < 0]
        if len(untagged):
            bad = edges[untagged[0]]
            raise MeshError(f"boundary edge {tuple(int(i) for i in bad)} has no tag")

        b_owner = owner[topo_boundary]
        b_loc = owner_local[topo_boundary]
        b_edges = tris[b_owner[:, None], np.stack([b_loc, (b_loc + 1) % 3], axis=1)]

        self.nodes = _readonly(nodes)
        self.triangles = _readonly(tris)
        self.edges = _readonly(edges)
        self.triangle_edges = _readonly(tri_edges)
        self.boundary_edges = _readonly(b_edges)
        self.boundary_edge_ids = _readonly(topo_boundary)
        self.boundary_owner = _readonly(b_owner)
        self.boundary_local_edge = _readonly(b_loc)
        self.boundary_tags = _readonly(tag_of_edge[topo_boundary])
        self._edge_counts = counts

    # basic sizes -------------------------------------------------------
    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_boundary_edges(self) -> int:
        return len(self.boundary_edges)

    @property
    def areas(self) -> np.ndarray:
        return 0.5 * _signed_area2(self.nodes, self.triangles)

    @property
    def h(self) -> float:
        """Largest triangle diameter (longest edge length)."""
        return float(self.edge_lengths().max())

    def edge_lengths(self) -> np.ndarray:
        p = self.nodes[self.edges]
        return np.linalg.norm(p[:, 1] - p[:, 0], axis=1)

    def edge_midpoints(self) -> np.ndarray:
        return self.nodes[self.edges].mean(axis=1)

    def navier_edges(self) -> np.ndarray:
        """Indices into the boundary edge list of the Navier-tagged edges."""
        return np.flatnonzero(self.boundary_tags == BoundaryTag.NAVIER)

    def dirichlet_edges(self) -> np.ndarray:
        return np.flatnonzero(self.boundary_tags == BoundaryTag.DIRICHLET)

    # boundary geometry -------------------------------------------------
    def boundary_geometry(self, which=None):
        """Outward normals, tangents and lengths of boundary edges.

        Returns arrays ``(normals, tangents, lengths)`` for the boundary
        edges selected by ``which`` (all of them by default).
        """
        be = self.boundary_edges if which is None else self.boundary_edges[which]
        d = self.nodes[be[:, 1]] - self.nodes[be[:, 0]]
        length = np.linalg.norm(d, axis=1)
        tangent = d / length[:, None]
        normal = np.stack([tangent[:, 1], -tangent[:, 0]], axis=1)
        return normal, tangent, length

    def edge_geometry(self, edge_index: int) -> EdgeGeometry:
        if not 0 <= edge_index < self.n_boundary_edges:
            raise IndexError(f"boundary edge index {edge_index} out of range")
        n, t, L = self.boundary_geometry([edge_index])
        return EdgeGeometry(n[0], t[0], float(L[0]))

    def __repr__(self):
        return (f"Mesh(nodes={self.n_nodes}, triangles={self.n_triangles}, "
                f"edges={self.n_edges}, h={self.h:.4g})")


def _signed_area2(nodes, tris):
    p0, p1, p2 = (nodes[tris[:, i]] for i in range(3))
    return ((p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1])
            - (p1[:, 1] - p0[:, 1]) * (p2[:, 0] - p0[:, 0]))


def _lookup_rows(table, rows):
    """Row positions of ``rows`` in the lexicographically sorted ``table``."""
    if len(rows) == 0:
        return np.zeros(0, dtype=np.int64)
    base = max(int(table.max()), int(rows.max())) + 1
    tk = table[:, 0] * base + table[:, 1]
    rk = rows[:, 0] * base + rows[:, 1]
    pos = np.searchsorted(tk, rk)
    pos = np.minimum(pos, len(tk) - 1)
    return np.where(tk[pos] == rk, pos, -1)


def _topological_boundary(tris):
    local = tris[:, [[0, 1], [1, 2], [2, 0]]].reshape(-1, 2)
    keys, counts = np.unique(np.sort(local, axis=1), axis=0, return_counts=True)
    return keys[counts == 1]


def _tag_edges(nodes, edges, tagger):
    mids = nodes[edges].mean(axis=1)
    return np.array([int(BoundaryTag(tagger(m))) for m in mids], dtype=np.int64)


def generate_structured_square(n: int, corner_min=(0.0, 0.0), corner_max=(1.0, 1.0),
                               tagger: Callable | None = None, diagonal: str = "right") -> Mesh:
    """Uniform ``n x n`` grid of a rectangle cut into ``2 n^2`` triangles.

    ``diagonal="right"`` cuts every cell from bottom-left to top-right,
    ``"left"`` from bottom-right to top-left.

    ``tagger`` maps a boundary edge midpoint ``(x, y)`` to a
    :class:`BoundaryTag`; all edges are Dirichlet when omitted.
    """
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    n = int(n)
    x0, y0 = map(float, corner_min)
    x1, y1 = map(float, corner_max)
    if not (x1 > x0 and y1 > y0):
        raise ValueError("corner_min must be strictly below corner_max")
    xs = np.linspace(x0, x1, n + 1)
    ys = np.linspace(y0, y1, n + 1)
    X, Y = np.meshgrid(xs, ys)
    nodes = np.stack([X.ravel(), Y.ravel()], axis=1)

    j, i = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    bl = (j * (n + 1) + i).ravel()
    br, tl = bl + 1, bl + n + 1
    tr = tl + 1
    tris = np.empty((2 * n * n, 3), dtype=np.int64)
    if diagonal == "right":
        tris[0::2] = np.stack([bl, br, tr], axis=1)
        tris[1::2] = np.stack([bl, tr, tl], axis=1)
    elif diagonal == "left":
        tris[0::2] = np.stack([bl, br, tl], axis=1)
        tris[1::2] = np.stack([br, tr, tl], axis=1)
    else:
        raise ValueError(f"diagonal must be 'right' or 'left', got {diagonal!r}")

    bedges = _topological_boundary(tris)
    if tagger is None:
        tags = np.zeros(len(bedges), dtype=np.int64)
    else:
        tags = _tag_edges(nodes, bedges, tagger)
    return Mesh(nodes, tris, bedges, tags)


def refine_uniform(mesh: Mesh) -> Mesh:
    """Split every triangle into four through its edge midpoints."""
    V = mesh.n_nodes
    nodes = np.vstack([mesh.nodes, mesh.edge_midpoints()])
    t = mesh.triangles
    m = V + mesh.triangle_edges  # midpoints of local edges 01, 12, 20
    v0, v1, v2 = t[:, 0], t[:, 1], t[:, 2]
    m01, m12, m20 = m[:, 0], m[:, 1], m[:, 2]
    children = np.concatenate([
        np.stack([v0, m01, m20], axis=1),
        np.stack([m01, v1, m12], axis=1),
        np.stack([m20, m12, v2], axis=1),
        np.stack([m01, m12, m20], axis=1),
    ])
    be = mesh.boundary_edges
    mid = V + mesh.boundary_edge_ids
    bedges = np.concatenate([np.stack([be[:, 0], mid], axis=1),
                             np.stack([mid, be[:, 1]], axis=1)])
    tags = np.concatenate([mesh.boundary_tags, mesh.boundary_tags])
    return Mesh(nodes, children, bedges, tags)


def dump_mesh(mesh: Mesh) -> str:
    """Serialize ``mesh`` in the plain-text mesh format."""
    lines = [f"nodes {mesh.n_nodes}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.nodes.tolist()]
    lines.append(f"triangles {mesh.n_triangles}")
    lines += [f"{i} {j} {k}" for i, j, k in mesh.triangles.tolist()]
    lines.append(f"boundary {mesh.n_boundary_edges}")
    inv = {v: k for k, v in _TAG_CHARS.items()}
    lines += [f"{i} {j} {inv[BoundaryTag(t)]}"
              for (i, j), t in zip(mesh.boundary_edges.tolist(), mesh.boundary_tags.tolist())]
    return "\n".join(lines) + "\n"


def load_mesh(text: str) -> Mesh:
    """Parse the plain-text mesh format.

    Raises
    ------
    MeshError
        With the offending line number on syntax errors, or on topology
        errors (non-manifold or untagged boundary edges).
    """
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].split()
        if body:
            rows.append((lineno, body))
    it = iter(rows)

    def header(name):
        try:
            lineno, body = next(it)
        except StopIteration:
            raise MeshError(f"unexpected end of file, expected '{name} <count>'") from None
        if len(body) != 2 or body[0] != name:
            raise MeshError(f"line {lineno}: expected '{name} <count>'")
        try:
            count = int(body[1])
        except ValueError:
            raise MeshError(f"line {lineno}: bad count {body[1]!r}") from None
        if count < 0:
            raise MeshError(f"line {lineno}: negative count")
        return count

    def block(count, width, conv, what):
        out = []
        for _ in range(count):
            try:
                lineno, body = next(it)
            except StopIteration:
                raise MeshError(f"unexpected end of file in {what} block") from None
            if len(body) != width:
                raise MeshError(f"line {lineno}: expected {width} fields in {what} block")
            try:
                out.append(conv(body))
            except (ValueError, KeyError):
                raise MeshError(f"line {lineno}: cannot parse {what} entry {' '.join(body)!r}") from None
        return out

    nodes = block(header("nodes"), 2, lambda b: [float(b[0]), float(b[1])], "nodes")
    tris = block(header("triangles"), 3, lambda b: [int(v) for v in b], "triangles")
    bnd = block(header("boundary"), 3,
                lambda b: (int(b[0]), int(b[1]), int(_TAG_CHARS[b[2]])), "boundary")
    extra = next(it, None)
    if extra is not None:
        raise MeshError(f"line {extra[0]}: unexpected trailing content")
    be = np.array([(i, j) for i, j, _ in bnd], dtype=np.int64).reshape(-1, 2)
    tags = np.array([t for *_, t in bnd], dtype=np.int64)
    return Mesh(np.array(nodes, dtype=float).reshape(-1, 2),
                np.array(tris, dtype=np.int64).reshape(-1, 3), be, tags)


def read_mesh(path) -> Mesh:
    with open(path, encoding="utf-8") as fh:
        return load_mesh(fh.read())


def write_mesh(mesh: Mesh, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_mesh(mesh))
