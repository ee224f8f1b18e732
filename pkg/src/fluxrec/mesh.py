"""Conforming triangular meshes with newest-vertex bisection refinement.

A mesh is a conforming triangulation of one of the built-in polygonal
domains.  Every triangle carries a refinement-edge label (the edge opposite
its newest vertex) so that local refinement by newest-vertex bisection
stays conforming and shape regular.  Boundary faces are tagged as either
accessible (``GAMMA_A``, where measurements live) or inaccessible
(``GAMMA_I``, where the unknown flux lives).
"""

from __future__ import annotations

import itertools
from enum import IntEnum

import numpy as np


class BoundaryTag(IntEnum):
    INTERIOR = 0
    GAMMA_A = 1
    GAMMA_I = 2


class MeshError(ValueError):
    """Invalid mesh topology, geometry or boundary tagging."""


_root_counter = itertools.count()

# Built-in domains: vertex coordinates, counterclockwise triangles and the
# boundary outline split into named straight sides.
_DOMAINS = {
    "square": {
        "vertices": [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)],
        "triangles": [(0, 1, 3), (0, 3, 2)],
        "sides": {
            "bottom": ((0.0, 0.0), (1.0, 0.0)),
            "right": ((1.0, 0.0), (1.0, 1.0)),
            "top": ((1.0, 1.0), (0.0, 1.0)),
            "left": ((0.0, 1.0), (0.0, 0.0)),
        },
    },
    # Unit square minus the top-right quadrant; reentrant corner at (1/2, 1/2).
    "lshape": {
        "vertices": [
            (0.0, 0.0), (0.5, 0.0), (1.0, 0.0),
            (0.0, 0.5), (0.5, 0.5), (1.0, 0.5),
            (0.0, 1.0), (0.5, 1.0),
        ],
        "triangles": [
            (0, 1, 4), (0, 4, 3),
            (1, 2, 5), (1, 5, 4),
            (3, 4, 7), (3, 7, 6),
        ],
        "sides": {
            "bottom": ((0.0, 0.0), (1.0, 0.0)),
            "right": ((1.0, 0.0), (1.0, 0.5)),
            "inner_top": ((1.0, 0.5), (0.5, 0.5)),
            "inner_right": ((0.5, 0.5), (0.5, 1.0)),
            "top": ((0.5, 1.0), (0.0, 1.0)),
            "left": ((0.0, 1.0), (0.0, 0.0)),
        },
    },
}


def _edge_key(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


class Mesh:
    """Immutable conforming triangulation with per-face boundary tags.

    Parameters
    ----------
    vertices : (n, 2) float array
        Vertex coordinates; vertex ids are the row indices.
    triangles : (m, 3) int array
        Vertex ids per triangle, counterclockwise.
    refinement_edge : (m,) int array
        Local index in {0, 1, 2} of the edge opposite the newest vertex.
        Local edge ``k`` joins local vertices ``k+1`` and ``k+2`` (mod 3).
    boundary_tags : dict
        Maps sorted boundary vertex pairs ``(a, b)`` to a non-interior
        :class:`BoundaryTag`.  Must cover every boundary face exactly.
    generation : (m,) int array, optional
        Bisection depth per triangle (0 for an initial mesh).
    vertex_parents : (n, 2) int array, optional
        For vertices created as edge midpoints, the ids of the edge
        endpoints; (-1, -1) for vertices of the initial mesh.

    The face table (faces, incident triangles, tags, fixed unit normals) is
    derived in the constructor and the instance is treated as immutable:
    :func:`bisect` returns a new mesh.
    """

    def __init__(self, vertices, triangles, refinement_edge, boundary_tags,
                 generation=None, vertex_parents=None, level=0, root=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        self.refinement_edge = np.ascontiguousarray(refinement_edge, dtype=np.int64)
        m = self.triangles.shape[0]
        if generation is None:
            generation = np.zeros(m, dtype=np.int64)
        self.generation = np.ascontiguousarray(generation, dtype=np.int64)
        if vertex_parents is None:
            vertex_parents = np.full((self.n_vertices, 2), -1, dtype=np.int64)
        self.vertex_parents = np.ascontiguousarray(vertex_parents, dtype=np.int64)
        self.level = int(level)
        self.root = _next_root() if root is None else root

        self._validate_geometry()
        self._build_face_table(boundary_tags)
        for arr in (self.vertices, self.triangles, self.refinement_edge,
                    self.generation, self.vertex_parents, self.faces,
                    self.face_tris, self.face_tags, self.face_normals,
                    self.tri_faces):
            arr.setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def n_faces(self) -> int:
        return self.faces.shape[0]

    def __repr__(self):
        return (f"Mesh(n_vertices={self.n_vertices}, "
                f"n_triangles={self.n_triangles}, level={self.level})")

    def _validate_geometry(self):
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise MeshError("vertices must be an (n, 2) array")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise MeshError("triangles must be an (m, 3) array")
        if self.triangles.size and (self.triangles.min() < 0
                                    or self.triangles.max() >= self.n_vertices):
            raise MeshError("triangle vertex id out of range")
        t = self.triangles
        if (t[:, 0] == t[:, 1]).any() or (t[:, 1] == t[:, 2]).any() \
                or (t[:, 0] == t[:, 2]).any():
            raise MeshError("triangle with repeated vertex ids")
        if (self.signed_areas() <= 0.0).any():
            raise MeshError("triangle with non-positive signed area "
                            "(vertices must be counterclockwise)")
        if not np.all((self.refinement_edge >= 0) & (self.refinement_edge < 3)):
            raise MeshError("refinement_edge entries must be in {0, 1, 2}")

    def _build_face_table(self, boundary_tags):
        t = self.triangles
        m = self.n_triangles
        # local edge k is opposite local vertex k
        edges = np.concatenate([t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]])
        edges_sorted = np.sort(edges, axis=1)
        faces, inverse = np.unique(edges_sorted, axis=0, return_inverse=True)
        self.faces = faces
        self.tri_faces = inverse.reshape(3, m).T.copy()

        flat_f = self.tri_faces.ravel()
        flat_t = np.repeat(np.arange(m), 3)
        order = np.lexsort((flat_t, flat_f))
        ff, tt = flat_f[order], flat_t[order]
        first = np.ones(ff.size, dtype=bool)
        first[1:] = ff[1:] != ff[:-1]
        counts = np.bincount(ff, minlength=faces.shape[0])
        if (counts > 2).any():
            raise MeshError("non-manifold face shared by more than 2 triangles")
        face_tris = np.full((faces.shape[0], 2), -1, dtype=np.int64)
        face_tris[ff[first], 0] = tt[first]
        face_tris[ff[~first], 1] = tt[~first]
        self.face_tris = face_tris

        tags = np.full(faces.shape[0], int(BoundaryTag.INTERIOR), dtype=np.int64)
        boundary = face_tris[:, 1] < 0
        tag_map = {_edge_key(*k): BoundaryTag(v) for k, v in boundary_tags.items()}
        for f in np.flatnonzero(boundary):
            key = (int(faces[f, 0]), int(faces[f, 1]))
            tag = tag_map.pop(key, None)
            if tag is None or tag == BoundaryTag.INTERIOR:
                raise MeshError(f"boundary face {key} without GammaA/GammaI tag")
            tags[f] = int(tag)
        if tag_map:
            raise MeshError(f"tagged edges are not boundary faces: "
                            f"{sorted(tag_map)}")
        self.face_tags = tags

        # fixed unit normals: outward on the boundary, lower->higher triangle
        # id across interior faces
        pa = self.vertices[faces[:, 0]]
        pb = self.vertices[faces[:, 1]]
        tang = pb - pa
        lengths = np.hypot(tang[:, 0], tang[:, 1])
        normals = np.column_stack([tang[:, 1], -tang[:, 0]]) / lengths[:, None]
        centroids = self.vertices[t].mean(axis=1)
        mid = 0.5 * (pa + pb)
        ref = np.where(boundary[:, None],
                       mid - centroids[face_tris[:, 0]],
                       centroids[np.where(boundary, 0, face_tris[:, 1])]
                       - centroids[face_tris[:, 0]])
        flip = np.einsum("ij,ij->i", normals, ref) < 0.0
        normals[flip] *= -1.0
        self.face_normals = normals
        self.face_lengths = lengths
        self.face_lengths.setflags(write=False)

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        return 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                      - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))

    def areas(self) -> np.ndarray:
        return self.signed_areas()

    def faces_with_tag(self, tag: BoundaryTag) -> np.ndarray:
        return np.flatnonzero(self.face_tags == int(tag))

    def boundary_tag_map(self) -> dict:
        """Sorted vertex pair -> tag for every boundary face."""
        out = {}
        for f in np.flatnonzero(self.face_tags != int(BoundaryTag.INTERIOR)):
            out[(int(self.faces[f, 0]), int(self.faces[f, 1]))] = \
                BoundaryTag(int(self.face_tags[f]))
        return out

    def angles(self) -> np.ndarray:
        """All interior angles in radians, shape (m, 3)."""
        p = self.vertices[self.triangles]
        out = np.empty((self.n_triangles, 3))
        for k in range(3):
            u = p[:, (k + 1) % 3] - p[:, k]
            v = p[:, (k + 2) % 3] - p[:, k]
            cos = np.einsum("ij,ij->i", u, v) / (
                np.hypot(u[:, 0], u[:, 1]) * np.hypot(v[:, 0], v[:, 1]))
            out[:, k] = np.arccos(np.clip(cos, -1.0, 1.0))
        return out


def _next_root() -> int:
    return next(_root_counter)


def build_initial_mesh(domain: str, gamma_i) -> Mesh:
    """Build a built-in coarse mesh with a named inaccessible boundary part.

    Parameters
    ----------
    domain : str
        One of ``"square"`` (two-triangle unit square) or ``"lshape"``
        (six-triangle L-shape, the unit square minus its top-right quadrant).
    gamma_i : str or iterable of str
        Side name(s) forming the inaccessible boundary; remaining sides are
        accessible.  Side names for the square: bottom, right, top, left.

    Refinement edges are initialized to the longest edge of each triangle
    (ties broken by the smallest opposite-vertex id), which makes the
    bisection closure terminate on the built-in meshes.
    """
    if domain not in _DOMAINS:
        raise MeshError(f"unknown domain {domain!r}; "
                        f"available: {sorted(_DOMAINS)}")
    spec = _DOMAINS[domain]
    if isinstance(gamma_i, str):
        gamma_i = (gamma_i,)
    gamma_i = tuple(gamma_i)
    side_names = set(spec["sides"])
    unknown = [s for s in gamma_i if s not in side_names]
    if unknown:
        raise MeshError(f"unknown side name(s) {unknown}; "
                        f"available: {sorted(side_names)}")
    if not gamma_i:
        raise MeshError("boundary partition incomplete: empty GammaI selection")
    if set(gamma_i) == side_names:
        raise MeshError("GammaI selection covers the whole boundary; "
                        "GammaA would be empty")

    vertices = np.asarray(spec["vertices"], dtype=float)
    triangles = np.asarray(spec["triangles"], dtype=np.int64)
    ref_edge = _longest_edge_labels(vertices, triangles)

    tags = {}
    for f_a, f_b in _boundary_edges(triangles):
        mid = 0.5 * (vertices[f_a] + vertices[f_b])
        side = _side_of(mid, spec["sides"])
        if side is None:
            raise MeshError("boundary partition incomplete: boundary face "
                            f"({f_a}, {f_b}) lies on no named side")
        tag = BoundaryTag.GAMMA_I if side in gamma_i else BoundaryTag.GAMMA_A
        tags[(f_a, f_b)] = tag
    return Mesh(vertices, triangles, ref_edge, tags)


def _boundary_edges(triangles):
    edges = np.concatenate([triangles[:, [1, 2]], triangles[:, [2, 0]],
                            triangles[:, [0, 1]]])
    edges = np.sort(edges, axis=1)
    uniq, counts = np.unique(edges, axis=0, return_counts=True)
    return [tuple(int(v) for v in e) for e in uniq[counts == 1]]


def _side_of(point, sides, tol=1e-12):
    for name, (a, b) in sides.items():
        a = np.asarray(a)
        b = np.asarray(b)
        if abs(np.linalg.norm(point - a) + np.linalg.norm(b - point)
               - np.linalg.norm(b - a)) < tol:
            return name
    return None


def _longest_edge_labels(vertices, triangles) -> np.ndarray:
    p = vertices[triangles]
    lens = np.stack(
        [np.linalg.norm(p[:, (k + 2) % 3] - p[:, (k + 1) % 3], axis=1)
         for k in range(3)], axis=1)
    longest = lens.max(axis=1, keepdims=True)
    tie = lens >= longest * (1.0 - 1e-12)
    # among longest edges pick the one whose opposite vertex id is smallest
    opp_ids = np.where(tie, triangles, np.iinfo(np.int64).max)
    return opp_ids.argmin(axis=1).astype(np.int64)


def bisect(mesh: Mesh, marked) -> Mesh:
    """Bisect the marked triangles, restoring conformity recursively.

    Every marked triangle is bisected at least once along its refinement
    edge.  Neighbors whose shared edge would otherwise carry a hanging node
    are bisected first (compatible-pair bisection), which is guaranteed to
    need at most one extra level per neighbor.  Children inherit generation
    ``parent + 1`` and the midpoint becomes the newest vertex of both
    children.

    Returns a new mesh; with an empty marking the input mesh is returned
    unchanged.
    """
    marked = np.unique(np.asarray(list(marked), dtype=np.int64))
    if marked.size == 0:
        return mesh
    if marked.min() < 0 or marked.max() >= mesh.n_triangles:
        raise MeshError("marked triangle id out of range")

    verts = [tuple(v) for v in mesh.vertices]
    parents = [tuple(pp) for pp in mesh.vertex_parents]
    tri_v = [tuple(t) for t in mesh.triangles]
    tri_ref = list(mesh.refinement_edge)
    tri_gen = list(mesh.generation)
    alive = [True] * len(tri_v)
    btags = mesh.boundary_tag_map()

    edge_tris: dict[tuple[int, int], list[int]] = {}
    for t, (a, b, c) in enumerate(tri_v):
        for key in (_edge_key(b, c), _edge_key(c, a), _edge_key(a, b)):
            edge_tris.setdefault(key, []).append(t)

    midpoints: dict[tuple[int, int], int] = {}

    def ref_key(t):
        a, b, c = tri_v[t]
        r = tri_ref[t]
        vs = (a, b, c)
        return _edge_key(vs[(r + 1) % 3], vs[(r + 2) % 3])

    def midpoint_of(key):
        vid = midpoints.get(key)
        if vid is None:
            a, b = key
            vid = len(verts)
            verts.append(((verts[a][0] + verts[b][0]) / 2.0,
                          (verts[a][1] + verts[b][1]) / 2.0))
            parents.append(key)
            midpoints[key] = vid
            tag = btags.pop(key, None)
            if tag is not None:
                btags[_edge_key(a, vid)] = tag
                btags[_edge_key(vid, b)] = tag
        return vid

    def split(t, mid):
        a, b, c = tri_v[t]
        r = tri_ref[t]
        vs = (a, b, c)
        peak, ea, eb = vs[r], vs[(r + 1) % 3], vs[(r + 2) % 3]
        alive[t] = False
        for key in (_edge_key(b, c), _edge_key(c, a), _edge_key(a, b)):
            edge_tris[key].remove(t)
        gen = tri_gen[t] + 1
        # children (peak, ea, mid) and (peak, mid, eb); the midpoint is the
        # newest vertex of both, so its opposite edge becomes the label
        for child, ref in (((peak, ea, mid), 2), ((peak, mid, eb), 1)):
            cid = len(tri_v)
            tri_v.append(child)
            tri_ref.append(ref)
            tri_gen.append(gen)
            alive.append(True)
            x, y, z = child
            for key in (_edge_key(y, z), _edge_key(z, x), _edge_key(x, y)):
                edge_tris.setdefault(key, []).append(cid)

    steps = 0
    for target in marked.tolist():
        if not alive[target]:
            continue  # already bisected during an earlier closure pass
        stack = [target]
        while stack:
            steps += 1
            if steps > 10 * len(tri_v):
                raise RuntimeError(
                    "bisection closure exceeded its step budget; "
                    "refinement-edge labeling is inconsistent")
            t = stack[-1]
            if not alive[t]:
                stack.pop()
                continue
            key = ref_key(t)
            others = [o for o in edge_tris.get(key, ()) if o != t]
            neighbor = others[0] if others else None
            if neighbor is not None and ref_key(neighbor) != key:
                stack.append(neighbor)
                continue
            mid = midpoint_of(key)
            split(t, mid)
            if neighbor is not None:
                split(neighbor, mid)
            stack.pop()

    keep = [i for i, a in enumerate(alive) if a]
    return Mesh(
        np.asarray(verts, dtype=float),
        np.asarray([tri_v[i] for i in keep], dtype=np.int64),
        np.asarray([tri_ref[i] for i in keep], dtype=np.int64),
        btags,
        generation=np.asarray([tri_gen[i] for i in keep], dtype=np.int64),
        vertex_parents=np.asarray(parents, dtype=np.int64),
        level=mesh.level + 1,
        root=mesh.root,
    )


def mesh_size(mesh: Mesh):
    """Per-triangle and per-face size measures.

    Returns ``(h_t, h_f)`` with ``h_t = area(T) ** (1/2)`` and
    ``h_f = length(F)``.
    """
    return np.sqrt(mesh.areas()), mesh.face_lengths.copy()


def patches(mesh: Mesh):
    """Face-neighbor and vertex-neighbor patches for every triangle.

    Returns ``(omega, d)`` where ``omega[t]`` holds the ids of ``t`` and all
    triangles sharing a face with it, and ``d[t]`` holds the ids of all
    triangles sharing at least a vertex with ``t`` (both sorted arrays,
    ``omega[t]`` is always a subset of ``d[t]``).
    """
    m = mesh.n_triangles
    omega = []
    for t in range(m):
        ids = {t}
        for f in mesh.tri_faces[t]:
            for nb in mesh.face_tris[f]:
                if nb >= 0:
                    ids.add(int(nb))
        omega.append(np.array(sorted(ids), dtype=np.int64))

    vertex_tris: dict[int, list[int]] = {}
    for t in range(m):
        for v in mesh.triangles[t]:
            vertex_tris.setdefault(int(v), []).append(t)
    d = []
    for t in range(m):
        ids = set()
        for v in mesh.triangles[t]:
            ids.update(vertex_tris[int(v)])
        d.append(np.array(sorted(ids), dtype=np.int64))
    return omega, d


def boundary_paths(mesh: Mesh, tag: BoundaryTag):
    """Ordered vertex chains of the boundary part with the given tag.

    Each connected component is returned as a list of vertex ids walking
    the component from end to end, starting at its lexicographically
    smallest endpoint coordinate.  Components are ordered by their starting
    coordinate, so the result is deterministic for a given geometry.
    """
    face_ids = mesh.faces_with_tag(tag)
    if face_ids.size == 0:
        return []
    adjacency: dict[int, list[int]] = {}
    for f in face_ids:
        a, b = int(mesh.faces[f, 0]), int(mesh.faces[f, 1])
        adjacency.setdefault(a, []).append(b)
        adjacency.setdefault(b, []).append(a)

    def coord(v):
        return (mesh.vertices[v, 0], mesh.vertices[v, 1])

    endpoints = sorted((v for v, nbs in adjacency.items() if len(nbs) == 1),
                       key=coord)
    if len(endpoints) % 2 != 0:
        raise MeshError("tagged boundary part is not a union of open paths")
    paths = []
    visited = set()
    for start in endpoints:
        if start in visited:
            continue
        chain = [start]
        visited.add(start)
        current = start
        while True:
            nxt = [v for v in adjacency[current] if v not in visited]
            if not nxt:
                break
            current = min(nxt, key=coord)
            chain.append(current)
            visited.add(current)
        paths.append(chain)
    if len(visited) != len(adjacency):
        raise MeshError("tagged boundary part contains a closed loop")
    paths.sort(key=lambda ch: coord(ch[0]))
    return paths
