"""Conforming tetrahedral meshes with face/edge topology.

Conventions
-----------
* Tets are stored with positive signed volume.
* Local edge ``i`` of a tet joins local vertices ``LOCAL_EDGES[i]``; local
  face ``i`` is the face opposite local vertex ``i``.
* Global edges and faces are sorted vertex tuples, numbered lexicographically.
  Edge direction runs from the lower to the higher vertex index.
* The owner of an interior face is the incident tet with the smaller index;
  the face normal is unit length and points from owner to neighbor
  (outward on boundary faces).
"""
import itertools
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

LOCAL_EDGES = np.array([(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)])
LOCAL_FACES = np.array([(1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2)])


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class FaceInfo:
    vertices: tuple
    owner: int
    neighbor: int | None
    normal: np.ndarray
    area: float
    diameter: float
    is_boundary: bool


def _signed_volumes(vertices, tets):
    p = vertices[tets]
    d = p[:, 1:] - p[:, :1]
    return np.linalg.det(d) / 6.0


def build_topology(tets, vertices):
    """Derive faces, edges and tet adjacency from a tet list.

    Returns ``(faces, edges, adjacency)`` where ``adjacency`` is a dict with
    ``tet_faces``, ``tet_edges``, ``face_owner``, ``face_neighbor`` and
    ``face_normal``.
    """
    tets = np.asarray(tets, dtype=np.int64)
    vertices = np.asarray(vertices, dtype=float)
    nt = len(tets)
    if nt == 0:
        raise MeshError("no tetrahedra")
    if tets.min() < 0 or tets.max() >= len(vertices):
        raise MeshError("tet references a vertex index out of range")

    all_edges = np.sort(tets[:, LOCAL_EDGES], axis=2).reshape(-1, 2)
    edges, edge_inv = np.unique(all_edges, axis=0, return_inverse=True)
    tet_edges = edge_inv.reshape(nt, 6)

    all_faces = np.sort(tets[:, LOCAL_FACES], axis=2).reshape(-1, 3)
    faces, face_inv = np.unique(all_faces, axis=0, return_inverse=True)
    face_inv = face_inv.ravel()
    tet_faces = face_inv.reshape(nt, 4)
    counts = np.bincount(face_inv, minlength=len(faces))
    if counts.max() > 2:
        raise MeshError("non-manifold mesh: a face is shared by more than 2 tets")

    owner_of = np.repeat(np.arange(nt), 4)
    local_of = np.tile(np.arange(4), nt)
    order = np.lexsort((owner_of, face_inv))
    first = np.ones(len(order), dtype=bool)
    first[1:] = face_inv[order][1:] != face_inv[order][:-1]
    face_owner = owner_of[order][first]
    owner_local = local_of[order][first]
    face_neighbor = np.full(len(faces), -1, dtype=np.int64)
    second = ~first
    face_neighbor[face_inv[order][second]] = owner_of[order][second]

    p = vertices[faces]
    normal = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    normal /= np.linalg.norm(normal, axis=1)[:, None]
    opposite = vertices[tets[face_owner, owner_local]]
    flip = np.einsum("ij,ij->i", normal, opposite - p[:, 0]) > 0
    normal[flip] *= -1.0

    adjacency = dict(
        tet_faces=tet_faces,
        tet_edges=tet_edges,
        face_owner=face_owner,
        face_neighbor=face_neighbor,
        face_normal=normal,
    )
    return faces, edges, adjacency


class Mesh:
    """Immutable tetrahedral mesh; see module docstring for conventions."""

    def __init__(self, vertices, tets):
        vertices = np.array(vertices, dtype=float)
        tets = np.array(tets, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise MeshError("vertices must have shape (n, 3)")
        if tets.ndim != 2 or tets.shape[1] != 4 or len(tets) == 0:
            raise MeshError("no tetrahedra")
        vol = _signed_volumes(vertices, tets)
        if np.any(np.abs(vol) <= 1e-14 * np.max(np.abs(vol))):
            raise MeshError("degenerate tetrahedron (zero volume)")
        neg = vol < 0
        tets[neg, 0], tets[neg, 1] = tets[neg, 1].copy(), tets[neg, 0].copy()

        faces, edges, adj = build_topology(tets, vertices)
        self.vertices = vertices
        self.tets = tets
        self.faces = faces
        self.edges = edges
        self.tet_faces = adj["tet_faces"]
        self.tet_edges = adj["tet_edges"]
        self.face_owner = adj["face_owner"]
        self.face_neighbor = adj["face_neighbor"]
        self.face_normal = adj["face_normal"]

        self.volumes = np.abs(vol)
        p = vertices[faces]
        self.face_area = 0.5 * np.linalg.norm(
            np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1
        )
        face_edge_len = np.stack(
            [np.linalg.norm(p[:, i] - p[:, j], axis=1) for i, j in ((0, 1), (0, 2), (1, 2))],
            axis=1,
        )
        self.face_h = face_edge_len.max(axis=1)
        q = vertices[tets]
        tet_edge_len = np.linalg.norm(q[:, LOCAL_EDGES[:, 1]] - q[:, LOCAL_EDGES[:, 0]], axis=2)
        self.h_K = tet_edge_len.max(axis=1)

        self.face_is_boundary = self.face_neighbor < 0
        bf = faces[self.face_is_boundary]
        self.boundary_vertex = np.zeros(len(vertices), dtype=bool)
        self.boundary_vertex[bf.ravel()] = True
        bedges = np.sort(bf[:, [[0, 1], [0, 2], [1, 2]]].reshape(-1, 2), axis=1)
        self.boundary_edge = np.zeros(len(edges), dtype=bool)
        if len(bedges):
            self.boundary_edge[self._edge_index(bedges)] = True
        self._check_closed_surface(bedges)

        for arr in (self.vertices, self.tets, self.faces, self.edges, self.tet_faces,
                    self.tet_edges, self.face_owner, self.face_neighbor, self.face_normal,
                    self.volumes, self.face_area, self.face_h, self.h_K,
                    self.face_is_boundary, self.boundary_vertex, self.boundary_edge):
            arr.setflags(write=False)

    def _edge_index(self, pairs):
        nv = len(self.vertices)
        keys = self.edges[:, 0] * nv + self.edges[:, 1]
        q = pairs[:, 0] * nv + pairs[:, 1]
        idx = np.searchsorted(keys, q)
        return idx

    def _check_closed_surface(self, bedges):
        # A hanging vertex leaves unmatched faces on the boundary surface; one
        # of their vertices then lies inside a boundary edge or face that does
        # not contain it.
        if len(bedges) == 0:
            return
        bv = np.flatnonzero(self.boundary_vertex)
        x = self.vertices[bv]
        scale = float(np.ptp(self.vertices, axis=0).max())
        tol = 1e-10 * scale
        bedges = np.unique(bedges, axis=0)
        for chunk in np.array_split(bedges, max(1, len(bedges) // 512)):
            a, b = self.vertices[chunk[:, 0]], self.vertices[chunk[:, 1]]
            d = b - a
            t = np.einsum("vj,ej->ve", x, d) - np.einsum("ej,ej->e", a, d)[None]
            t = t / np.einsum("ej,ej->e", d, d)[None]
            foot = a[None] + t[..., None] * d[None]
            dist = np.linalg.norm(x[:, None] - foot, axis=-1)
            inside = (t > 1e-9) & (t < 1 - 1e-9) & (dist < tol)
            if inside.any():
                raise MeshError("non-conforming mesh: face matching failed (hanging vertex?)")
        bf = self.faces[self.face_is_boundary]
        for chunk in np.array_split(bf, max(1, len(bf) // 256)):
            p0, p1, p2 = (self.vertices[chunk[:, i]] for i in range(3))
            e1, e2 = p1 - p0, p2 - p0
            nrm = np.cross(e1, e2)
            rel = x[:, None] - p0[None]
            off = np.abs(np.einsum("vej,ej->ve", rel, nrm)) / np.linalg.norm(nrm, axis=1)[None]
            g = np.stack([np.einsum("ej,ej->e", e1, e1), np.einsum("ej,ej->e", e1, e2),
                          np.einsum("ej,ej->e", e2, e2)], axis=1)
            r1, r2 = np.einsum("vej,ej->ve", rel, e1), np.einsum("vej,ej->ve", rel, e2)
            det = g[:, 0] * g[:, 2] - g[:, 1] ** 2
            s_ = (g[:, 2] * r1 - g[:, 1] * r2) / det
            t_ = (g[:, 0] * r2 - g[:, 1] * r1) / det
            inside = (off < tol) & (s_ > 1e-9) & (t_ > 1e-9) & (s_ + t_ < 1 - 1e-9)
            if inside.any():
                raise MeshError("non-conforming mesh: face matching failed (hanging vertex?)")

    @property
    def h(self):
        return float(self.h_K.max())

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_tets(self):
        return len(self.tets)

    @property
    def n_faces(self):
        return len(self.faces)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def interior_faces(self):
        return np.flatnonzero(~self.face_is_boundary)

    @property
    def boundary_faces(self):
        return np.flatnonzero(self.face_is_boundary)

    def jacobians(self, elems=None):
        """Affine maps x = x0 + J xhat for the listed tets."""
        t = self.tets if elems is None else self.tets[elems]
        p = self.vertices[t]
        J = np.transpose(p[:, 1:] - p[:, :1], (0, 2, 1))
        return p[:, 0], J

    def centroids(self, elems=None):
        t = self.tets if elems is None else self.tets[elems]
        return self.vertices[t].mean(axis=1)

    def face_info(self, f):
        nb = int(self.face_neighbor[f])
        return FaceInfo(
            vertices=tuple(int(v) for v in self.faces[f]),
            owner=int(self.face_owner[f]),
            neighbor=None if nb < 0 else nb,
            normal=self.face_normal[f].copy(),
            area=float(self.face_area[f]),
            diameter=float(self.face_h[f]),
            is_boundary=nb < 0,
        )

    def counts(self):
        return dict(
            vertices=self.n_vertices,
            tets=self.n_tets,
            edges=self.n_edges,
            faces=self.n_faces,
            boundary_faces=int(self.face_is_boundary.sum()),
            interior_faces=int((~self.face_is_boundary).sum()),
            h=self.h,
        )

    def to_json(self):
        """Topology dump for debugging (schema in README)."""
        return json.dumps(dict(
            vertices=self.vertices.tolist(),
            tets=self.tets.tolist(),
            edges=self.edges.tolist(),
            faces=[dict(vertices=self.faces[f].tolist(),
                        owner=int(self.face_owner[f]),
                        neighbor=int(self.face_neighbor[f]),
                        normal=self.face_normal[f].tolist(),
                        area=float(self.face_area[f]),
                        h_F=float(self.face_h[f]))
                   for f in range(self.n_faces)],
            tet_edges=self.tet_edges.tolist(),
            tet_faces=self.tet_faces.tolist(),
            h_K=self.h_K.tolist(),
        ))


def mesh_sizes(mesh):
    """Return (h, h_K per tet, h_F per face); sizes are longest edges."""
    return mesh.h, mesh.h_K, mesh.face_h


def generate_cube_mesh(n):
    """Kuhn split of an n x n x n grid of the unit cube into 6 n^3 tets."""
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    g = np.linspace(0.0, 1.0, n + 1)
    X, Y, Z = np.meshgrid(g, g, g, indexing="ij")
    vertices = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)

    def vid(i, j, k):
        return (i * (n + 1) + j) * (n + 1) + k

    I, J, K = np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij")
    I, J, K = I.ravel(), J.ravel(), K.ravel()
    unit = np.eye(3, dtype=np.int64)
    tets = []
    for perm in itertools.permutations(range(3)):
        steps = np.cumsum(unit[list(perm)], axis=0)
        corners = [vid(I, J, K)]
        for s in steps:
            corners.append(vid(I + s[0], J + s[1], K + s[2]))
        tets.append(np.stack(corners, axis=1))
    tets = np.stack(tets, axis=1).reshape(-1, 4)
    return Mesh(vertices, tets)


def single_tet_mesh(vertices=None):
    if vertices is None:
        vertices = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]]
    return Mesh(vertices, [[0, 1, 2, 3]])


_IGNORED_GMSH_TYPES = {1, 2, 15}
_GMSH_TET = 4


def read_gmsh(path):
    """Read a Gmsh MSH 2.2 ASCII file containing 4-node tetrahedra."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"mesh not found: {path}")
    lines = path.read_text().splitlines()
    pos = 0

    def err(msg, lineno):
        return MeshError(f"{path.name}:{lineno + 1}: {msg}")

    def next_line():
        nonlocal pos
        while pos < len(lines) and not lines[pos].strip():
            pos += 1
        if pos >= len(lines):
            raise err("unexpected end of file", pos - 1)
        s = lines[pos]
        pos += 1
        return s.strip(), pos - 1

    nodes = {}
    tets = []
    seen_elements = False
    seen_nodes = False
    while pos < len(lines):
        line = lines[pos].strip()
        pos += 1
        if not line:
            continue
        if line == "$MeshFormat":
            s, ln = next_line()
            parts = s.split()
            if len(parts) < 3:
                raise err("malformed $MeshFormat header", ln)
            if not parts[0].startswith("2"):
                raise err(f"unsupported MSH version {parts[0]} (need 2.2)", ln)
            if parts[1] != "0":
                raise err("binary MSH files are not supported", ln)
            s, ln = next_line()
            if s != "$EndMeshFormat":
                raise err("expected $EndMeshFormat", ln)
        elif line == "$Nodes":
            s, ln = next_line()
            try:
                count = int(s)
            except ValueError:
                raise err(f"bad node count {s!r}", ln) from None
            for _ in range(count):
                s, ln = next_line()
                parts = s.split()
                try:
                    nodes[int(parts[0])] = [float(v) for v in parts[1:4]]
                except (ValueError, IndexError):
                    raise err(f"bad node line {s!r}", ln) from None
                if len(parts) < 4:
                    raise err(f"bad node line {s!r}", ln)
            s, ln = next_line()
            if s != "$EndNodes":
                raise err("expected $EndNodes", ln)
            seen_nodes = True
        elif line == "$Elements":
            s, ln = next_line()
            try:
                count = int(s)
            except ValueError:
                raise err(f"bad element count {s!r}", ln) from None
            for _ in range(count):
                s, ln = next_line()
                try:
                    parts = [int(v) for v in s.split()]
                    etype, ntags = parts[1], parts[2]
                except (ValueError, IndexError):
                    raise err(f"bad element line {s!r}", ln) from None
                conn = parts[3 + ntags:]
                if etype == _GMSH_TET:
                    if len(conn) != 4:
                        raise err("tetrahedron needs 4 nodes", ln)
                    tets.append(conn)
                elif etype not in _IGNORED_GMSH_TYPES:
                    raise err(f"unsupported element type {etype} ({len(conn)} nodes)", ln)
            s, ln = next_line()
            if s != "$EndElements":
                raise err("expected $EndElements", ln)
            seen_elements = True
        elif line.startswith("$"):
            # skip unknown sections
            end = "$End" + line[1:]
            while pos < len(lines) and lines[pos].strip() != end:
                pos += 1
            pos += 1
        else:
            raise err(f"unexpected content {line!r}", pos - 1)

    if not seen_nodes:
        raise MeshError(f"{path.name}: missing $Nodes section")
    if not seen_elements or not tets:
        raise MeshError(f"{path.name}: no tetrahedra")
    tags = sorted(nodes)
    index = {t: i for i, t in enumerate(tags)}
    vertices = np.array([nodes[t] for t in tags])
    try:
        tet_idx = np.array([[index[t] for t in tet] for tet in tets], dtype=np.int64)
    except KeyError as e:
        raise MeshError(f"{path.name}: element references unknown node {e.args[0]}") from None
    return Mesh(vertices, tet_idx)


def write_gmsh(mesh, path):
    """Write a mesh as MSH 2.2 ASCII (tets only)."""
    out = ["$MeshFormat", "2.2 0 8", "$EndMeshFormat", "$Nodes", str(mesh.n_vertices)]
    out += [f"{i + 1} {x:.17g} {y:.17g} {z:.17g}" for i, (x, y, z) in enumerate(mesh.vertices)]
    out += ["$EndNodes", "$Elements", str(mesh.n_tets)]
    out += [f"{i + 1} 4 2 1 1 " + " ".join(str(v + 1) for v in t) for i, t in enumerate(mesh.tets)]
    out += ["$EndElements"]
    Path(path).write_text("\n".join(out) + "\n")
