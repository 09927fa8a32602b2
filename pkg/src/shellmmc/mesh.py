"""Triangulated mid-surface meshes: loading, topology queries, normals, cutting."""

import numpy as np

from .errors import MeshError, TopologyError

# Faces with squared area below this fraction of the squared bounding-box
# diagonal are rejected as degenerate.
DEGENERATE_AREA_REL_TOL = 1e-12


class SurfaceMesh:
    """Indexed triangle mesh of a mid-surface.

    Parameters
    ----------
    vertices : (n_v, 3) array_like
        Vertex coordinates, order preserved from the source file.
    faces : (n_f, 3) array_like
        Vertex index triples. All faces must be consistently oriented
        (each interior edge appears exactly once in each direction) and
        every edge may be shared by at most two faces.
    patch_id : (n_f,) array_like, optional
        Integer patch label per face. Defaults to all zeros.
    """

    def __init__(self, vertices, faces, patch_id=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.faces = np.ascontiguousarray(faces, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise MeshError("vertices must be an (n, 3) array")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise MeshError("faces must be an (n, 3) array of vertex triples")
        if patch_id is None:
            patch_id = np.zeros(len(self.faces), dtype=np.int64)
        self.patch_id = np.ascontiguousarray(patch_id, dtype=np.int64)
        if self.patch_id.shape != (len(self.faces),):
            raise MeshError("patch_id must hold one label per face")
        self._validate()
        self.vertices.setflags(write=False)
        self.faces.setflags(write=False)
        self.patch_id.setflags(write=False)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_faces(self):
        return len(self.faces)

    def _validate(self):
        nv = len(self.vertices)
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= nv):
            bad = np.where((self.faces < 0) | (self.faces >= nv))[0][0]
            raise MeshError(f"face {bad}: vertex index out of range")
        same = (
            (self.faces[:, 0] == self.faces[:, 1])
            | (self.faces[:, 1] == self.faces[:, 2])
            | (self.faces[:, 2] == self.faces[:, 0])
        )
        if same.any():
            raise MeshError(f"face {np.where(same)[0][0]}: repeated vertex")
        if len(self.faces) == 0:
            raise MeshError("mesh has no faces")
        used = np.zeros(nv, dtype=bool)
        used[self.faces.ravel()] = True
        if not used.all():
            raise MeshError(
                f"vertex {np.where(~used)[0][0]} is not referenced by any face"
            )

        areas2 = _face_areas_sq(self.vertices, self.faces)
        bbox = self.vertices.max(axis=0) - self.vertices.min(axis=0)
        diag2 = float(bbox @ bbox)
        tol = (DEGENERATE_AREA_REL_TOL * diag2) ** 2
        small = areas2 <= tol
        if small.any():
            raise MeshError(f"face {np.where(small)[0][0]}: degenerate (zero area)")

        # Orientation consistency: no directed edge may repeat, and every
        # undirected edge is shared by at most two faces.
        de = directed_edges(self.faces)
        keys = de[:, 0].astype(np.int64) * len(self.vertices) + de[:, 1]
        uniq, counts = np.unique(keys, return_counts=True)
        if (counts > 1).any():
            a, b = divmod(int(uniq[np.argmax(counts > 1)]), len(self.vertices))
            raise MeshError(
                f"edge ({a}, {b}) repeated in the same direction: "
                "inconsistent orientation or non-manifold edge"
            )

    def face_areas(self):
        return np.sqrt(_face_areas_sq(self.vertices, self.faces))

    def face_normals(self):
        """Unit normals for all faces, (n_f, 3)."""
        cross = _face_cross(self.vertices, self.faces)
        norms = np.linalg.norm(cross, axis=1)
        if (norms == 0).any():
            raise MeshError(f"face {np.where(norms == 0)[0][0]}: zero-area face")
        return cross / norms[:, None]

    def vertex_normals(self):
        """Area-weighted unit vertex normals over the 1-ring, (n_v, 3)."""
        cross = _face_cross(self.vertices, self.faces)  # = 2 * area * normal
        acc = np.zeros_like(self.vertices)
        for k in range(3):
            np.add.at(acc, self.faces[:, k], cross)
        norms = np.linalg.norm(acc, axis=1)
        ring_scale = np.zeros(len(self.vertices))
        np.add.at(ring_scale, self.faces.ravel(), np.repeat(np.linalg.norm(cross, axis=1), 3))
        unused = ring_scale == 0
        if unused.any():
            raise MeshError(f"vertex {np.where(unused)[0][0]} belongs to no face")
        bad = norms <= 1e-12 * ring_scale
        if bad.any():
            raise MeshError(
                f"vertex {np.where(bad)[0][0]}: 1-ring normals cancel, "
                "vertex normal undefined"
            )
        return acc / norms[:, None]

    def boundary_loops(self):
        """Boundary loops as vertex cycles, each counterclockwise with
        respect to the outward face orientation."""
        return _boundary_loops(self.faces)

    def edge_count(self):
        de = directed_edges(self.faces)
        und = np.unique(np.sort(de, axis=1), axis=0)
        return len(und)


def _face_cross(vertices, faces):
    p0 = vertices[faces[:, 0]]
    l1 = vertices[faces[:, 1]] - p0
    l2 = vertices[faces[:, 2]] - p0
    return np.cross(l1, l2)


def _face_areas_sq(vertices, faces):
    cross = _face_cross(vertices, faces)
    return 0.25 * np.einsum("ij,ij->i", cross, cross)


def directed_edges(faces):
    """All directed edges (3 per face) as an (3 n_f, 2) array."""
    return np.concatenate(
        [faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]], axis=0
    )


def _boundary_loops(faces):
    de = directed_edges(faces)
    fwd = set(map(tuple, de.tolist()))
    boundary = [(a, b) for (a, b) in fwd if (b, a) not in fwd]
    nxt = {}
    for a, b in boundary:
        if a in nxt:
            raise MeshError(f"vertex {a}: non-manifold boundary (two outgoing boundary edges)")
        nxt[a] = b
    loops = []
    seen = set()
    for a, _ in sorted(boundary):
        if a in seen:
            continue
        loop = [a]
        seen.add(a)
        cur = nxt[a]
        while cur != a:
            loop.append(cur)
            seen.add(cur)
            cur = nxt[cur]
        loops.append(loop)
    return loops


def genus_and_boundaries(mesh):
    """Genus and boundary loops of a connected surface mesh.

    Returns ``(genus, loops)`` with ``genus = (2 - chi - b) / 2`` where
    ``chi = V - E + F`` and ``b`` is the number of boundary loops.
    """
    if _n_connected_components(mesh.faces, mesh.n_vertices) != 1:
        raise TopologyError("mesh is not connected; genus is per connected surface")
    loops = mesh.boundary_loops()
    chi = mesh.n_vertices - mesh.edge_count() + mesh.n_faces
    genus2 = 2 - chi - len(loops)
    if genus2 % 2 != 0 or genus2 < 0:
        raise TopologyError(f"inconsistent Euler characteristic {chi}")
    return genus2 // 2, loops


def _n_connected_components(faces, n_vertices):
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components

    de = directed_edges(faces)
    adj = coo_matrix(
        (np.ones(len(de)), (de[:, 0], de[:, 1])), shape=(n_vertices, n_vertices)
    )
    used = np.zeros(n_vertices, dtype=bool)
    used[faces.ravel()] = True
    n, labels = connected_components(adj, directed=False)
    return len(np.unique(labels[used]))


def face_normal(mesh, m):
    """Unit normal of face ``m`` from the right-handed edge cross product."""
    f = mesh.faces[m]
    l1 = mesh.vertices[f[1]] - mesh.vertices[f[0]]
    l2 = mesh.vertices[f[2]] - mesh.vertices[f[0]]
    c = np.cross(l1, l2)
    n = np.linalg.norm(c)
    if n == 0:
        raise MeshError(f"face {m}: zero-area face")
    return c / n


def vertex_normal(mesh, l):
    """Area-weighted average of 1-ring face normals at vertex ``l``, normalized."""
    rows = np.where((mesh.faces == l).any(axis=1))[0]
    if len(rows) == 0:
        raise MeshError(f"vertex {l} belongs to no face")
    cross = _face_cross(mesh.vertices, mesh.faces[rows])
    acc = cross.sum(axis=0)
    n = np.linalg.norm(acc)
    if n <= 1e-12 * np.linalg.norm(cross, axis=1).sum():
        raise MeshError(f"vertex {l}: 1-ring normals cancel, vertex normal undefined")
    return acc / n


# ---------------------------------------------------------------------------
# file readers


def load_surface_mesh(path, fmt=None, patch_labels=None):
    """Load a triangle mesh from an OFF or OBJ file.

    Parameters
    ----------
    path : str or Path
        Mesh file.
    fmt : {"off", "obj"}, optional
        Defaults to the file extension.
    patch_labels : str or Path, optional
        Sidecar label file, one integer per face line.
    """
    path = str(path)
    if fmt is None:
        fmt = path.rsplit(".", 1)[-1].lower()
    fmt = fmt.lower()
    if fmt == "off":
        vertices, faces = _read_off(path)
    elif fmt == "obj":
        vertices, faces = _read_obj(path)
    else:
        raise MeshError(f"unsupported mesh format '{fmt}' (expected off or obj)")
    labels = None
    if patch_labels is not None:
        labels = _read_labels(patch_labels, len(faces))
    return SurfaceMesh(vertices, faces, labels)


def _data_lines(path):
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if line:
                yield lineno, line


def _read_off(path):
    lines = _data_lines(path)
    try:
        lineno, header = next(lines)
    except StopIteration:
        raise MeshError(f"{path}: empty OFF file") from None
    counts = None
    if header != "OFF":
        if header.startswith("OFF"):
            counts = header[3:].split()
        else:
            raise MeshError(f"{path}:{lineno}: missing OFF header")
    if counts is None or not counts:
        lineno, line = next(lines, (None, None))
        if line is None:
            raise MeshError(f"{path}: truncated OFF header")
        counts = line.split()
    try:
        nv, nf = int(counts[0]), int(counts[1])
    except (ValueError, IndexError):
        raise MeshError(f"{path}:{lineno}: bad OFF count line") from None

    vertices = np.empty((nv, 3))
    for i in range(nv):
        lineno, line = next(lines, (None, None))
        if line is None:
            raise MeshError(f"{path}: truncated vertex block (expected {nv} vertices)")
        parts = line.split()
        try:
            vertices[i] = [float(parts[0]), float(parts[1]), float(parts[2])]
        except (ValueError, IndexError):
            raise MeshError(f"{path}:{lineno}: bad vertex line") from None

    faces = np.empty((nf, 3), dtype=np.int64)
    for i in range(nf):
        lineno, line = next(lines, (None, None))
        if line is None:
            raise MeshError(f"{path}: truncated face block (expected {nf} faces)")
        parts = line.split()
        try:
            k = int(parts[0])
            idx = [int(p) for p in parts[1 : 1 + k]]
        except (ValueError, IndexError):
            raise MeshError(f"{path}:{lineno}: bad face line") from None
        if k != 3:
            raise MeshError(f"{path}:{lineno}: face has {k} vertices, only triangles supported")
        if any(j < 0 or j >= nv for j in idx):
            raise MeshError(f"{path}:{lineno}: face {i}: index out of range")
        faces[i] = idx
    return vertices, faces


def _read_obj(path):
    vertices = []
    faces = []
    for lineno, line in _data_lines(path):
        parts = line.split()
        if parts[0] == "v":
            try:
                vertices.append([float(parts[1]), float(parts[2]), float(parts[3])])
            except (ValueError, IndexError):
                raise MeshError(f"{path}:{lineno}: bad vertex line") from None
        elif parts[0] == "f":
            try:
                idx = [int(p.split("/", 1)[0]) for p in parts[1:]]
            except ValueError:
                raise MeshError(f"{path}:{lineno}: bad face line") from None
            if len(idx) != 3:
                raise MeshError(
                    f"{path}:{lineno}: face has {len(idx)} vertices, only triangles supported"
                )
            # OBJ indices are 1-based; negative indices count from the end.
            idx = [j - 1 if j > 0 else len(vertices) + j for j in idx]
            if any(j < 0 or j >= len(vertices) for j in idx):
                raise MeshError(f"{path}:{lineno}: face {len(faces)}: index out of range")
            faces.append(idx)
        # normals, texcoords, groups, materials are ignored
    if not vertices or not faces:
        raise MeshError(f"{path}: no triangles found")
    return np.asarray(vertices, dtype=float), np.asarray(faces, dtype=np.int64)


def _read_labels(path, n_faces):
    labels = []
    for lineno, line in _data_lines(path):
        try:
            labels.append(int(line.split()[0]))
        except ValueError:
            raise MeshError(f"{path}:{lineno}: bad label line") from None
    if len(labels) != n_faces:
        raise MeshError(
            f"{path}: {len(labels)} labels for {n_faces} faces"
        )
    return np.asarray(labels, dtype=np.int64)


def write_off(path, mesh):
    lines = ["OFF", f"{mesh.n_vertices} {mesh.n_faces} 0"]
    for v in mesh.vertices:
        lines.append(f"{float(v[0])!r} {float(v[1])!r} {float(v[2])!r}")
    for f in mesh.faces:
        lines.append(f"3 {f[0]} {f[1]} {f[2]}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# patch extraction and surface cutting


def extract_patch(mesh, face_ids):
    """Submesh of the given faces with compactly re-indexed vertices.

    Returns ``(patch, vertex_map)`` where ``vertex_map[local] = global``.
    """
    face_ids = np.asarray(face_ids, dtype=np.int64)
    if face_ids.size == 0:
        raise MeshError("patch has no faces")
    if face_ids.min() < 0 or face_ids.max() >= mesh.n_faces:
        raise MeshError("patch face index out of range")
    faces = mesh.faces[face_ids]
    vertex_map = np.unique(faces)
    local = np.full(mesh.n_vertices, -1, dtype=np.int64)
    local[vertex_map] = np.arange(len(vertex_map))
    patch = SurfaceMesh(mesh.vertices[vertex_map], local[faces])
    return patch, vertex_map


class CutMesh:
    """A surface opened along cut paths into a topological disk.

    Attributes
    ----------
    base : SurfaceMesh
        The cut mesh; cut-path vertices are duplicated.
    cut_pairs : list of (int, int)
        ``(duplicate, original)`` vertex index pairs; both refer to
        vertices of ``base`` at identical coordinates.
    to_source : (n,) ndarray
        For every vertex of ``base``, the source vertex it copies
        (identity for non-duplicated vertices).
    n_source_vertices : int
        Vertex count of the un-cut input mesh.
    """

    def __init__(self, base, cut_pairs, to_source, n_source_vertices):
        self.base = base
        self.cut_pairs = list(cut_pairs)
        self.to_source = np.asarray(to_source, dtype=np.int64)
        self.n_source_vertices = int(n_source_vertices)

    def groups(self):
        """Source vertex -> list of base-mesh copies (length >= 1)."""
        out = [[] for _ in range(self.n_source_vertices)]
        for i, src in enumerate(self.to_source):
            out[src].append(i)
        return out


def cut_surface(mesh, path):
    """Open a surface along an edge path so it becomes a topological disk.

    ``path`` is a vertex index sequence; consecutive entries must be mesh
    edges. Closed loops repeat their first vertex, and a sequence may pass
    through a vertex several times (e.g. two loops through a base point).
    An empty path leaves the mesh unchanged, which is only valid if it
    already is a disk.
    """
    path = list(path)
    cut_edges = set()
    for a, b in zip(path[:-1], path[1:]):
        a, b = int(a), int(b)
        if not (0 <= a < mesh.n_vertices and 0 <= b < mesh.n_vertices):
            raise MeshError(f"cut path vertex out of range: ({a}, {b})")
        if a == b:
            raise MeshError(f"cut path repeats vertex {a} consecutively")
        if (min(a, b), max(a, b)) in cut_edges:
            raise MeshError(f"cut path uses edge ({a}, {b}) twice")
        cut_edges.add((min(a, b), max(a, b)))

    if cut_edges:
        base, pairs, to_source = _split_along_edges(mesh, cut_edges)
    else:
        base = SurfaceMesh(mesh.vertices, mesh.faces, mesh.patch_id)
        pairs, to_source = [], np.arange(mesh.n_vertices)

    try:
        genus, loops = genus_and_boundaries(base)
    except TopologyError as exc:
        raise TopologyError(f"cut insufficient: {exc}") from None
    if genus != 0 or len(loops) != 1:
        raise TopologyError(
            f"cut insufficient: result has genus {genus} and "
            f"{len(loops)} boundary loop(s), need a disk"
        )
    return CutMesh(base, pairs, to_source, mesh.n_vertices)


def _split_along_edges(mesh, cut_edges):
    de = directed_edges(mesh.faces)
    fwd = set(map(tuple, de.tolist()))
    for a, b in cut_edges:
        if (a, b) not in fwd or (b, a) not in fwd:
            if (a, b) not in fwd and (b, a) not in fwd:
                raise MeshError(f"cut path segment ({a}, {b}) is not a mesh edge")
            raise MeshError(f"cut path segment ({a}, {b}) is a boundary edge")

    nf = mesh.n_faces
    faces = mesh.faces
    # face corners around each cut vertex
    touched = sorted({v for e in cut_edges for v in e})
    new_faces = faces.copy()
    new_coords = [mesh.vertices]
    to_source = list(range(mesh.n_vertices))
    pairs = []
    next_id = mesh.n_vertices

    # adjacency: for walking the ring, map directed edge -> face row
    edge_face = {}
    for m in range(nf):
        f = faces[m]
        for k in range(3):
            edge_face[(f[k], f[(k + 1) % 3])] = m

    for v in touched:
        rows = np.where((faces == v).any(axis=1))[0]
        # fan connectivity: faces adjacent through a non-cut edge at v
        parent = {m: m for m in rows}

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for m in rows:
            f = faces[m]
            k = int(np.where(f == v)[0][0])
            for w in (f[(k + 1) % 3], f[(k + 2) % 3]):
                key = (min(v, w), max(v, w))
                if key in cut_edges:
                    continue
                # neighbor face across the (interior) edge {v, w}
                for cand in (edge_face.get((int(v), int(w))), edge_face.get((int(w), int(v)))):
                    if cand is not None and cand != m and cand in parent:
                        parent[find(cand)] = find(m)
        fans = {}
        for m in rows:
            fans.setdefault(find(m), []).append(m)
        fan_list = sorted(fans.values(), key=min)
        for fan in fan_list[1:]:
            copy = next_id
            next_id += 1
            to_source.append(v)
            new_coords.append(mesh.vertices[v][None, :])
            pairs.append((copy, v))
            for m in fan:
                new_faces[m][new_faces[m] == v] = copy

    vertices = np.concatenate(new_coords, axis=0)
    base = SurfaceMesh(vertices, new_faces, mesh.patch_id)
    return base, pairs, np.asarray(to_source, dtype=np.int64)
