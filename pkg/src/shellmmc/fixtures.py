"""Synthetic surface meshes used by the test suite and the example configs.

All generators return consistently oriented :class:`~shellmmc.mesh.SurfaceMesh`
objects with outward (or +z) normals.
"""

import numpy as np

from .mesh import SurfaceMesh


def plate(nx=10, ny=10, width=1.0, height=1.0):
    """Flat rectangular plate in the z=0 plane, (nx*ny*2) faces, +z normals."""
    xs = np.linspace(0.0, width, nx + 1)
    ys = np.linspace(0.0, height, ny + 1)
    xx, yy = np.meshgrid(xs, ys, indexing="ij")
    vertices = np.column_stack([xx.ravel(), yy.ravel(), np.zeros(xx.size)])

    def vid(i, j):
        return i * (ny + 1) + j

    faces = []
    for i in range(nx):
        for j in range(ny):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            faces.append([a, b, c])
            faces.append([a, c, d])
    return SurfaceMesh(vertices, faces)


def plate_vertex_id(nx, ny, i, j):
    """Vertex index in a ``plate(nx, ny)`` mesh at grid node (i, j)."""
    return i * (ny + 1) + j


def disk(rings=6, segments=24, radius=1.0):
    """Planar disk in the z=0 plane with a regular polygon boundary."""
    vertices = [(0.0, 0.0, 0.0)]
    for k in range(1, rings + 1):
        r = radius * k / rings
        for s in range(segments):
            a = 2.0 * np.pi * s / segments
            vertices.append((r * np.cos(a), r * np.sin(a), 0.0))

    def vid(k, s):
        return 1 + (k - 1) * segments + (s % segments)

    faces = []
    for s in range(segments):
        faces.append([0, vid(1, s), vid(1, s + 1)])
    for k in range(1, rings):
        for s in range(segments):
            a, b = vid(k, s), vid(k, s + 1)
            c, d = vid(k + 1, s + 1), vid(k + 1, s)
            faces.append([a, d, c])
            faces.append([a, c, b])
    return SurfaceMesh(np.asarray(vertices), faces)


def spherical_cap(rings=8, segments=32, cap_angle=np.pi / 3, radius=1.0):
    """Open spherical cap around +z (polar angle up to ``cap_angle``)."""
    base = disk(rings, segments, radius=1.0)
    polar = np.linalg.norm(base.vertices[:, :2], axis=1) * cap_angle
    azim = np.arctan2(base.vertices[:, 1], base.vertices[:, 0])
    vertices = radius * np.column_stack(
        [np.sin(polar) * np.cos(azim), np.sin(polar) * np.sin(azim), np.cos(polar)]
    )
    return SurfaceMesh(vertices, base.faces)


def icosphere(subdivisions=2, radius=1.0):
    """Subdivided icosahedron projected to the sphere (closed, genus 0)."""
    t = (1.0 + np.sqrt(5.0)) / 2.0
    vertices = np.array(
        [
            (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
            (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
            (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
        ],
        dtype=float,
    )
    vertices /= np.linalg.norm(vertices, axis=1)[:, None]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    vertices = [tuple(v) for v in vertices]
    for _ in range(subdivisions):
        cache = {}
        index = {v: i for i, v in enumerate(vertices)}

        def midpoint(a, b):
            key = (min(a, b), max(a, b))
            if key in cache:
                return cache[key]
            p = np.asarray(vertices[a]) + np.asarray(vertices[b])
            p /= np.linalg.norm(p)
            p = tuple(p)
            idx = index.setdefault(p, len(vertices))
            if idx == len(vertices):
                vertices.append(p)
            cache[key] = idx
            return idx

        next_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            next_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = next_faces
    return SurfaceMesh(radius * np.asarray(vertices), faces)


def torus(n_major=24, n_minor=12, major_radius=1.0, minor_radius=0.35):
    """Closed torus (genus 1). Vertex (i, j) has index ``i * n_minor + j``."""
    vertices = []
    for i in range(n_major):
        u = 2.0 * np.pi * i / n_major
        for j in range(n_minor):
            v = 2.0 * np.pi * j / n_minor
            s = major_radius + minor_radius * np.cos(v)
            vertices.append((s * np.cos(u), s * np.sin(u), minor_radius * np.sin(v)))

    def vid(i, j):
        return (i % n_major) * n_minor + (j % n_minor)

    faces = []
    for i in range(n_major):
        for j in range(n_minor):
            a, b = vid(i, j), vid(i + 1, j)
            c, d = vid(i + 1, j + 1), vid(i, j + 1)
            faces.append([a, b, c])
            faces.append([a, c, d])
    return SurfaceMesh(np.asarray(vertices), faces)


def torus_cut_path(n_major=24, n_minor=12):
    """Meridian + longitude loops through vertex (0, 0) of :func:`torus`.

    Cutting the torus along this path opens it into a disk.
    """
    meridian = [j % n_minor for j in range(n_minor + 1)]
    longitude = [(i % n_major) * n_minor for i in range(n_major + 1)]
    return meridian + longitude[1:]


def tube(n_around=24, n_axial=8, radius=1.0, height=2.0):
    """Open cylinder (genus 0, two boundary loops).

    Vertex (i, j): i around the circumference, j along the axis;
    index ``i * (n_axial + 1) + j``.
    """
    vertices = []
    for i in range(n_around):
        u = 2.0 * np.pi * i / n_around
        for j in range(n_axial + 1):
            z = height * j / n_axial
            vertices.append((radius * np.cos(u), radius * np.sin(u), z))

    def vid(i, j):
        return (i % n_around) * (n_axial + 1) + j

    faces = []
    for i in range(n_around):
        for j in range(n_axial):
            a, b = vid(i, j), vid(i + 1, j)
            c, d = vid(i + 1, j + 1), vid(i, j + 1)
            faces.append([a, b, c])
            faces.append([a, c, d])
    return SurfaceMesh(np.asarray(vertices), faces)


def tube_cut_path(n_around=24, n_axial=8):
    """Axial seam joining the two boundary loops of :func:`tube`."""
    return [j for j in range(n_axial + 1)]
