"""Conformal atlas construction.

Each patch (opened into a disk by cutting) is parameterized in two stages:
a harmonic map to the unit disk with cotangent weights, then a linear
Beltrami solve that carries the disk onto a rectangle while cancelling the
angular distortion of the first stage, so the composed map is as conformal
as the triangulation allows.
"""

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .errors import BijectivityError, MeshError, SolverError

COT_CLAMP = 1e6
SOLVE_RTOL = 1e-10
BOUNDARY_SNAP = 1e-9


class DiskMap:
    """Per-vertex coordinates of a cut patch inside the closed unit disk."""

    def __init__(self, uv, source, boundary_loop):
        self.uv = np.asarray(uv, dtype=float)
        self.source = source
        self.boundary_loop = list(boundary_loop)


class BeltramiField:
    """Per-face complex Beltrami coefficient, |mu| < 1 everywhere."""

    def __init__(self, mu):
        self.mu = np.asarray(mu, dtype=complex)


class PatchChart:
    """One patch's rectangle parameterization and quality diagnostics.

    Attributes
    ----------
    cut : CutMesh
    rect_uv : (n, 2) ndarray
        Vertex coordinates in [0, width] x [0, height].
    corners : list of 4 vertex indices mapping to the rectangle corners
        (0,0), (W,0), (W,H), (0,H) in order.
    diagnostics : dict
        mean_abs_mu / max_abs_mu of the composed map, min_signed_area,
        flipped_faces, and the same distortion numbers for the disk stage.
    """

    def __init__(self, cut, rect_uv, corners, width, height, diagnostics):
        self.cut = cut
        self.rect_uv = np.asarray(rect_uv, dtype=float)
        self.corners = list(corners)
        self.width = float(width)
        self.height = float(height)
        self.diagnostics = dict(diagnostics)


def signed_areas(points2d, faces):
    """Signed area of each image triangle of a map into the plane."""
    p = points2d[faces]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def flatten_faces(vertices, faces):
    """Per-face 2D coordinates of a 3D mesh in right-handed tangent frames.

    Returns an (n_f, 3, 2) array; each triangle keeps its metric and is
    positively oriented with respect to its own normal.
    """
    p = vertices[faces]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    n = np.cross(e1, e2)
    nn = np.linalg.norm(n, axis=1)
    if (nn == 0).any():
        raise MeshError(f"face {int(np.argmax(nn == 0))}: zero-area face")
    n /= nn[:, None]
    ex = e1 / np.linalg.norm(e1, axis=1)[:, None]
    ey = np.cross(n, ex)
    out = np.empty((len(faces), 3, 2))
    for k in range(3):
        d = p[:, k] - p[:, 0]
        out[:, k, 0] = np.einsum("ij,ij->i", d, ex)
        out[:, k, 1] = np.einsum("ij,ij->i", d, ey)
    return out


def _p1_gradients(domain_xy):
    """Hat-function gradients per face: (n_f, 3, 2), and signed areas."""
    e = np.empty_like(domain_xy)
    e[:, 0] = domain_xy[:, 2] - domain_xy[:, 1]
    e[:, 1] = domain_xy[:, 0] - domain_xy[:, 2]
    e[:, 2] = domain_xy[:, 1] - domain_xy[:, 0]
    area = 0.5 * (-e[:, 2, 0] * e[:, 1, 1] + e[:, 2, 1] * e[:, 1, 0])
    grad = np.empty_like(e)
    grad[:, :, 0] = -e[:, :, 1]
    grad[:, :, 1] = e[:, :, 0]
    grad /= (2.0 * area)[:, None, None]
    return grad, area


def piecewise_beltrami(domain_xy, values, faces):
    """Beltrami coefficient of a piecewise-linear map per face.

    Parameters
    ----------
    domain_xy : (n_f, 3, 2) per-face domain coordinates (positively oriented)
    values : (n_v,) complex or (n_v, 2) image coordinates per vertex
    faces : (n_f, 3) vertex indices into ``values``
    """
    values = np.asarray(values)
    if values.ndim == 2:
        values = values[:, 0] + 1j * values[:, 1]
    grad, area = _p1_gradients(domain_xy)
    if (area <= 0).any():
        raise BijectivityError(
            f"domain triangle {int(np.argmax(area <= 0))} is not positively oriented"
        )
    w = values[faces]
    fx = np.einsum("fk,fk->f", w, grad[:, :, 0])
    fy = np.einsum("fk,fk->f", w, grad[:, :, 1])
    fz = 0.5 * (fx - 1j * fy)
    fzbar = 0.5 * (fx + 1j * fy)
    small = np.abs(fz) == 0
    fz = np.where(small, 1e-300, fz)
    return fzbar / fz


def cotangent_laplacian(vertices, faces, clamp=COT_CLAMP):
    """Sparse cotangent Laplacian L (positive semi-definite convention).

    L[i, i] = sum_j w_ij, L[i, j] = -w_ij with w_ij the clamped mean of
    the two cotangents opposite edge (i, j).
    """
    p = vertices[faces]
    n_v = len(vertices)
    rows, cols, vals = [], [], []
    for k in range(3):
        i = faces[:, (k + 1) % 3]
        j = faces[:, (k + 2) % 3]
        a = p[:, (k + 1) % 3] - p[:, k]
        b = p[:, (k + 2) % 3] - p[:, k]
        cross = np.linalg.norm(np.cross(a, b), axis=1)
        cross = np.maximum(cross, 1e-300)
        cot = np.einsum("ij,ij->i", a, b) / cross
        w = 0.5 * np.clip(cot, -clamp, clamp)
        rows += [i, j, i, j]
        cols += [j, i, i, j]
        vals += [-w, -w, w, w]
    L = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_v, n_v),
    )
    return L.tocsr()


def _solve_dirichlet(L, fixed_idx, fixed_vals, n):
    """Solve L x = 0 with Dirichlet values on ``fixed_idx``; returns x."""
    fixed_idx = np.asarray(fixed_idx, dtype=np.int64)
    free = np.setdiff1d(np.arange(n), fixed_idx)
    x = np.zeros((n,) + fixed_vals.shape[1:])
    x[fixed_idx] = fixed_vals
    if len(free) == 0:
        return x
    A = L[free][:, free].tocsc()
    b = -L[free][:, fixed_idx] @ fixed_vals
    try:
        lu = splu(A)
    except RuntimeError as exc:
        raise SolverError(f"sparse factorization failed: {exc}") from None
    sol = lu.solve(b)
    if not np.isfinite(sol).all():
        raise SolverError("linear solve produced non-finite values")
    res = A @ sol - b
    scale = np.linalg.norm(b) if np.linalg.norm(b) > 0 else 1.0
    if np.linalg.norm(res) > SOLVE_RTOL * scale:
        raise SolverError(
            f"linear solve residual {np.linalg.norm(res) / scale:.3e} "
            f"exceeds {SOLVE_RTOL:.1e}"
        )
    x[free] = sol
    return x


def harmonic_disk_map(cut):
    """Harmonic map of a cut (disk-topology) patch onto the unit disk.

    The boundary loop is pinned to the unit circle at arc-length
    proportional angles (starting from its smallest vertex index) and the
    interior solves the cotangent-weight Laplace equation.
    """
    mesh = cut.base
    loops = mesh.boundary_loops()
    if len(loops) != 1:
        raise MeshError(f"expected one boundary loop, found {len(loops)}")
    loop = loops[0]
    start = int(np.argmin(loop))
    loop = loop[start:] + loop[:start]

    pts = mesh.vertices[loop]
    seg = np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)
    total = seg.sum()
    cum = np.concatenate([[0.0], np.cumsum(seg[:-1])])
    theta = 2.0 * np.pi * cum / total
    boundary_uv = np.column_stack([np.cos(theta), np.sin(theta)])

    L = cotangent_laplacian(mesh.vertices, mesh.faces)
    uv = _solve_dirichlet(L, np.asarray(loop), boundary_uv, mesh.n_vertices)

    # residual contract at interior vertices
    interior = np.setdiff1d(np.arange(mesh.n_vertices), np.asarray(loop))
    if len(interior):
        r = (L @ uv)[interior]
        scale = np.abs(L)[interior].sum(axis=1).A1 * np.abs(uv).max() + 1e-300
        rel = np.abs(r).max(axis=1) / scale
        if (rel > 1e-8).any():
            raise SolverError(
                f"harmonic residual {rel.max():.3e} at vertex "
                f"{int(interior[np.argmax(rel)])} exceeds 1e-8"
            )

    areas = signed_areas(uv, mesh.faces)
    if (areas <= 0).any():
        bad = np.where(areas <= 0)[0]
        raise BijectivityError(
            f"harmonic disk map flipped {len(bad)} face(s), e.g. {bad[:8].tolist()}"
        )
    return DiskMap(uv, cut, loop)


def beltrami_of_inverse(disk):
    """Beltrami coefficient of the inverse disk map (disk -> surface).

    Per face the piecewise-linear inverse is differentiated in a
    right-handed orthonormal tangent frame of the surface triangle.
    """
    mesh = disk.source.base
    domain = disk.uv[mesh.faces]  # (n_f, 3, 2) in the disk
    flat = flatten_faces(mesh.vertices, mesh.faces)
    values_per_face = flat[:, :, 0] + 1j * flat[:, :, 1]

    grad, area = _p1_gradients(domain)
    if (area <= 0).any():
        raise BijectivityError(
            f"disk map not bijective on face {int(np.argmax(area <= 0))}"
        )
    fx = np.einsum("fk,fk->f", values_per_face, grad[:, :, 0])
    fy = np.einsum("fk,fk->f", values_per_face, grad[:, :, 1])
    mu = (fx + 1j * fy) / (fx - 1j * fy)
    bad = np.abs(mu) >= 1.0
    if bad.any():
        raise BijectivityError(
            f"inverse map is not quasi-conformal on face {int(np.argmax(bad))} "
            f"(|mu| = {np.abs(mu).max():.6f})"
        )
    return BeltramiField(mu)


def _alpha_coefficients(mu):
    rho = mu.real
    tau = mu.imag
    den = 1.0 - rho * rho - tau * tau
    if (den <= 0).any():
        raise BijectivityError(
            f"1 - rho^2 - tau^2 <= 0 on face {int(np.argmax(den <= 0))}"
        )
    a1 = ((rho - 1.0) ** 2 + tau * tau) / den
    a2 = -2.0 * tau / den
    a3 = ((rho + 1.0) ** 2 + tau * tau) / den
    return a1, a2, a3


def _anisotropic_stiffness(uv, faces, a1, a2, a3):
    grad, area = _p1_gradients(uv[faces])
    n_v = len(uv)
    A = np.empty((len(faces), 2, 2))
    A[:, 0, 0] = a1
    A[:, 0, 1] = a2
    A[:, 1, 0] = a2
    A[:, 1, 1] = a3
    # K_loc[f, i, j] = area_f * grad_i^T A grad_j
    Ag = np.einsum("fab,fjb->fja", A, grad)
    K_loc = np.einsum("fia,fja,f->fij", grad, Ag, area)
    rows = np.repeat(faces, 3, axis=1).ravel()
    cols = np.tile(faces, (1, 3)).ravel()
    K = sparse.coo_matrix((K_loc.ravel(), (rows, cols)), shape=(n_v, n_v))
    return K.tocsr()


def _split_boundary_arcs(loop, corners):
    pos = []
    for c in corners:
        where = [i for i, v in enumerate(loop) if v == c]
        if not where:
            raise MeshError(f"corner vertex {c} is not on the boundary loop")
        pos.append(where[0])
    if len(set(corners)) != 4:
        raise MeshError("the four corner vertices must be distinct")
    order = sorted(range(4), key=lambda k: pos[k])
    # corners must appear in loop order starting anywhere from corners[0]
    k0 = order.index(0)
    cyclic = [order[(k0 + i) % 4] for i in range(4)]
    if cyclic != [0, 1, 2, 3]:
        raise MeshError(
            "corner vertices are not in cyclic boundary order "
            "(reverse the list to match the loop orientation)"
        )
    arcs = []
    for k in range(4):
        i, j = pos[k], pos[(k + 1) % 4]
        if j > i:
            arcs.append(loop[i : j + 1])
        else:
            arcs.append(loop[i:] + loop[: j + 1])
    return arcs  # bottom, right, top, left (each includes both end corners)


def lbs_rectangle_map(disk, mu, corners, width=1.0, height=1.0):
    """Quasi-conformal map of the disk onto a rectangle via the linear
    Beltrami solver, composed with the disk map into a PatchChart.

    ``corners`` are four distinct boundary vertices in cyclic order; the
    arcs between consecutive corners become the bottom, right, top and
    left rectangle sides.
    """
    if width <= 0 or height <= 0:
        raise MeshError("rectangle dimensions must be positive")
    mesh = disk.source.base
    a1, a2, a3 = _alpha_coefficients(mu.mu)
    K = _anisotropic_stiffness(disk.uv, mesh.faces, a1, a2, a3)

    bottom, right, top, left = _split_boundary_arcs(disk.boundary_loop, list(corners))

    n = mesh.n_vertices
    u_idx = np.asarray(left + right, dtype=np.int64)
    u_val = np.concatenate([np.zeros(len(left)), np.full(len(right), width)])
    u = _solve_dirichlet(K, u_idx, u_val, n)

    v_idx = np.asarray(bottom + top, dtype=np.int64)
    v_val = np.concatenate([np.zeros(len(bottom)), np.full(len(top), height)])
    v = _solve_dirichlet(K, v_idx, v_val, n)

    rect_uv = np.column_stack([u, v])
    over = np.maximum(-rect_uv, rect_uv - [width, height]).max()
    if over > BOUNDARY_SNAP:
        raise BijectivityError(
            f"rectangle map leaves the rectangle by {over:.3e}"
        )
    rect_uv[:, 0] = np.clip(rect_uv[:, 0], 0.0, width)
    rect_uv[:, 1] = np.clip(rect_uv[:, 1], 0.0, height)

    areas = signed_areas(rect_uv, mesh.faces)
    flipped = int((areas <= 0).sum())
    if flipped:
        bad = np.where(areas <= 0)[0]
        raise BijectivityError(
            f"rectangle map flipped {flipped} face(s), e.g. {bad[:8].tolist()}"
        )

    flat = flatten_faces(mesh.vertices, mesh.faces)
    mu_f = piecewise_beltrami(flat, rect_uv, mesh.faces)
    mu_h = piecewise_beltrami(flat, disk.uv, mesh.faces)
    diagnostics = {
        "mean_abs_mu": float(np.abs(mu_f).mean()),
        "max_abs_mu": float(np.abs(mu_f).max()),
        "disk_mean_abs_mu": float(np.abs(mu_h).mean()),
        "disk_max_abs_mu": float(np.abs(mu_h).max()),
        "min_signed_area": float(areas.min()),
        "flipped_faces": flipped,
    }
    return PatchChart(disk.source, rect_uv, corners, width, height, diagnostics)


def build_chart(cut, corners, width=1.0, height=1.0):
    """Full chart pipeline: harmonic disk map, inverse Beltrami, LBS."""
    disk = harmonic_disk_map(cut)
    mu = beltrami_of_inverse(disk)
    return lbs_rectangle_map(disk, mu, corners, width, height)


def resolve_corners(cut, source_ids):
    """Translate four source-mesh corner ids to cut-mesh boundary vertices.

    Duplicated cut vertices are legal corner targets: a source vertex with
    several boundary copies may be listed once per copy (the four copies of
    a cut base point can span all four corners). The resolved corners are
    returned in boundary-loop order, starting deterministically at the
    smallest matching vertex index.
    """
    source_ids = [int(s) for s in source_ids]
    if len(source_ids) != 4:
        raise MeshError("exactly four corner vertices are required")
    loops = cut.base.boundary_loops()
    if len(loops) != 1:
        raise MeshError(f"expected one boundary loop, found {len(loops)}")
    loop = loops[0]
    want = {}
    for s in source_ids:
        want[s] = want.get(s, 0) + 1
    matches = [v for v in loop if int(cut.to_source[v]) in want]
    got = {}
    for v in matches:
        s = int(cut.to_source[v])
        got[s] = got.get(s, 0) + 1
    if got != want:
        raise MeshError(
            f"corner vertices {sorted(want)} do not match the cut boundary "
            f"(found multiplicities {got}, need {want})"
        )
    start = matches.index(min(matches))
    return matches[start:] + matches[:start]


def chart_to_csv(chart, path, vertex_ids=None):
    """Write per-vertex chart coordinates as ``vertex_id,u,v`` CSV."""
    ids = vertex_ids if vertex_ids is not None else np.arange(len(chart.rect_uv))
    lines = ["vertex_id,u,v"]
    for i, (uu, vv) in zip(ids, chart.rect_uv):
        lines.append(f"{int(i)},{float(uu)!r},{float(vv)!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
