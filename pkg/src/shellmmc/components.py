"""Explicit component kernel in a flat chart.

A component is a bar with quadratically varying half-thickness, described
by seven design variables: center (x0, y0), rotation theta, half-length L,
and half-thicknesses t1, t2 (ends) and t3 (middle). Its topology
description function is positive inside, zero on the boundary and negative
outside; unions are smoothed with the K-S aggregate.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ComponentGeometryError

# Offset applied to points that coincide with a component center, where the
# 6-norm gradient is singular.
CENTER_SINGULARITY_SHIFT = 1e-12

FIELD_NAMES = ("x0", "y0", "theta", "L", "t1", "t2", "t3")


@dataclass
class ComponentParams:
    """Seven design variables of one component (chart units)."""

    x0: float
    y0: float
    theta: float
    L: float
    t1: float
    t2: float
    t3: float

    def as_array(self):
        return np.array([self.x0, self.y0, self.theta, self.L, self.t1, self.t2, self.t3])

    @classmethod
    def from_array(cls, a):
        return cls(*(float(v) for v in a))

    def validate(self, L_min, t_min):
        if not self.L >= L_min > 0:
            raise ComponentGeometryError(f"half-length {self.L} below floor {L_min}")
        if not min(self.t1, self.t2, self.t3) >= t_min > 0:
            raise ComponentGeometryError(
                f"half-thickness below floor {t_min}: ({self.t1}, {self.t2}, {self.t3})"
            )


class ComponentSet:
    """Per-patch component lists with a fixed flattening order.

    The flat design vector is patch-major, component-minor, with field
    order (x0, y0, theta, L, t1, t2, t3).
    """

    def __init__(self, per_patch):
        self.per_patch = [list(comps) for comps in per_patch]

    @property
    def n_patches(self):
        return len(self.per_patch)

    @property
    def counts(self):
        return [len(c) for c in self.per_patch]

    @property
    def n_variables(self):
        return 7 * sum(self.counts)

    def flatten(self):
        if self.n_variables == 0:
            return np.zeros(0)
        return np.concatenate(
            [c.as_array() for comps in self.per_patch for c in comps]
        )

    @classmethod
    def from_flat(cls, vector, counts):
        vector = np.asarray(vector, dtype=float)
        if vector.shape != (7 * sum(counts),):
            raise ValueError(
                f"design vector length {vector.size} does not match counts {counts}"
            )
        per_patch = []
        pos = 0
        for n in counts:
            comps = []
            for _ in range(n):
                comps.append(ComponentParams.from_array(vector[pos : pos + 7]))
                pos += 7
            per_patch.append(comps)
        return cls(per_patch)

    def block_slices(self):
        """Flat-vector slice per patch."""
        out = []
        pos = 0
        for n in self.counts:
            out.append(slice(pos, pos + 7 * n))
            pos += 7 * n
        return out


def _local_frame(points, c):
    p = np.atleast_2d(np.asarray(points, dtype=float))
    dx = p[:, 0] - c.x0
    dy = p[:, 1] - c.y0
    ct, st = np.cos(c.theta), np.sin(c.theta)
    xl = ct * dx + st * dy
    yl = -st * dx + ct * dy
    return p, dx, dy, xl, yl


def _profile(xl, c):
    a = (c.t1 + c.t2 - 2.0 * c.t3) / (2.0 * c.L * c.L)
    b = (c.t2 - c.t1) / (2.0 * c.L)
    return a * xl * xl + b * xl + c.t3, a, b


def _check_profile(xl, f, c):
    bad = (f <= 0.0) & (np.abs(xl) <= c.L)
    if bad.any():
        raise ComponentGeometryError(
            f"thickness profile f(x') = {f[np.argmax(bad)]:.3e} <= 0 at "
            f"x' = {xl[np.argmax(bad)]:.6g} inside the component span"
        )


def component_tdf(points, c):
    """Topology description function of one component at chart points.

    Returns a scalar for a single (2,) point, else an (n,) array.
    phi = 1 - ((x'/L)^6 + (y'/f(x'))^6)^(1/6) in the component's local frame.
    """
    p, _, _, xl, yl = _local_frame(points, c)
    f, _, _ = _profile(xl, c)
    _check_profile(xl, f, c)
    fs = np.where(np.abs(f) < 1e-300, 1e-300, f)
    u = (xl / c.L) ** 6
    w = (yl / fs) ** 6
    phi = 1.0 - (u + w) ** (1.0 / 6.0)
    return phi if np.asarray(points).ndim == 2 else float(phi[0])


def component_tdf_grad(points, c):
    """Analytic gradient of the component TDF in the seven design variables.

    Returns (n, 7) for (n, 2) input points or (7,) for a single point;
    column order (x0, y0, theta, L, t1, t2, t3). Points that coincide with
    the component center are shifted by a tiny amount along x' (the 6-norm
    is not differentiable there).
    """
    p, _, _, xl, yl = _local_frame(points, c)
    singular = (xl == 0.0) & (yl == 0.0)
    if singular.any():
        xl = np.where(singular, CENTER_SINGULARITY_SHIFT * c.L, xl)
    f, a, b = _profile(xl, c)
    _check_profile(xl, f, c)
    fs = np.where(np.abs(f) < 1e-300, 1e-300, f)

    ct, st = np.cos(c.theta), np.sin(c.theta)
    u = (xl / c.L) ** 6
    w = (yl / fs) ** 6
    s = u + w
    pref = -(1.0 / 6.0) * s ** (1.0 / 6.0 - 1.0)

    du_dxl = 6.0 * xl**5 / c.L**6
    dw_dyl = 6.0 * yl**5 / fs**6
    dw_df = -6.0 * yl**6 / fs**7
    fprime = 2.0 * a * xl + b

    # local-frame derivatives of the design variables
    dxl = {"x0": -ct, "y0": -st}
    dyl = {"x0": st, "y0": -ct}

    g = np.empty((len(xl), 7))
    for col, name in enumerate(("x0", "y0")):
        g[:, col] = pref * (
            du_dxl * dxl[name] + dw_dyl * dyl[name] + dw_df * fprime * dxl[name]
        )
    # theta: dx'/dtheta = y', dy'/dtheta = -x'
    g[:, 2] = pref * (du_dxl * yl + dw_dyl * (-xl) + dw_df * fprime * yl)
    # L: du/dL = -6 u / L, df/dL = -(2 a x'^2 + b x') / L
    g[:, 3] = pref * (-6.0 * u / c.L + dw_df * (-(2.0 * a * xl * xl + b * xl) / c.L))
    x2 = xl * xl / (2.0 * c.L * c.L)
    x1 = xl / (2.0 * c.L)
    g[:, 4] = pref * dw_df * (x2 - x1)          # df/dt1
    g[:, 5] = pref * dw_df * (x2 + x1)          # df/dt2
    g[:, 6] = pref * dw_df * (1.0 - 2.0 * x2)   # df/dt3 = 1 - (x'/L)^2
    return g if np.asarray(points).ndim == 2 else g[0]


def ks_max(values, l):
    """Smooth K-S upper bound of max(values): ln(sum exp(l v_i)) / l.

    Computed in shifted form; satisfies max <= result <= max + ln(n)/l.
    """
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("ks_max of an empty sequence")
    if not l > 0:
        raise ValueError("K-S parameter l must be positive")
    m = v.max()
    return float(m + np.log(np.exp(l * (v - m)).sum()) / l)


def ks_max_grad(values, l):
    """Softmax weights of ks_max: w_i = exp(l v_i) / sum_j exp(l v_j)."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("ks_max of an empty sequence")
    if not l > 0:
        raise ValueError("K-S parameter l must be positive")
    e = np.exp(l * (v - v.max()))
    return e / e.sum()


def ks_max_rows(values, l, axis=-1):
    """Row-wise ks_max and softmax weights for a 2-D array."""
    v = np.asarray(values, dtype=float)
    m = v.max(axis=axis, keepdims=True)
    e = np.exp(l * (v - m))
    tot = e.sum(axis=axis, keepdims=True)
    agg = (m + np.log(tot) / l).squeeze(axis)
    return agg, e / tot
