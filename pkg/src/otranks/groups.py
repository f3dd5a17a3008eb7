"""Compact subgroups of O(p) through closed-form orbit operations.

Each supported group is described by a :class:`SymmetryGroup` (a kind plus the
ambient dimension and, for reflections and zonal rotations, a unit vector).
Nothing here materialises the group as a set of matrices unless asked to: the
quotient cost ``min_Q |Q^T x - h|^2``, the closest orbit point and Haar
sampling all have explicit formulas per kind.

Conventions
-----------
* The action of an element on a vector is ``Q h``.  For the permutation group
  an element is an index array ``pi`` with ``Q h = h[pi]``.
* Sign group, tie at ``x_j == 0``: the ``+`` orientation is chosen.
* Spherical (and zonal) with ``x`` on the fixed set while ``h`` is not raises
  :class:`DegenerateInputError`; these are probability-zero events.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist
from scipy.stats import ortho_group

from .errors import DegenerateInputError, InvalidInputError

KINDS = ("trivial", "central", "sign", "permutation", "reflection", "zonal", "spherical")
FINITE_KINDS = ("trivial", "central", "sign", "permutation", "reflection")

# enumeration limits for exact finite-group sums
MAX_SIGN_DIM = 12
MAX_PERMUTATION_DIM = 7


@dataclass(frozen=True)
class SymmetryGroup:
    kind: str
    dim: int
    vector: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"unknown group kind {self.kind!r}; expected one of {KINDS}")
        if self.dim < 1:
            raise InvalidInputError("group dimension must be positive")
        if self.kind == "zonal":
            if self.dim != 3:
                raise InvalidInputError("zonal symmetry is defined for p = 3 only")
            if self.vector is None:
                object.__setattr__(self, "vector", (0.0, 0.0, 1.0))
        if self.kind == "reflection" and self.vector is None:
            raise InvalidInputError("reflection group needs a normal vector u")
        if self.vector is not None:
            if self.kind not in ("reflection", "zonal"):
                raise InvalidInputError(f"group {self.kind!r} takes no vector parameter")
            u = np.asarray(self.vector, dtype=float)
            if u.shape != (self.dim,) or not np.all(np.isfinite(u)):
                raise InvalidInputError(f"group vector must have {self.dim} finite entries")
            norm = np.linalg.norm(u)
            if norm == 0:
                raise InvalidInputError("group vector must be nonzero")
            object.__setattr__(self, "vector", tuple(float(t) for t in u / norm))

    @classmethod
    def parse(cls, text: str, dim: int) -> "SymmetryGroup":
        """Parse ``trivial|central|sign|permutation|spherical|zonal[:axis]|reflection:u``.

        Vector payloads are comma-separated floats, e.g. ``reflection:1,0``.
        """
        name, _, payload = text.strip().partition(":")
        name = name.lower()
        vector = None
        if payload:
            try:
                vector = tuple(float(t) for t in payload.split(","))
            except ValueError as exc:
                raise InvalidInputError(f"cannot parse group vector in {text!r}") from exc
        return cls(name, dim, vector)

    @property
    def label(self) -> str:
        if self.kind == "reflection" or (self.kind == "zonal" and self.vector != (0.0, 0.0, 1.0)):
            return f"{self.kind}:" + ",".join(repr(t) for t in self.vector)
        return self.kind

    @property
    def u(self) -> np.ndarray:
        return np.asarray(self.vector, dtype=float)

    @property
    def is_finite(self) -> bool:
        return self.kind in FINITE_KINDS

    @property
    def order(self) -> int | None:
        return {
            "trivial": 1,
            "central": 2,
            "reflection": 2,
            "sign": 2 ** self.dim,
            "permutation": math.factorial(self.dim),
        }.get(self.kind)


@dataclass(frozen=True)
class GroupElement:
    """A member of a group, stored by its natural payload.

    central: +1/-1; sign: vector of +-1; permutation: index array; reflection:
    0 (identity) or 1 (the Householder map); zonal: rotation angle in
    [0, 2 pi); spherical: orthogonal matrix; trivial: None.
    """

    kind: str
    payload: object = field(default=None)

    def apply(self, g: SymmetryGroup, h) -> np.ndarray:
        h = np.asarray(h, dtype=float)
        k = self.kind
        if k == "trivial":
            return h.copy()
        if k == "central":
            return self.payload * h
        if k == "sign":
            return np.asarray(self.payload) * h
        if k == "permutation":
            return h[..., np.asarray(self.payload)]
        if k == "reflection":
            return _householder(g.u, h) if self.payload else h.copy()
        if k == "zonal":
            return h @ _zonal_rotation(g.u, self.payload).T
        return h @ np.asarray(self.payload).T

    def matrix(self, g: SymmetryGroup) -> np.ndarray:
        return self.apply(g, np.eye(g.dim)).T


def _check_pair(g: SymmetryGroup, x, h):
    x = np.asarray(x, dtype=float)
    h = np.asarray(h, dtype=float)
    if x.shape[-1] != g.dim or h.shape[-1] != g.dim:
        raise InvalidInputError(
            f"dimension mismatch: group acts on R^{g.dim}, got {x.shape[-1]} and {h.shape[-1]}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(h))):
        raise InvalidInputError("non-finite input vector")
    return x, h


def _householder(u, h):
    return h - 2.0 * np.multiply.outer(h @ u, u) if h.ndim > 1 else h - 2.0 * (h @ u) * u


def _zonal_frame(axis):
    """Orthonormal (e1, e2) completing ``axis`` to a right-handed frame."""
    a = np.asarray(axis, dtype=float)
    helper = np.eye(3)[np.argmin(np.abs(a))]
    e1 = helper - (helper @ a) * a
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(a, e1)
    return e1, e2


def _zonal_rotation(axis, angle):
    a = np.asarray(axis, dtype=float)
    cross = np.array([[0.0, -a[2], a[1]], [a[2], 0.0, -a[0]], [-a[1], a[0], 0.0]])
    outer = np.outer(a, a)
    return outer + math.cos(angle) * (np.eye(3) - outer) + math.sin(angle) * cross


def _cylindrical(axis, pts):
    """Axial coordinate, radial vector and radius about ``axis`` for each row."""
    z = pts @ axis
    radial = pts - np.multiply.outer(z, axis)
    return z, radial, np.linalg.norm(radial, axis=-1)


def quotient_features(g: SymmetryGroup, pts) -> np.ndarray:
    """Orbit invariants whose squared distance is the orbit cost.

    Valid for the kinds where ``c(x, h) = |f(x) - f(h)|^2``: trivial, sign,
    permutation, spherical and zonal.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    k = g.kind
    if k == "trivial":
        return pts
    if k == "sign":
        return np.abs(pts)
    if k == "permutation":
        return np.sort(pts, axis=1)
    if k == "spherical":
        return np.linalg.norm(pts, axis=1, keepdims=True)
    if k == "zonal":
        z, _, r = _cylindrical(g.u, pts)
        return np.column_stack([z, r])
    raise InvalidInputError(f"group {k!r} has no quotient feature map")


def cost_matrix(g: SymmetryGroup, X, H) -> np.ndarray:
    """All pairwise orbit costs ``C[i, j] = min_Q |Q^T X_i - H_j|^2``."""
    X, H = _check_pair(g, np.atleast_2d(X), np.atleast_2d(H))
    if g.kind in ("central", "reflection"):
        other = -H if g.kind == "central" else _householder(g.u, H)
        return np.minimum(cdist(X, H, "sqeuclidean"), cdist(X, other, "sqeuclidean"))
    fx, fh = quotient_features(g, X), quotient_features(g, H)
    return cdist(fx, fh, "sqeuclidean")


def orbit_cost(g: SymmetryGroup, x, h) -> float:
    """Quotient cost ``min_{Q in G} |Q^T x - h|^2`` in closed form."""
    x, h = _check_pair(g, x, h)
    if x.ndim != 1 or h.ndim != 1:
        raise InvalidInputError("orbit_cost takes two vectors; use cost_matrix for batches")
    return float(cost_matrix(g, x[None], h[None])[0, 0])


def argmin_sign(g: SymmetryGroup, x, h, rng: np.random.Generator | None = None) -> GroupElement:
    """An element Q attaining the orbit cost, i.e. with ``Q h`` closest to ``x``.

    When the set of minimisers is not a singleton for a continuous group, the
    element is drawn uniformly from it using ``rng``.
    """
    x, h = _check_pair(g, x, h)
    k = g.kind
    if k == "trivial":
        return GroupElement(k)
    if k == "central":
        return GroupElement(k, 1 if np.sum((x - h) ** 2) <= np.sum((x + h) ** 2) else -1)
    if k == "reflection":
        return GroupElement(k, 0 if np.sum((x - h) ** 2) <= np.sum((x - _householder(g.u, h)) ** 2) else 1)
    if k == "sign":
        sx = np.where(x >= 0, 1, -1)
        sh = np.where(h >= 0, 1, -1)
        return GroupElement(k, (sx * sh).astype(int))
    if k == "permutation":
        pi = np.empty(g.dim, dtype=int)
        pi[np.argsort(x, kind="stable")] = np.argsort(h, kind="stable")
        return GroupElement(k, pi)
    rng = np.random.default_rng() if rng is None else rng
    if k == "zonal":
        _, rx, nx = _cylindrical(g.u, x)
        _, rh, nh = _cylindrical(g.u, h)
        if nh == 0:
            return GroupElement(k, float(rng.uniform(0.0, 2 * math.pi)))
        if nx == 0:
            raise DegenerateInputError("zonal group: x lies on the axis while h does not")
        e1, e2 = _zonal_frame(g.u)
        angle = math.atan2(rx @ e2, rx @ e1) - math.atan2(rh @ e2, rh @ e1)
        return GroupElement(k, angle % (2 * math.pi))
    # spherical: Q maps h/|h| to x/|x|, uniformly over the stabiliser coset
    nx, nh = np.linalg.norm(x), np.linalg.norm(h)
    p = g.dim
    if nh == 0:
        return GroupElement(k, _haar(p, rng))
    if nx == 0:
        raise DegenerateInputError("spherical group: x = 0 while h != 0")
    bx = _basis_with_first(x / nx, rng)
    bh = _basis_with_first(h / nh, rng)
    inner = np.eye(p)
    if p > 1:
        inner[1:, 1:] = _haar(p - 1, rng)
    return GroupElement(k, bx @ inner @ bh.T)


def _haar(p: int, rng: np.random.Generator) -> np.ndarray:
    if p == 1:
        return np.array([[rng.choice([-1.0, 1.0])]])
    return ortho_group.rvs(p, random_state=rng)


def _basis_with_first(e, rng):
    """Orthonormal basis (as columns) whose first column is the unit vector ``e``."""
    p = e.size
    m = np.column_stack([e, rng.standard_normal((p, p - 1))]) if p > 1 else e[:, None]
    q, r = np.linalg.qr(m)
    q *= np.sign(np.diag(r))
    return q


def closest_orbit_point(g: SymmetryGroup, x, h) -> np.ndarray:
    """``argmin_{Q in G} |x - Q h|^2`` over the orbit of ``h``."""
    x, h = _check_pair(g, x, h)
    if x.ndim != 1 or h.ndim != 1:
        raise InvalidInputError("closest_orbit_point takes two vectors")
    return closest_orbit_points(g, x[None], h[None])[0]


def closest_orbit_points(g: SymmetryGroup, X, H) -> np.ndarray:
    """Row-wise closest orbit points: row i is the point of orbit(H_i) nearest X_i."""
    X, H = _check_pair(g, np.atleast_2d(X), np.atleast_2d(H))
    if X.shape != H.shape:
        raise InvalidInputError("closest_orbit_points needs paired rows")
    k = g.kind
    if k == "trivial":
        return H.copy()
    if k == "central":
        flip = np.sum((X - H) ** 2, axis=1) > np.sum((X + H) ** 2, axis=1)
        return np.where(flip[:, None], -H, H)
    if k == "reflection":
        PH = _householder(g.u, H)
        flip = np.sum((X - H) ** 2, axis=1) > np.sum((X - PH) ** 2, axis=1)
        return np.where(flip[:, None], PH, H)
    if k == "sign":
        return np.where(X >= 0, 1.0, -1.0) * np.abs(H)
    if k == "permutation":
        out = np.empty_like(H)
        rows = np.arange(X.shape[0])[:, None]
        out[rows, np.argsort(X, axis=1, kind="stable")] = np.sort(H, axis=1)
        return out
    if k == "spherical":
        nx = np.linalg.norm(X, axis=1)
        nh = np.linalg.norm(H, axis=1)
        bad = (nx == 0) & (nh > 0)
        if np.any(bad):
            raise DegenerateInputError(
                f"spherical group: zero observation in row(s) {np.flatnonzero(bad).tolist()}")
        scale = np.divide(nh, nx, out=np.zeros_like(nh), where=nx > 0)
        return X * scale[:, None]
    # zonal
    a = g.u
    zh, rh_vec, rh = _cylindrical(a, H)
    _, rx_vec, rx = _cylindrical(a, X)
    bad = (rx == 0) & (rh > 0)
    if np.any(bad):
        raise DegenerateInputError(
            f"zonal group: observation on the axis in row(s) {np.flatnonzero(bad).tolist()}")
    direction = np.divide(rx_vec, rx[:, None], out=np.zeros_like(rx_vec), where=rx[:, None] > 0)
    return np.multiply.outer(zh, a) + rh[:, None] * direction


def sample_orbit_uniform(g: SymmetryGroup, h, rng: np.random.Generator) -> np.ndarray:
    """``S h`` with ``S ~ Uniform(G)``; ``h`` may be a single vector or rows."""
    h = np.asarray(h, dtype=float)
    single = h.ndim == 1
    H = np.atleast_2d(h)
    if H.shape[1] != g.dim:
        raise InvalidInputError(f"expected vectors of dimension {g.dim}")
    n = H.shape[0]
    k = g.kind
    if k == "trivial":
        out = H.copy()
    elif k == "central":
        out = rng.choice([-1.0, 1.0], size=(n, 1)) * H
    elif k == "sign":
        out = rng.choice([-1.0, 1.0], size=H.shape) * H
    elif k == "permutation":
        out = rng.permuted(H, axis=1)
    elif k == "reflection":
        flip = rng.random(n) < 0.5
        out = np.where(flip[:, None], _householder(g.u, H), H)
    elif k == "spherical":
        z = rng.standard_normal(H.shape)
        nz = np.linalg.norm(z, axis=1, keepdims=True)
        out = z / nz * np.linalg.norm(H, axis=1, keepdims=True)
    else:
        a = g.u
        zh, _, rh = _cylindrical(a, H)
        e1, e2 = _zonal_frame(a)
        theta = rng.uniform(0.0, 2 * math.pi, size=n)
        # uniform azimuth: only the radius about the axis survives
        out = (np.multiply.outer(zh, a)
               + (rh * np.cos(theta))[:, None] * e1 + (rh * np.sin(theta))[:, None] * e2)
    return out[0] if single else out


def canonical_representative(g: SymmetryGroup, pts) -> np.ndarray:
    """Quotient map onto a fixed fundamental domain, applied row-wise.

    trivial: identity; central: first coordinate made nonnegative; sign:
    absolute values; permutation: ascending sort; reflection: the side with
    ``u . h >= 0``; zonal: azimuth zero; spherical: ``(|h|, 0, ..., 0)``.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    k = g.kind
    if k == "trivial":
        return pts.copy()
    if k == "central":
        return np.where(pts[:, :1] < 0, -pts, pts)
    if k == "sign":
        return np.abs(pts)
    if k == "permutation":
        return np.sort(pts, axis=1)
    if k == "reflection":
        return np.where((pts @ g.u)[:, None] < 0, _householder(g.u, pts), pts)
    if k == "spherical":
        out = np.zeros_like(pts)
        out[:, 0] = np.linalg.norm(pts, axis=1)
        return out
    z, _, r = _cylindrical(g.u, pts)
    e1, _ = _zonal_frame(g.u)
    return np.multiply.outer(z, g.u) + np.multiply.outer(r, e1)


def in_fundamental_domain(g: SymmetryGroup, pts, atol: float = 1e-12) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    return np.all(np.abs(canonical_representative(g, pts) - pts) <= atol, axis=1)


def elements(g: SymmetryGroup) -> list[GroupElement]:
    """Enumerate a finite group (sign for p <= 12, permutation for p <= 7)."""
    k, p = g.kind, g.dim
    if k == "trivial":
        return [GroupElement(k)]
    if k == "central":
        return [GroupElement(k, 1), GroupElement(k, -1)]
    if k == "reflection":
        return [GroupElement(k, 0), GroupElement(k, 1)]
    if k == "sign":
        if p > MAX_SIGN_DIM:
            raise InvalidInputError(f"sign group too large to enumerate (p = {p} > {MAX_SIGN_DIM})")
        return [GroupElement(k, np.array(s)) for s in itertools.product([1, -1], repeat=p)]
    if k == "permutation":
        if p > MAX_PERMUTATION_DIM:
            raise InvalidInputError(
                f"permutation group too large to enumerate (p = {p} > {MAX_PERMUTATION_DIM})")
        return [GroupElement(k, np.array(s)) for s in itertools.permutations(range(p))]
    raise InvalidInputError(f"group {k!r} is infinite")


def orbit_points(g: SymmetryGroup, H) -> np.ndarray:
    """Stack of all images ``Q H_j``: shape (|G|, n, p) for a finite group."""
    H = np.atleast_2d(np.asarray(H, dtype=float))
    return np.stack([e.apply(g, H) for e in elements(g)])
