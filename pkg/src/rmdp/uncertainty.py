"""Uncertainty sets for one state-action pair and their worst-case oracles.

Every descriptor answers ``min_{p in U} p @ v`` through ``inner_min`` and
returns the minimizing distribution alongside the value. The nominal
distribution is passed in separately because several sets are defined
relative to it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy.optimize import nnls

ZERO_TOL = 1e-14
MEMBERSHIP_TOL = 1e-9


def project_simplex(y: np.ndarray) -> np.ndarray:
    """Euclidean projection of ``y`` onto the probability simplex (sort-based)."""
    u = np.sort(y)[::-1]
    cssv = np.cumsum(u) - 1.0
    ind = np.arange(1, y.size + 1)
    cond = u - cssv / ind > 0
    rho = ind[cond][-1]
    theta = cssv[cond][-1] / rho
    return np.maximum(y - theta, 0.0)


def _simplex_ok(p: np.ndarray, tol: float) -> bool:
    return bool(np.all(p >= -tol) and abs(p.sum() - 1.0) <= tol)


def _as_mask(support, n: int) -> np.ndarray:
    if support is None:
        return np.ones(n, dtype=bool)
    return np.asarray(support, dtype=bool)


@dataclass(frozen=True)
class Singleton:
    """The nominal distribution only."""

    kind = "singleton"

    def validate(self, nominal: np.ndarray) -> None:
        pass

    def inner_min(self, nominal: np.ndarray, v: np.ndarray) -> tuple[float, np.ndarray]:
        return float(nominal @ v), np.array(nominal, dtype=float)

    def contains(self, p: np.ndarray, nominal: np.ndarray, tol: float = MEMBERSHIP_TOL) -> bool:
        return bool(np.max(np.abs(p - nominal)) <= tol)

    def to_json(self) -> dict:
        return {"kind": self.kind}


@dataclass(frozen=True, eq=False)
class Box:
    """Componentwise bounds ``low <= p <= up`` intersected with the simplex."""

    low: np.ndarray
    up: np.ndarray

    kind = "box"

    def __post_init__(self) -> None:
        low = np.array(self.low, dtype=float)
        up = np.array(self.up, dtype=float)
        if low.shape != up.shape or low.ndim != 1:
            raise ValueError("box bounds must be vectors of equal length")
        if np.any(low < 0) or np.any(up < low):
            raise ValueError("box bounds need 0 <= low <= up")
        if low.sum() > 1 + 1e-12 or up.sum() < 1 - 1e-12:
            raise ValueError("box does not intersect the simplex")
        low.setflags(write=False)
        up.setflags(write=False)
        object.__setattr__(self, "low", low)
        object.__setattr__(self, "up", up)

    @classmethod
    def from_theta(cls, nominal, theta_up: float = 0.05, theta_low: float = 0.05) -> "Box":
        """Bounds as convex combinations of the nominal with ``1`` (upper) and ``0`` (lower)."""
        nominal = np.asarray(nominal, dtype=float)
        if not (0 <= theta_up <= 1 and 0 <= theta_low <= 1):
            raise ValueError("theta_up and theta_low must lie in [0, 1]")
        return cls((1 - theta_low) * nominal, (1 - theta_up) * nominal + theta_up)

    def validate(self, nominal: np.ndarray) -> None:
        if self.low.shape != nominal.shape:
            raise ValueError("box bounds do not match the number of states")
        if np.any(nominal < self.low - 1e-12) or np.any(nominal > self.up + 1e-12):
            raise ValueError("nominal distribution lies outside the box")

    def inner_min(self, nominal: np.ndarray, v: np.ndarray) -> tuple[float, np.ndarray]:
        p = _box_argmin(self.low[None], self.up[None], np.asarray(v, dtype=float)[None])[0]
        return float(p @ v), p

    def contains(self, p: np.ndarray, nominal: np.ndarray, tol: float = MEMBERSHIP_TOL) -> bool:
        return _simplex_ok(p, tol) and bool(np.all(p >= self.low - tol) and np.all(p <= self.up + tol))

    def to_json(self) -> dict:
        return {"kind": self.kind, "low": self.low.tolist(), "up": self.up.tolist()}


@dataclass(frozen=True, eq=False)
class Ell2:
    """Euclidean ball of radius ``alpha`` around the nominal, inside the simplex.

    The closed form is valid when the ball (restricted to the support
    hyperplane) never leaves the simplex; see :func:`check_assumption1`.
    Descriptors violating that are rejected unless ``exact_fallback`` is set,
    in which case those pairs are solved exactly by simplex projection.
    """

    alpha: float
    support: np.ndarray | None = None
    exact_fallback: bool = False

    kind = "ell2"

    def __post_init__(self) -> None:
        if not self.alpha >= 0:
            raise ValueError("ell2 radius must be non-negative")
        if self.support is not None:
            mask = np.array(self.support, dtype=bool)
            mask.setflags(write=False)
            object.__setattr__(self, "support", mask)

    def free_mask(self, nominal: np.ndarray) -> np.ndarray:
        return _as_mask(self.support, nominal.size)

    def validate(self, nominal: np.ndarray) -> None:
        mask = self.free_mask(nominal)
        if mask.shape != nominal.shape:
            raise ValueError("ell2 support mask does not match the number of states")
        if np.any(nominal[~mask] > 0):
            raise ValueError("nominal puts mass outside the ell2 support")
        if not self.exact_fallback and not check_assumption1(self, nominal):
            free = nominal[mask]
            need = self.alpha * math.sqrt((free.size - 1) / free.size)
            raise ValueError(
                f"ell2 ball of radius {self.alpha} leaves the simplex: smallest free nominal "
                f"entry {free.min():.3e} < {need:.3e}; shrink alpha or set exact_fallback"
            )

    def inner_min(self, nominal: np.ndarray, v: np.ndarray) -> tuple[float, np.ndarray]:
        v = np.asarray(v, dtype=float)
        mask = self.free_mask(nominal)
        if check_assumption1(self, nominal):
            p = _ell2_closed_form(nominal[None], mask[None], np.array([self.alpha]), v[None])[0]
        else:
            p = _ell2_exact(nominal, mask, self.alpha, v)
        return float(p @ v), p

    def contains(self, p: np.ndarray, nominal: np.ndarray, tol: float = MEMBERSHIP_TOL) -> bool:
        mask = self.free_mask(nominal)
        return (
            _simplex_ok(p, tol)
            and bool(np.all(np.abs(p[~mask]) <= tol))
            and float(np.linalg.norm(p - nominal)) <= self.alpha + tol
        )

    def to_json(self) -> dict:
        doc: dict[str, Any] = {"kind": self.kind, "alpha": self.alpha}
        if self.support is not None:
            doc["support"] = self.support.tolist()
        if self.exact_fallback:
            doc["exact_fallback"] = True
        return doc


@dataclass(frozen=True, eq=False)
class Polytope:
    """Convex hull of an explicit list of distributions."""

    vertices: np.ndarray

    kind = "polytope_vertices"

    def __post_init__(self) -> None:
        verts = np.array(self.vertices, dtype=float)
        if verts.ndim != 2 or verts.shape[0] < 1:
            raise ValueError("polytope needs a (V, S) vertex array")
        if np.any(verts < 0) or np.any(np.abs(verts.sum(axis=1) - 1) > 1e-12):
            raise ValueError("polytope vertices must be distributions")
        verts.setflags(write=False)
        object.__setattr__(self, "vertices", verts)

    def validate(self, nominal: np.ndarray) -> None:
        if self.vertices.shape[1] != nominal.size:
            raise ValueError("polytope vertices do not match the number of states")
        if not self.contains(nominal, nominal):
            raise ValueError("nominal distribution is not in the vertex hull")

    def inner_min(self, nominal: np.ndarray, v: np.ndarray) -> tuple[float, np.ndarray]:
        values = self.vertices @ v
        best = int(np.argmin(values))
        return float(values[best]), self.vertices[best].copy()

    def contains(self, p: np.ndarray, nominal: np.ndarray, tol: float = MEMBERSHIP_TOL) -> bool:
        lhs = np.vstack([self.vertices.T, np.ones(self.vertices.shape[0])])
        _, resid = nnls(lhs, np.append(p, 1.0))
        return bool(resid <= tol)

    def to_json(self) -> dict:
        return {"kind": self.kind, "vertices": self.vertices.tolist()}


@dataclass(frozen=True)
class _Parametric:
    """Sets ``{(1-a) e_stay + b e_bad + (a-b) e_good : 0 <= b <= D(a), a in [0, 1]}``.

    Only the three named coordinates carry mass.
    """

    stay: int = 0
    bad: int = 1
    good: int = 2

    def boundary(self, alpha):
        raise NotImplementedError

    def point(self, alpha: float, beta: float, n: int) -> np.ndarray:
        p = np.zeros(n)
        p[self.stay] = 1.0 - alpha
        p[self.bad] += beta
        p[self.good] += alpha - beta
        return p

    def alpha_of(self, p: np.ndarray) -> float:
        return float(1.0 - p[self.stay])

    def validate(self, nominal: np.ndarray) -> None:
        if max(self.stay, self.bad, self.good) >= nominal.size:
            raise ValueError("parametric set indices exceed the number of states")
        if len({self.stay, self.bad, self.good}) != 3:
            raise ValueError("parametric set needs three distinct coordinates")
        if not self.contains(nominal, nominal):
            raise ValueError("nominal distribution is not in the parametric set")

    def contains(self, p: np.ndarray, nominal: np.ndarray, tol: float = MEMBERSHIP_TOL) -> bool:
        rest = np.ones(p.size, dtype=bool)
        rest[[self.stay, self.bad, self.good]] = False
        if not _simplex_ok(p, tol) or np.any(np.abs(p[rest]) > tol):
            return False
        alpha = self.alpha_of(p)
        beta = float(p[self.bad])
        return -tol <= alpha <= 1 + tol and beta <= float(self.boundary(min(max(alpha, 0.0), 1.0))) + tol

    def _split(self, v: np.ndarray) -> tuple[float, float, float]:
        return float(v[self.stay]), float(v[self.bad]), float(v[self.good])


@dataclass(frozen=True)
class AlphaBeta(_Parametric):
    """Parametric set with quadratic boundary ``D(a) = a (1 - a)``."""

    kind = "param_alpha_beta"

    def boundary(self, alpha):
        alpha = np.asarray(alpha, dtype=float)
        return alpha * (1.0 - alpha)

    def inner_min(self, nominal: np.ndarray, v: np.ndarray) -> tuple[float, np.ndarray]:
        v_stay, v_bad, v_good = self._split(v)
        if v_bad < v_good:
            # beta on the boundary: value is convex quadratic in alpha
            alpha = (v_stay - v_bad) / (2.0 * (v_good - v_bad))
            alpha = min(max(alpha, 0.0), 1.0)
            beta = alpha * (1.0 - alpha)
        else:
            beta = 0.0
            alpha = 1.0 if v_good < v_stay else 0.0
        p = self.point(alpha, beta, v.size)
        return float(p @ v), p

    def to_json(self) -> dict:
        return {"kind": self.kind, "stay": self.stay, "bad": self.bad, "good": self.good}


@dataclass(frozen=True)
class Piecewise(_Parametric):
    """Parametric set whose boundary interpolates ``a (1 - a)`` at chosen nodes.

    ``parity="even"`` interpolates at ``1/(2k)``; ``"odd"`` at ``1/(2k+1)``,
    for ``k = 1..k_trunc``, plus the endpoints 0 and 1.
    """

    parity: str = "even"
    k_trunc: int = 64

    kind = "param_piecewise"

    def __post_init__(self) -> None:
        if self.parity not in ("even", "odd"):
            raise ValueError("parity must be 'even' or 'odd'")
        if self.k_trunc < 1:
            raise ValueError("k_trunc must be positive")

    @property
    def nodes(self) -> np.ndarray:
        k = np.arange(self.k_trunc, 0, -1, dtype=float)
        inner = 1.0 / (2 * k) if self.parity == "even" else 1.0 / (2 * k + 1)
        return np.concatenate([[0.0], inner, [1.0]])

    def boundary(self, alpha):
        nodes = self.nodes
        return np.interp(alpha, nodes, nodes * (1.0 - nodes))

    def inner_min(self, nominal: np.ndarray, v: np.ndarray) -> tuple[float, np.ndarray]:
        v_stay, v_bad, v_good = self._split(v)
        nodes = self.nodes
        if v_bad < v_good:
            betas = nodes * (1.0 - nodes)
        else:
            betas = np.zeros_like(nodes)
        # piecewise-linear in alpha, so a node is optimal
        values = v_stay + nodes * (v_good - v_stay) + betas * (v_bad - v_good)
        i = int(np.argmin(values))
        p = self.point(float(nodes[i]), float(betas[i]), v.size)
        return float(p @ v), p

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "breakpoints": self.parity,
            "k_trunc": self.k_trunc,
            "stay": self.stay,
            "bad": self.bad,
            "good": self.good,
        }


Descriptor = Singleton | Box | Ell2 | Polytope | AlphaBeta | Piecewise


# ---------------------------------------------------------------------------
# module-level API


def inner_min(descriptor, nominal, v) -> tuple[float, np.ndarray]:
    """Worst-case expectation ``min_{p in U} p @ v`` and a minimizer."""
    nominal = np.asarray(nominal, dtype=float)
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("v must be finite")
    return descriptor.inner_min(nominal, v)


def check_assumption1(descriptor: Ell2, nominal) -> bool:
    """True when the radius-``alpha`` ball in the support hyperplane stays in the simplex."""
    nominal = np.asarray(nominal, dtype=float)
    mask = descriptor.free_mask(nominal)
    n_free = int(mask.sum())
    if descriptor.alpha == 0 or n_free <= 1:
        return True
    reach = descriptor.alpha * math.sqrt((n_free - 1) / n_free)
    return bool(np.all(nominal[mask] >= reach))


def apply_support_mask(descriptor, nominal):
    """Restrict ``descriptor`` to the support of ``nominal``.

    Pairs with a single successor collapse to :class:`Singleton`.
    """
    nominal = np.asarray(nominal, dtype=float)
    support = nominal > ZERO_TOL
    if isinstance(descriptor, (AlphaBeta, Piecewise)):
        return descriptor
    if support.sum() == 1:
        return Singleton()
    if isinstance(descriptor, Box):
        return Box(np.where(support, descriptor.low, 0.0), np.where(support, descriptor.up, 0.0))
    if isinstance(descriptor, Ell2):
        return Ell2(descriptor.alpha, support, descriptor.exact_fallback)
    if isinstance(descriptor, Polytope):
        keep = np.all(descriptor.vertices[:, ~support] <= ZERO_TOL, axis=1)
        if not keep.any():
            raise ValueError("no polytope vertex lies in the nominal support")
        return Polytope(descriptor.vertices[keep])
    return descriptor


def descriptor_from_json(doc: dict, nominal) -> Any:
    """Build a descriptor for one pair from its JSON form."""
    nominal = np.asarray(nominal, dtype=float)
    kind = doc.get("kind")
    if kind == "singleton":
        return Singleton()
    if kind == "box":
        if "low" in doc:
            return Box(doc["low"], doc["up"])
        return Box.from_theta(nominal, float(doc.get("theta_up", 0.05)), float(doc.get("theta_low", 0.05)))
    if kind == "ell2":
        return Ell2(float(doc["alpha"]), doc.get("support"), bool(doc.get("exact_fallback", False)))
    if kind == "polytope_vertices":
        return Polytope(doc["vertices"])
    if kind == "param_alpha_beta":
        return AlphaBeta(doc.get("stay", 0), doc.get("bad", 1), doc.get("good", 2))
    if kind == "param_piecewise":
        return Piecewise(
            doc.get("stay", 0),
            doc.get("bad", 1),
            doc.get("good", 2),
            doc.get("breakpoints", "even"),
            int(doc.get("k_trunc", 64)),
        )
    raise ValueError(f"unknown uncertainty kind {kind!r}")


def uniform_descriptors(kind: str, radius: float, kernel: np.ndarray, exact_fallback: bool = False):
    """Same-shaped descriptor on every pair, masked to each nominal support."""
    kernel = np.asarray(kernel, dtype=float)
    S, A, _ = kernel.shape
    if kind == "singleton":
        doc: dict[str, Any] = {"kind": "singleton"}
    elif kind == "box":
        doc = {"kind": "box", "theta_up": radius, "theta_low": radius}
    elif kind == "ell2":
        doc = {"kind": "ell2", "alpha": radius, "exact_fallback": exact_fallback}
    else:
        raise ValueError(f"uniform descriptors support singleton, box and ell2, not {kind!r}")
    return tuple(
        tuple(apply_support_mask(descriptor_from_json(doc, kernel[s, a]), kernel[s, a]) for a in range(A))
        for s in range(S)
    )


def helmert_basis(n: int) -> np.ndarray:
    """Orthonormal basis of ``{z : sum(z) = 0}`` as the columns of an ``(n, n-1)`` array."""
    basis = np.zeros((n, n - 1))
    for j in range(1, n):
        basis[:j, j - 1] = 1.0
        basis[j, j - 1] = -j
        basis[:, j - 1] /= math.sqrt(j * (j + 1))
    return basis


# ---------------------------------------------------------------------------
# vectorized kernels shared by single-pair and batched paths


def _box_argmin(low: np.ndarray, up: np.ndarray, v: np.ndarray) -> np.ndarray:
    # start at the lower bounds, then fill the cheapest coordinates first
    order = np.argsort(v, axis=1, kind="stable")
    lo = np.take_along_axis(low, order, axis=1)
    span = np.take_along_axis(up - low, order, axis=1)
    budget = 1.0 - low.sum(axis=1)
    used_before = np.cumsum(span, axis=1) - span
    extra = np.clip(budget[:, None] - used_before, 0.0, span)
    p = np.empty_like(low)
    np.put_along_axis(p, order, lo + extra, axis=1)
    return p


def _ell2_closed_form(nominal: np.ndarray, mask: np.ndarray, alpha: np.ndarray, v: np.ndarray) -> np.ndarray:
    n_free = mask.sum(axis=1)
    mean = np.where(mask, v, 0.0).sum(axis=1) / n_free
    proj = np.where(mask, v - mean[:, None], 0.0)
    # second centring removes rounding of order |v| eps; the step can amplify it
    proj = np.where(mask, proj - (proj.sum(axis=1) / n_free)[:, None], 0.0)
    norm = np.linalg.norm(proj, axis=1)
    # below rounding level the direction is noise: keep the nominal
    scale = np.max(np.abs(np.where(mask, v, 0.0)), axis=1)
    degenerate = norm <= 8 * np.finfo(float).eps * np.maximum(scale, 1e-300) * np.sqrt(n_free)
    step = np.where(degenerate, 0.0, alpha / np.where(degenerate, 1.0, norm))
    return nominal - step[:, None] * proj


def _project_rows(y: np.ndarray) -> np.ndarray:
    """Row-wise :func:`project_simplex`."""
    n, S = y.shape
    u = -np.sort(-y, axis=1)
    cssv = np.cumsum(u, axis=1) - 1.0
    ind = np.arange(1, S + 1)
    rho = np.count_nonzero(u - cssv / ind > 0, axis=1)
    theta = cssv[np.arange(n), rho - 1] / rho
    return np.maximum(y - theta[:, None], 0.0)


def _ell2_exact(nominal: np.ndarray, mask: np.ndarray, alpha, v: np.ndarray) -> np.ndarray:
    """Exact minimizer over ball-intersect-simplex, row-wise, via the projection path.

    For ``lam >= 0`` the point ``proj(p0 - lam c)`` minimizes
    ``lam c @ p + |p - p0|^2 / 2`` on the simplex, so matching its distance to
    the radius gives the constrained minimizer. Bisection on ``lam`` runs until
    both ends of the bracket share a support; the path is affine there, so
    the crossing is the root of a quadratic.
    Accepts a single pair (1-D inputs) or a batch of rows.
    """
    single = nominal.ndim == 1
    nominal, mask, v = np.atleast_2d(nominal), np.atleast_2d(mask), np.atleast_2d(v)
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), (nominal.shape[0],))
    n_free = mask.sum(axis=1)
    c = np.where(mask, v - (np.where(mask, v, 0.0).sum(axis=1) / n_free)[:, None], 0.0)
    c = np.where(mask, c - (c.sum(axis=1) / n_free)[:, None], 0.0)
    cnorm = np.linalg.norm(c, axis=1)
    scale = np.max(np.abs(np.where(mask, v, 0.0)), axis=1)
    active = (alpha > 0) & (n_free > 1) & (cnorm > 8 * np.finfo(float).eps * np.maximum(scale, 1e-300))

    def path(lam):
        y = nominal - lam[:, None] * c
        top = np.where(mask, y, -np.inf).max(axis=1)
        # anything at least 1 below the top coordinate projects to zero
        return _project_rows(np.where(mask, y, top[:, None] - 2.0))

    def dist(lam):
        return np.linalg.norm(path(lam) - nominal, axis=1)

    # past cap the path sits on the minimizing face and stops moving
    cmin = np.where(mask, c, np.inf).min(axis=1)
    above = np.where(mask & (c > cmin[:, None] + 1e-12 * cnorm[:, None]), c - cmin[:, None], np.inf)
    cap = 4.0 / np.where(np.isfinite(above.min(axis=1)), above.min(axis=1), 1.0)
    # the projection is non-expansive, so this step stays inside the ball
    lo = np.where(active, alpha / np.where(active, cnorm, 1.0), 0.0)
    hi = 2.0 * lo
    for _ in range(64):
        grow = active & (dist(hi) < alpha) & (hi < cap)
        if not grow.any():
            break
        lo = np.where(grow, hi, lo)
        hi = np.where(grow, 2.0 * hi, hi)
    # rows that never reach the radius end on the minimizing face of the simplex
    p_lo, p_hi = path(lo), path(hi)
    reached = active & (np.linalg.norm(p_hi - nominal, axis=1) >= alpha)
    p = p_hi.copy()
    todo = reached.copy()
    for _ in range(60):
        # the path is affine between points sharing a support: finish with the quadratic root
        same = todo & np.all((p_lo > 0) == (p_hi > 0), axis=1)
        if same.any():
            e = p_lo[same] - nominal[same]
            d = p_hi[same] - p_lo[same]
            dd = np.einsum("ij,ij->i", d, d)
            ed = np.einsum("ij,ij->i", e, d)
            ee = np.einsum("ij,ij->i", e, e)
            disc = np.maximum(ed**2 - dd * (ee - alpha[same] ** 2), 0.0)
            t = np.clip((np.sqrt(disc) - ed) / np.where(dd > 0, dd, 1.0), 0.0, 1.0)
            p[same] = p_lo[same] + t[:, None] * d
            todo &= ~same
        if not todo.any():
            break
        mid = 0.5 * (lo + hi)
        p_mid = path(mid)
        inside = np.linalg.norm(p_mid - nominal, axis=1) <= alpha
        step_lo = (todo & inside)[:, None]
        step_hi = (todo & ~inside)[:, None]
        lo = np.where(step_lo[:, 0], mid, lo)
        hi = np.where(step_hi[:, 0], mid, hi)
        p_lo = np.where(step_lo, p_mid, p_lo)
        p_hi = np.where(step_hi, p_mid, p_hi)
    if todo.any():
        p[todo] = p_lo[todo]
    p[~active] = nominal[~active]
    return p[0] if single else p


class BatchOracle:
    """Worst-case expectations for all ``(s, a)`` pairs of an instance at once.

    Box and ell2 pairs are vectorized; every other pair goes through its
    descriptor's own ``inner_min``.
    """

    def __init__(self, descriptors, kernel: np.ndarray):
        S, A, _ = kernel.shape
        self.shape = (S, A)
        flat = [descriptors[s][a] for s in range(S) for a in range(A)]
        nominal = kernel.reshape(S * A, S)
        self._nominal = nominal
        groups: dict[str, list[int]] = {"dot": [], "box": [], "ell2": [], "ell2_exact": [], "other": []}
        for i, d in enumerate(flat):
            if isinstance(d, Singleton):
                groups["dot"].append(i)
            elif isinstance(d, Box):
                groups["box"].append(i)
            elif isinstance(d, Ell2):
                groups["ell2" if check_assumption1(d, nominal[i]) else "ell2_exact"].append(i)
            else:
                groups["other"].append(i)
        self._groups = {k: np.asarray(v, dtype=np.int64) for k, v in groups.items()}
        self._descs = flat
        box = self._groups["box"]
        self._box_low = np.array([flat[i].low for i in box]).reshape(len(box), S)
        self._box_up = np.array([flat[i].up for i in box]).reshape(len(box), S)
        ell = self._groups["ell2"]
        self._ell_mask = np.array([flat[i].free_mask(nominal[i]) for i in ell]).reshape(len(ell), S)
        self._ell_alpha = np.array([flat[i].alpha for i in ell], dtype=float)
        ex = self._groups["ell2_exact"]
        self._ex_mask = np.array([flat[i].free_mask(nominal[i]) for i in ex]).reshape(len(ex), S)
        self._ex_alpha = np.array([flat[i].alpha for i in ex], dtype=float)
        self.is_singleton = len(groups["dot"]) == S * A

    def solve(self, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """For ``w`` of shape ``(S, A, S)`` return values ``(S, A)`` and argmins ``(S, A, S)``."""
        S, A = self.shape
        wf = np.asarray(w, dtype=float).reshape(S * A, S)
        p = np.empty_like(wf)
        g = self._groups
        if g["dot"].size:
            p[g["dot"]] = self._nominal[g["dot"]]
        if g["box"].size:
            p[g["box"]] = _box_argmin(self._box_low, self._box_up, wf[g["box"]])
        if g["ell2"].size:
            i = g["ell2"]
            p[i] = _ell2_closed_form(self._nominal[i], self._ell_mask, self._ell_alpha, wf[i])
        if g["ell2_exact"].size:
            i = g["ell2_exact"]
            p[i] = _ell2_exact(self._nominal[i], self._ex_mask, self._ex_alpha, wf[i])
        for i in g["other"]:
            p[i] = self._descs[i].inner_min(self._nominal[i], wf[i])[1]
        values = np.einsum("ij,ij->i", p, wf)
        return values.reshape(S, A), p.reshape(S, A, S)
