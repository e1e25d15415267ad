"""Rate-region evaluation and search.

For a source ``P_{X,Y,Z}`` and auxiliary channels ``P_{V|X}``, ``P_{U|V}``
the achievable tuples (identification rate, compression rate, leakage,
key rate) are bounded by four functionals of the composed joint:

* ``I(Y;U)`` caps the identification rate,
* ``I(X;V|Y)`` is the compression overhead above the identification rate,
* ``I(X;V,Y) - I(X;Y|U) + I(X;Z|U)`` is the least leakage,
* ``I(V;Y|U) - I(V;Z|U)`` caps the key rate (and the false-acceptance
  exponent), clamped at zero.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.special import entr

from . import probability as pr
from .probability import Channel, JointPmf, Pmf

NONDOMINANCE_TOL = 1e-9


class RegionError(ValueError):
    pass


class CardinalityCapExceeded(RegionError):
    pass


# ------------------------------------------------------------------ types

@dataclass(frozen=True)
class SourceModel:
    """``P_X`` plus the broadcast channel ``P_{Y,Z|X}``.

    The channel output index is ``y * z_size + z``.
    """

    px: Pmf
    pyz_given_x: Channel
    y_size: int
    z_size: int

    def __post_init__(self):
        if self.pyz_given_x.input_size != self.px.support_size:
            raise RegionError("P(Y,Z|X) input size differs from |X|")
        if self.pyz_given_x.output_size != self.y_size * self.z_size:
            raise RegionError(
                f"P(Y,Z|X) has {self.pyz_given_x.output_size} outputs, "
                f"expected |Y||Z| = {self.y_size * self.z_size}")

    @property
    def x_size(self) -> int:
        return self.px.support_size

    def joint(self) -> JointPmf:
        m = self.px.mass[:, None] * self.pyz_given_x.rows
        return JointPmf(("X", "Y", "Z"),
                        m.reshape(self.x_size, self.y_size, self.z_size))

    def y_channel(self) -> Channel:
        r = self.pyz_given_x.rows.reshape(self.x_size, self.y_size, self.z_size)
        return Channel(r.sum(axis=2))

    def z_channel(self) -> Channel:
        r = self.pyz_given_x.rows.reshape(self.x_size, self.y_size, self.z_size)
        return Channel(r.sum(axis=1))

    @property
    def z_degenerate(self) -> bool:
        pz = self.joint().mass.sum(axis=(0, 1))
        return bool(np.count_nonzero(pz > pr.TOL) <= 1)

    def to_dict(self) -> dict:
        return {"px": self.px.mass.tolist(),
                "pyz_given_x": self.pyz_given_x.rows.tolist(),
                "y_size": self.y_size, "z_size": self.z_size}

    @classmethod
    def from_dict(cls, d: dict) -> "SourceModel":
        return cls(Pmf(np.asarray(d["px"], float)),
                   Channel(np.asarray(d["pyz_given_x"], float)),
                   int(d["y_size"]), int(d["z_size"]))


def erasure_cascade(p: float, q: float) -> SourceModel:
    """Uniform bit X; Y erases X w.p. ``p``; Z erases Y w.p. ``q``.

    Symbol 2 is the erasure in both Y and Z.
    """
    for name, v in (("p", p), ("q", q)):
        if not 0.0 <= v <= 1.0:
            raise RegionError(f"{name}={v!r} outside [0, 1]")
    y_x = pr.erasure(p).rows
    z_y = np.array([[1 - q, 0, q], [0, 1 - q, q], [0, 0, 1.0]])
    pyz = np.einsum("xy,yz->xyz", y_x, z_y).reshape(2, 9)
    return SourceModel(Pmf(np.array([0.5, 0.5])), Channel(pyz), 3, 3)


def degraded_source(px, py_x, pz_y) -> SourceModel:
    """Source with X - Y - Z from explicit P_X, P_{Y|X}, P_{Z|Y} tables."""
    py_x = np.asarray(py_x, float)
    pz_y = np.asarray(pz_y, float)
    pyz = np.einsum("xy,yz->xyz", py_x, pz_y)
    return SourceModel(pr.as_pmf(px), Channel(pyz.reshape(py_x.shape[0], -1)),
                       py_x.shape[1], pz_y.shape[1])


@dataclass(frozen=True)
class AuxChannels:
    pvx: Channel
    puv: Channel

    @property
    def v_size(self) -> int:
        return self.pvx.output_size

    @property
    def u_size(self) -> int:
        return self.puv.output_size

    def to_dict(self) -> dict:
        return {"pvx": self.pvx.rows.tolist(), "puv": self.puv.rows.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "AuxChannels":
        return cls(Channel(np.asarray(d["pvx"], float)),
                   Channel(np.asarray(d["puv"], float)))

    def digest(self) -> str:
        h = hashlib.sha1()
        h.update(np.ascontiguousarray(self.pvx.rows).tobytes())
        h.update(np.ascontiguousarray(self.puv.rows).tobytes())
        return h.hexdigest()[:12]


def bsc_aux(alpha: float, u: str = "constant") -> AuxChannels:
    """V = BSC(alpha)(X); U constant (``"constant"``) or U = V (``"same"``)."""
    if u == "constant":
        return AuxChannels(pr.bsc(alpha), pr.constant_channel(2))
    if u == "same":
        return AuxChannels(pr.bsc(alpha), pr.identity_channel(2))
    raise RegionError(f"unknown U shorthand {u!r}")


class RateTuple(NamedTuple):
    r_i: float
    r_c: float
    l: float
    r_s_or_e: float


@dataclass(frozen=True)
class RegionCorner:
    aux: AuxChannels = field(repr=False)
    i_yu: float
    i_xv_given_y: float
    l_min: float
    key_max: float
    key_raw: float

    @property
    def r_c_min(self) -> float:
        """Least compression rate at the largest identification rate."""
        return self.i_yu + self.i_xv_given_y

    def as_vector(self) -> np.ndarray:
        return np.array([self.i_yu, self.r_c_min, self.l_min, self.key_max])


def cardinality_caps(x_size: int, slack: int = 4) -> tuple:
    """(|U| cap, |V| cap); ``slack`` is 4 in general and 3 for one user."""
    return x_size + slack, (x_size + slack) * (x_size + 2)


def _check_aux(src: SourceModel, aux: AuxChannels, u_cap, v_cap):
    if aux.pvx.input_size != src.x_size:
        raise RegionError(
            f"P(V|X) has {aux.pvx.input_size} inputs, |X| = {src.x_size}")
    if aux.puv.input_size != aux.v_size:
        raise RegionError("P(U|V) input size differs from |V|")
    du, dv = cardinality_caps(src.x_size)
    u_cap = du if u_cap is None else min(u_cap, du)
    v_cap = dv if v_cap is None else min(v_cap, dv)
    if aux.u_size > u_cap or aux.v_size > v_cap:
        raise CardinalityCapExceeded(
            f"|U|={aux.u_size}, |V|={aux.v_size} exceed caps ({u_cap}, {v_cap})")


# ------------------------------------------------------------- evaluation

def evaluate_corner(src: SourceModel, aux: AuxChannels,
                    u_cap: Optional[int] = None,
                    v_cap: Optional[int] = None) -> RegionCorner:
    """The four region functionals on the composed (U, V, X, Y, Z) joint."""
    _check_aux(src, aux, u_cap, v_cap)
    j = pr.compose_chain(src.joint(), aux.pvx, aux.puv)
    cmi = pr.conditional_mutual_information
    i_yu = pr.mutual_information(j, ["Y"], ["U"])
    i_xv_y = cmi(j, ["X"], ["V"], ["Y"])
    l_min = (pr.mutual_information(j, ["X"], ["V", "Y"])
             - cmi(j, ["X"], ["Y"], ["U"]) + cmi(j, ["X"], ["Z"], ["U"]))
    key = cmi(j, ["V"], ["Y"], ["U"]) - cmi(j, ["V"], ["Z"], ["U"])
    return RegionCorner(aux, max(i_yu, 0.0), max(i_xv_y, 0.0), l_min,
                        max(key, 0.0), key)


def evaluate_exponent_corner(src: SourceModel, aux: AuxChannels,
                             u_cap: Optional[int] = None,
                             v_cap: Optional[int] = None) -> RegionCorner:
    """Corner of the identification/compression/leakage/false-acceptance
    exponent region.  Its exponent bound coincides with the key bound, so
    the same evaluator serves both regions."""
    return evaluate_corner(src, aux, u_cap, v_cap)


def is_achievable(src: SourceModel, aux: AuxChannels, t: RateTuple,
                  slack: float = 0.0) -> bool:
    t = RateTuple(*t)
    if min(t) < 0:
        return False
    c = evaluate_corner(src, aux)
    return (t.r_i <= c.i_yu + slack
            and t.r_c >= t.r_i + c.i_xv_given_y - slack
            and t.l >= c.l_min - slack
            and t.r_s_or_e <= c.key_max + slack)


class SpecialCaseBounds(NamedTuple):
    """Bounds of a reduced region.  ``None`` marks a coordinate the case drops."""

    r_i_max: Optional[float]
    r_c_excess: Optional[float]
    l_min: float
    r_s_max: Optional[float]


def special_case_region(src: SourceModel, case: str,
                        aux: AuxChannels) -> SpecialCaseBounds:
    """Reduced regions: ``single_user``, ``no_key`` and ``no_compression_no_z``.

    ``no_key`` requires ``P(U|V)`` to be the identity (U = V);
    ``no_compression_no_z`` requires a degenerate Z.
    """
    if case == "single_user":
        u_cap, v_cap = cardinality_caps(src.x_size, slack=3)
        c = evaluate_corner(src, aux, u_cap, v_cap)
        return SpecialCaseBounds(None, c.i_xv_given_y, c.l_min, c.key_max)
    if case == "no_key":
        r = aux.puv.rows
        if r.shape[0] != r.shape[1] or not np.array_equal(r, np.eye(r.shape[0])):
            raise RegionError("no_key needs U = V (identity P(U|V))")
        _check_aux(src, aux, None, None)
        j = pr.compose_chain(src.joint(), aux.pvx, aux.puv)
        return SpecialCaseBounds(
            pr.mutual_information(j, ["Y"], ["U"]),
            pr.conditional_mutual_information(j, ["X"], ["U"], ["Y"]),
            pr.mutual_information(j, ["X"], ["U", "Z"]),
            None)
    if case == "no_compression_no_z":
        if not src.z_degenerate:
            raise RegionError("no_compression_no_z needs a degenerate Z")
        _check_aux(src, aux, None, None)
        j = pr.compose_chain(src.joint(), aux.pvx, aux.puv)
        i_yu = pr.mutual_information(j, ["Y"], ["U"])
        return SpecialCaseBounds(
            i_yu, None,
            pr.conditional_mutual_information(j, ["X"], ["V"], ["Y"]) + i_yu,
            max(pr.mutual_information(j, ["Y"], ["V"]) - i_yu, 0.0))
    raise RegionError(f"unknown special case {case!r}")


def restricted_identification_gap(corners: Sequence[RegionCorner],
                                  r_i: float, leakage: float,
                                  tol: float = 1e-3) -> dict:
    """Best key rate at (r_i, leakage) with and without pinning R_I = I(Y;U).

    Works on corners of a source with degenerate Z.  The unrestricted value
    uses every corner with ``I(Y;U) >= r_i``; the restricted one only those
    with ``r_i <= I(Y;U) <= r_i + tol``, a subset, so the gap is never
    negative.  ``nan`` means no corner qualifies.
    """
    full = [c.key_max for c in corners
            if c.i_yu >= r_i - NONDOMINANCE_TOL and c.l_min <= leakage]
    pinned = [c.key_max for c in corners
              if r_i - NONDOMINANCE_TOL <= c.i_yu <= r_i + tol
              and c.l_min <= leakage]
    best_full = max(full) if full else float("nan")
    best_pinned = max(pinned) if pinned else float("nan")
    return {"r_i": r_i, "leakage": leakage, "key_full": best_full,
            "key_pinned": best_pinned, "gap": best_full - best_pinned}


class CaseIBounds(NamedTuple):
    r_c_min: float
    l_min: float
    r_s_max: float


class CaseIIBounds(NamedTuple):
    r_i_max: float
    r_c_excess: float
    l_min: float


def binary_erasure_closed_form(p: float, q: float, alpha: float, case: str):
    """Closed-form bounds for the erasure cascade with V = BSC(alpha)(X).

    Case ``"i"`` (one user, U constant) returns ``CaseIBounds``; case
    ``"ii"`` (no key, U = V) returns ``CaseIIBounds``.
    """
    for name, v in (("p", p), ("q", q)):
        if not 0.0 <= v <= 1.0:
            raise RegionError(f"{name}={v!r} outside [0, 1]")
    if not 0.0 <= alpha <= 0.5:
        raise RegionError(f"alpha={alpha!r} outside [0, 1/2]")
    h = pr.binary_entropy(alpha)
    if case == "i":
        return CaseIBounds(p * (1 - h), (1 - q) * (1 - p) + p * (1 - h),
                           q * (1 - p) * (1 - h))
    if case == "ii":
        return CaseIIBounds((1 - p) * (1 - h), p * (1 - h),
                            1 - h * ((1 - p) * q + p))
    raise RegionError(f"unknown case {case!r}")


def markov_violation(j: JointPmf) -> float:
    """max(I(U;X,Y,Z|V), I(Y,Z;U,V|X)) on a joint with axes U, V, X, Y, Z."""
    cmi = pr.conditional_mutual_information
    return max(cmi(j, ["U"], ["X", "Y", "Z"], ["V"]),
               cmi(j, ["Y", "Z"], ["U", "V"], ["X"]))


def markov_structure_check(src: SourceModel, aux: AuxChannels) -> float:
    return markov_violation(pr.compose_chain(src.joint(), aux.pvx, aux.puv))


# -------------------------------------------------------- batched search

def _hb(m: np.ndarray) -> np.ndarray:
    """Batched entropy in bits; axis 0 indexes the batch."""
    return entr(m.reshape(m.shape[0], -1)).sum(axis=1) / math.log(2)


def _cond_entropy(p_x: np.ndarray, ch: np.ndarray) -> float:
    return float(sum(px * pr.entropy(row) for px, row in zip(p_x, ch) if px > 0))


def batch_functionals(src: SourceModel, pvx: np.ndarray,
                      puv: np.ndarray) -> np.ndarray:
    """Vectorised region functionals for a batch of channel pairs.

    ``pvx`` is (B, |X|, |V|) and ``puv`` (B, |V|, |U|).  Returns (B, 4) with
    columns I(Y;U), I(X;V|Y), least leakage, and the signed key difference.

    Uses U - V - X - (Y, Z) to avoid the full five-variable table:
    H(X,V,Y) = H(X,V) + H(Y|X), and likewise with U or Z in place of V or Y.
    """
    px = src.px.mass
    py_x = src.y_channel().rows
    pz_x = src.z_channel().rows
    h_y_x = _cond_entropy(px, py_x)
    h_z_x = _cond_entropy(px, pz_x)
    h_x = pr.entropy(px)
    h_y = pr.entropy(px @ py_x)

    uvx = np.einsum("x,bxv,bvu->buvx", px, pvx, puv)
    uvy = uvx @ py_x
    uvz = uvx @ pz_x
    xv = uvx.sum(axis=1)
    xu = uvx.sum(axis=2)
    uy = uvy.sum(axis=2)
    uz = uvz.sum(axis=2)
    vy = uvy.sum(axis=1)
    h_u = _hb(uy.sum(axis=2))
    h_uy, h_uz = _hb(uy), _hb(uz)
    h_uvy, h_uvz = _hb(uvy), _hb(uvz)
    h_xv, h_xu, h_vy = _hb(xv), _hb(xu), _hb(vy)

    i_yu = h_y + h_u - h_uy
    i_xv_y = h_vy - h_xv + h_x - h_y
    i_x_vy = h_x + h_vy - h_xv - h_y_x
    i_xy_u = h_uy - h_u - h_y_x
    i_xz_u = h_uz - h_u - h_z_x
    key = h_uy - h_uvy - h_uz + h_uvz
    return np.stack([i_yu, i_xv_y, i_x_vy - i_xy_u + i_xz_u, key], axis=1)


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def scalarize(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Weighted score of corners under weights on (r_i, -r_c, -l, r_s).

    ``values`` columns are those of :func:`batch_functionals`.  The
    identification rate is set to I(Y;U) or 0, whichever scores higher, and
    the compression rate to its least value at that identification rate.
    """
    w = np.asarray(weights, float)
    values = np.atleast_2d(values)
    i_yu = np.maximum(values[:, 0], 0.0)
    r_i = np.where(w[0] - w[1] > 0, i_yu, 0.0)
    return (w[0] * r_i - w[1] * (r_i + np.maximum(values[:, 1], 0.0))
            - w[2] * values[:, 2] + w[3] * np.maximum(values[:, 3], 0.0))


def _nondominated(points: np.ndarray, tol: float = NONDOMINANCE_TOL) -> np.ndarray:
    """Indices of nondominated rows; every column is to be maximised."""
    order = np.lexsort(points.T[::-1])[::-1]
    keep: list = []
    for i in order:
        p = points[i]
        if keep:
            k = points[keep]
            if np.any(np.all(k >= p - tol, axis=1)):
                continue
        keep.append(i)
    return np.array(sorted(keep), dtype=int)


@dataclass
class _Chunk:
    start: int
    stop: int


def _restart_logits(seed: int, index: int, nx: int, nv: int, nu: int):
    rng = np.random.default_rng([seed, index])
    scale = 10 ** rng.uniform(-1.0, 1.5)
    return (rng.normal(scale=scale, size=(nx, nv)),
            rng.normal(scale=scale, size=(nv, nu)))


def optimize_frontier(src: SourceModel, weights: Sequence[float], budget: int,
                      seed: int = 0, *, u_size: Optional[int] = None,
                      v_size: Optional[int] = None, refine: int = 4,
                      steps: int = 150, threads: int = 1,
                      chunk: int = 1024) -> list:
    """Multi-start search for corners maximising a weighted objective.

    Parameters
    ----------
    src : SourceModel
    weights : sequence of 4 floats
        Weights on (r_i, -r_c, -l, r_s_or_e).
    budget : int
        Number of random restarts.  Each restart draws softmax-parameterised
        channel rows from its own generator seeded by ``(seed, index)``.
    u_size, v_size : int, optional
        Alphabet sizes searched; default to the cardinality caps.
    refine : int
        Number of best restarts polished by coordinate search.
    steps : int
        Coordinate-search iterations per polished start.  The step halves
        whenever no single-coordinate move improves the score.
    threads : int
        Workers for restart evaluation (0 = one per CPU).  Results do not
        depend on this.

    Returns
    -------
    list of (AuxChannels, RegionCorner)
        Nondominated corners, best objective first; each re-evaluated by
        :func:`evaluate_corner`.
    """
    w = np.asarray(weights, dtype=float)
    if w.shape != (4,) or not np.all(np.isfinite(w)):
        raise RegionError("weights must be 4 finite numbers")
    if not np.any(w != 0):
        raise RegionError("weights are all zero")
    if budget < 1:
        raise RegionError("budget must be >= 1")
    du, dv = cardinality_caps(src.x_size)
    nu = du if u_size is None else int(u_size)
    nv = dv if v_size is None else int(v_size)
    if not (1 <= nu <= du and 1 <= nv <= dv):
        raise CardinalityCapExceeded(f"|U|={nu}, |V|={nv} outside caps ({du}, {dv})")
    nx = src.x_size

    def run_chunk(c: _Chunk):
        lv, lu = zip(*(_restart_logits(seed, i, nx, nv, nu)
                       for i in range(c.start, c.stop)))
        lv, lu = np.stack(lv), np.stack(lu)
        vals = batch_functionals(src, _softmax(lv), _softmax(lu))
        return lv, lu, vals

    chunks = [_Chunk(s, min(s + chunk, budget)) for s in range(0, budget, chunk)]
    if threads == 1 or len(chunks) == 1:
        results = [run_chunk(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=threads or None) as ex:
            results = list(ex.map(run_chunk, chunks))
    lv = np.concatenate([r[0] for r in results])
    lu = np.concatenate([r[1] for r in results])
    vals = np.concatenate([r[2] for r in results])
    score = scalarize(vals, w)

    top = np.argsort(-score, kind="stable")[:max(refine, 0)]
    polished_v, polished_u, polished_vals = [], [], []
    for i in top:
        a, b, v = _coordinate_refine(src, w, lv[i], lu[i], steps)
        polished_v.append(a)
        polished_u.append(b)
        polished_vals.append(v)
    if polished_v:
        lv = np.concatenate([lv, np.stack(polished_v)])
        lu = np.concatenate([lu, np.stack(polished_u)])
        vals = np.concatenate([vals, np.stack(polished_vals)])
        score = scalarize(vals, w)

    # maximise i_yu, -r_c_min, -l_min, key
    pts = np.stack([np.maximum(vals[:, 0], 0),
                    -(np.maximum(vals[:, 0], 0) + np.maximum(vals[:, 1], 0)),
                    -vals[:, 2], np.maximum(vals[:, 3], 0)], axis=1)
    best = np.argsort(-score, kind="stable")
    shortlist = best[:256]
    nd = shortlist[_nondominated(pts[shortlist])]
    nd = nd[np.argsort(-score[nd], kind="stable")]
    out = []
    for i in nd:
        aux = AuxChannels(Channel(_softmax(lv[i])), Channel(_softmax(lu[i])))
        out.append((aux, evaluate_corner(src, aux)))
    return out


def _coordinate_refine(src, w, lv, lu, steps, step0=1.0, min_step=1e-7):
    lv = lv.copy()
    lu = lu.copy()
    nv_params = lv.size
    theta = np.concatenate([lv.ravel(), lu.ravel()])
    n = theta.size

    def evaluate(thetas):
        a = thetas[:, :nv_params].reshape(-1, *lv.shape)
        b = thetas[:, nv_params:].reshape(-1, *lu.shape)
        v = batch_functionals(src, _softmax(a), _softmax(b))
        return v, scalarize(v, w)

    cur_vals, cur = evaluate(theta[None])
    cur = cur[0]
    step = step0
    eye = np.eye(n)
    for _ in range(steps):
        cand = np.concatenate([theta + step * eye, theta - step * eye])
        vals, sc = evaluate(cand)
        k = int(np.argmax(sc))
        if sc[k] > cur + 1e-15:
            theta, cur, cur_vals = cand[k], sc[k], vals[k:k + 1]
            step *= 1.5
        else:
            step *= 0.5
            if step < min_step:
                break
    a = theta[:nv_params].reshape(lv.shape)
    b = theta[nv_params:].reshape(lu.shape)
    return a, b, cur_vals[0]


def time_sharing_hull(corners: Sequence[RegionCorner]) -> list:
    """Indices of corners on the convex hull of their 4-d rate vectors.

    Time sharing between corners fills in the hull, so only its vertices
    matter.  Fewer than 6 distinct points are all returned.
    """
    from scipy.spatial import ConvexHull, QhullError

    pts = np.array([c.as_vector() for c in corners])
    if len(pts) < 6:
        return list(range(len(pts)))
    try:
        hull = ConvexHull(pts, qhull_options="QJ")
    except QhullError:
        return list(range(len(pts)))
    return sorted(int(i) for i in hull.vertices)


def time_share(a: RegionCorner, b: RegionCorner, lam: float) -> np.ndarray:
    return lam * a.as_vector() + (1 - lam) * b.as_vector()


# -------------------------------------------------------------------- I/O

CSV_HEADER = ["id", "r_i", "r_c_min", "l_min", "key_max"]


def _fmt(x: float) -> str:
    # float residue below 1e-12 prints as 0 so equal inputs give equal files
    return f"{0.0 if abs(x) < 1e-12 else x:.12g}"


def frontier_csv(rows: Sequence[tuple]) -> str:
    """CSV text, one row per ``(id, RegionCorner)``; channel entries follow.

    Channel columns are named ``pvx_i_j`` and ``puv_i_j``; rows with smaller
    channels leave the extra cells empty.
    """
    extra: list = []
    for _, c in rows:
        for name, m in (("pvx", c.aux.pvx.rows), ("puv", c.aux.puv.rows)):
            for i in range(m.shape[0]):
                for j in range(m.shape[1]):
                    col = f"{name}_{i}_{j}"
                    if col not in extra:
                        extra.append(col)
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(CSV_HEADER + extra)
    for ident, c in rows:
        cells = {}
        for name, m in (("pvx", c.aux.pvx.rows), ("puv", c.aux.puv.rows)):
            for (i, j), v in np.ndenumerate(m):
                cells[f"{name}_{i}_{j}"] = _fmt(float(v))
        wr.writerow([ident, _fmt(c.i_yu), _fmt(c.r_c_min), _fmt(c.l_min),
                     _fmt(c.key_max)] + [cells.get(col, "") for col in extra])
    return buf.getvalue()


def aux_dumps(aux: AuxChannels) -> str:
    return json.dumps(aux.to_dict())


def aux_loads(text: str) -> AuxChannels:
    return AuxChannels.from_dict(json.loads(text))


def closed_form_best(p: float, q: float, weights: Sequence[float],
                     grid: int = 2001) -> float:
    """Best weighted (-r_c, -l, r_s) score over the one-user erasure region.

    Only valid with zero identification weight.  The score is linear in
    ``1 - h(alpha)`` so the endpoints decide, but the grid is kept for
    clarity.
    """
    w = np.asarray(weights, float)
    if w[0] != 0:
        raise RegionError("closed form covers the zero identification slice only")
    best = -math.inf
    for a in np.linspace(0.0, 0.5, grid):
        b = binary_erasure_closed_form(p, q, float(a), "i")
        best = max(best, -w[1] * b.r_c_min - w[2] * b.l_min + w[3] * b.r_s_max)
    return best
