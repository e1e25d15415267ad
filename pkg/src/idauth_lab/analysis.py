"""Exact small-n analysis of a fixed layered codebook, plus Monte Carlo.

The exact model is kept in factored form.  Users are i.i.d. and share the
codebook, so everything follows from a handful of tables:

* ``pxds[x, d, s]``: probability that a source ``x`` is enrolled with
  description ``d`` and key ``s`` (tie-breaks marginalized uniformly);
* ``pass_[y, d]`` and ``keyd[y, d, s]``: whether description ``d`` passes the
  decoder's typicality test on ``y``, and the decoder's key distribution;
* the memoryless ``P(y|x)`` and ``P(z|x)`` matrices.

A description ``d`` encodes the stored pair as ``m1 * |M2| + m2``.  Users are
0-based.  ``materialize`` expands the factored tables into an explicit
joint over the reachable support for cross-checks on tiny instances.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.stats import norm

from . import probability as pr
from .codec import Database, Identified, LayeredCodebook, decode_from_typical
from .probability import CellCapExceeded, SparseJoint

DEFAULT_EXACT_CAP = 2**27


class ExactCapExceeded(CellCapExceeded):
    """The instance is too large for exhaustive enumeration; use monte_carlo."""


def _h(p: np.ndarray) -> float:
    p = np.asarray(p, float).ravel()
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())


def _onehot(index: np.ndarray, size: int) -> sparse.csr_matrix:
    rows = np.arange(index.size)
    return sparse.csr_matrix((np.ones(index.size), (rows, index)),
                             shape=(index.size, size))


# ------------------------------------------------------------ exact model

@dataclass
class ExactModel:
    """Factored exact joint distribution of one enrolled population.

    Attributes
    ----------
    px : ndarray (NX,)
        ``P_X^n`` over source sequences (lexicographic index).
    kernel : ndarray (NX, n_pairs)
        Enrollment distribution over codeword pairs given ``x``.
    covered : ndarray (NX,) of bool
        Whether enrollment found a typical pair (otherwise the fallback
        pair is uniform).
    pxds : ndarray (NX, D, S)
        Joint of source, description and key for one user.
    pxj : ndarray (NX, n_j)
        Joint of source and first-layer index.
    pass_, keyd : ndarray
        Decoder tables, see module docstring.  Description axes run over
        the occupied descriptions only; ``desc_labels`` maps them back to
        ``m1 * |M2| + m2``.
    py_x, pz_x : ndarray
        n-fold measurement channels.
    """

    cb: LayeredCodebook
    k_users: int
    px: np.ndarray
    kernel: np.ndarray
    covered: np.ndarray
    pxds: np.ndarray
    pxj: np.ndarray
    pass_: np.ndarray
    keyd: np.ndarray
    py_x: np.ndarray
    pz_x: np.ndarray
    desc_labels: np.ndarray

    @property
    def n(self) -> int:
        return self.cb.n

    @property
    def n_desc(self) -> int:
        return self.pxds.shape[1]

    @property
    def n_keys(self) -> int:
        return self.pxds.shape[2]

    @property
    def q(self) -> np.ndarray:
        """Marginal of one user's description."""
        return self.pxds.sum(axis=(0, 2))

    @property
    def p_ds(self) -> np.ndarray:
        return self.pxds.sum(axis=0)

    def a_dsz(self) -> np.ndarray:
        """``P(d, s, z)`` for the measured user, shape (D, S, NZ)."""
        flat = self.pxds.reshape(self.px.size, -1)
        return (flat.T @ self.pz_x).reshape(self.n_desc, self.n_keys, -1)

    def total_mass(self) -> float:
        return float(self.pxds.sum())


def build_exact_model(cb: LayeredCodebook, k_users: Optional[int] = None,
                      cell_cap: int = DEFAULT_EXACT_CAP) -> ExactModel:
    """Enumerate every source and measurement sequence against ``cb``.

    The database policy is enroll-all: a user whose source is not covered is
    stored with a uniformly random codeword pair.

    Raises
    ------
    ExactCapExceeded
        When any dense table would exceed ``cell_cap`` entries.
    """
    spec = cb.spec
    k = spec.k_users if k_users is None else int(k_users)
    src, n = spec.src, cb.n
    nx, ny, nz = src.x_size**n, src.y_size**n, src.z_size**n
    # only descriptions that some codeword pair maps to can occur
    labels, pair_desc = np.unique(cb.pair_description, return_inverse=True)
    d_size, s_size = labels.size, cb.n_s
    for what, cells in (("enrollment", nx * cb.n_pairs),
                        ("decoder", ny * cb.n_pairs),
                        ("key table", ny * d_size * s_size),
                        ("source table", nx * d_size * s_size),
                        ("channel", nx * max(ny, nz))):
        if cells > cell_cap:
            raise ExactCapExceeded(
                f"{what} needs {cells} cells (cap {cell_cap}); use monte_carlo")

    xs = pr.all_sequences(src.x_size, n)
    px = pr.product_pmf(src.px, n)
    tx = cb.typical_pairs(xs, "x").astype(float)
    counts = tx.sum(axis=1)
    covered = counts > 0
    kernel = np.where(covered[:, None], tx / np.where(covered, counts, 1)[:, None],
                      1.0 / cb.n_pairs)

    cell = pair_desc.ravel() * s_size + cb.pair_key
    to_ds = _onehot(cell, d_size * s_size)
    pxds = np.asarray((to_ds.T @ (kernel * px[:, None]).T).T)
    pxds = pxds.reshape(nx, d_size, s_size)
    pxj = np.asarray((_onehot(cb.pair_j, cb.n_j).T @ (kernel * px[:, None]).T).T)

    ys = pr.all_sequences(src.y_size, n)
    ty = cb.typical_pairs(ys, "y").astype(float)
    hits = np.asarray((to_ds.T @ ty.T).T).reshape(ny, d_size, s_size) > 0
    n_hit = hits.sum(axis=2)
    pass_ = n_hit > 0
    keyd = hits / np.where(pass_, n_hit, 1)[:, :, None]

    py_x = pr.product_channel(src.y_channel(), n, cell_cap)
    pz_x = pr.product_channel(src.z_channel(), n, cell_cap)
    return ExactModel(cb, k, px, kernel, covered, pxds, pxj, pass_, keyd,
                      py_x, pz_x, labels)


# ---------------------------------------------------------------- metrics

@dataclass(frozen=True)
class ErrorReport:
    per_user: tuple
    max_error: float
    p_wrong_user: float
    p_wrong_key: float


def exact_error_probability(m: ExactModel) -> ErrorReport:
    """Exact ``P((W_hat, S_hat) != (W, S(W)) | W = w)`` for every user.

    Given ``W = w`` the other users' descriptions are i.i.d. with marginal
    ``q`` and independent of the measurement, so each of them passes the
    test on ``y`` independently with probability ``sum_d q[d] pass[y, d]``.
    The codebook and decoder treat users symmetrically, so the conditional
    error is the same for every ``w``.
    """
    other_pass = m.pass_ @ m.q
    alone = (1.0 - other_pass) ** (m.k_users - 1)
    p_xd = m.pxds.sum(axis=2)
    ident = m.py_x @ (m.pass_ * alone[:, None])          # (NX, D)
    p_ident = float((p_xd * ident).sum())
    both = m.py_x @ (m.keyd * (m.pass_ * alone[:, None])[:, :, None]).reshape(
        m.py_x.shape[1], -1)
    p_ok = float((m.pxds.reshape(m.px.size, -1) * both).sum())
    err = min(1.0, max(0.0, 1.0 - p_ok))
    return ErrorReport(tuple([err] * m.k_users), err,
                       max(0.0, 1.0 - p_ident), max(0.0, p_ident - p_ok))


def exact_leakage(m: ExactModel) -> tuple:
    """Per-user ``I(X^n(w); M_bar, Z^n) / n`` and its maximum.

    Other users' descriptions are independent of ``(X^n(w), M(w), Z^n)`` given
    ``W = w``, so they drop out of the mutual information.
    """
    p_xd = m.pxds.sum(axis=2)
    p_dz = p_xd.T @ m.pz_x
    h_z_given_x = sum(float(m.px[i]) * _h(m.pz_x[i]) for i in range(m.px.size))
    info = _h(m.px) + _h(p_dz) - _h(p_xd) - h_z_given_x
    rate = max(0.0, info) / m.n
    return tuple([rate] * m.k_users), rate


def exact_key_metrics(m: ExactModel) -> tuple:
    """``(min_w H(S(w))/n, max_w I(S(w); M_bar, Z^n)/n)``."""
    ps = m.pxds.sum(axis=(0, 1))
    a = m.a_dsz()
    h_s = _h(ps)
    info = h_s + _h(a.sum(axis=1)) - _h(a)
    return h_s / m.n, max(0.0, info) / m.n


def lemma1_check(m: ExactModel) -> float:
    """``n (H(Z|U) + delta) - H(Z^n | J(w))``; may be negative at tiny n."""
    pjz = m.pxj.T @ m.pz_x
    h_z_given_j = _h(pjz) - _h(pjz.sum(axis=1))
    spec = m.cb.spec
    return m.n * (spec.info["H(Z|U)"] + spec.typ.delta_eps) - h_z_given_j


# ------------------------------------------------------------ Markov suite

def _yz_support(m: ExactModel, x_index: int):
    """Sparse ``P(y, z | x)`` for one source sequence."""
    src, n = m.cb.spec.src, m.n
    rows = src.pyz_given_x.rows
    x = pr.sequence_symbols(x_index, src.x_size, n)
    ys = np.zeros(1, np.int64)
    zs = np.zeros(1, np.int64)
    ps = np.ones(1)
    for letter in x:
        out = np.flatnonzero(rows[letter] > 0)
        y_l, z_l = np.divmod(out, src.z_size)
        ys = (ys[:, None] * src.y_size + y_l).ravel()
        zs = (zs[:, None] * src.z_size + z_l).ravel()
        ps = (ps[:, None] * rows[letter, out]).ravel()
    return ys, zs, ps


def materialize(m: ExactModel, w: int = 0, corrupt: bool = False,
                decoder: bool = False, row_cap: int = 20_000_000) -> SparseJoint:
    """Explicit joint given ``W = w`` over the reachable support.

    Axes: ``X`` (user ``w``'s source), ``M`` (its description), ``S`` (its
    key), ``O`` (the other users' descriptions, mixed radix in user order),
    ``Y`` and ``Z``; with ``decoder=True`` also ``What`` (``K`` encodes a
    failure) and ``Shat``.

    ``corrupt=True`` builds a deliberately broken model for negative tests:
    the first other user's description is replaced by a function of the
    first source letter of user ``w``.
    """
    k = m.k_users
    if k < 2:
        raise ValueError("the Markov suite needs at least two users")
    q = m.q
    d_size, s_size = m.n_desc, m.n_keys
    dsup = np.flatnonzero(q > 0)
    grids = np.meshgrid(*([dsup] * (k - 1)), indexing="ij")
    o_parts = [g.ravel() for g in grids]
    o_codes = np.zeros(o_parts[0].size, np.int64)
    o_mass = np.ones(o_parts[0].size)
    for part in o_parts:
        o_codes = o_codes * d_size + part
        o_mass = o_mass * q[part]
    n_o = d_size ** (k - 1)

    blocks, masses = [], []
    total = 0
    for xi in np.flatnonzero(m.px > 0):
        d_idx, s_idx = np.nonzero(m.pxds[xi])
        p_a = m.pxds[xi, d_idx, s_idx]
        ys, zs, p_yz = _yz_support(m, int(xi))
        if corrupt:
            first = pr.sequence_symbols(xi, m.cb.spec.src.x_size, m.n)[0]
            o_here = np.array([int(dsup[int(first) % dsup.size])], np.int64)
            parts_here = [o_here] + [np.zeros(1, np.int64)] * (k - 2)
            p_o = np.ones(1)
        else:
            o_here, parts_here, p_o = o_codes, o_parts, o_mass
        na, no, nyz = d_idx.size, o_here.size, ys.size
        total += na * no * nyz
        if total > row_cap:
            raise ExactCapExceeded(f"materialized support exceeds {row_cap} rows")
        ia, io_, iyz = (g.ravel() for g in np.meshgrid(
            np.arange(na), np.arange(no), np.arange(nyz), indexing="ij"))
        cols = [np.full(ia.size, xi), d_idx[ia], s_idx[ia], o_here[io_],
                ys[iyz], zs[iyz]]
        mass = p_a[ia] * p_o[io_] * p_yz[iyz]
        if decoder:
            descs = [d_idx[ia]] + [p[io_] for p in parts_here]
            cols, mass = _attach_decoder(m, w, cols, mass, descs, ys[iyz])
        blocks.append(np.column_stack(cols))
        masses.append(mass)
    names = ["X", "M", "S", "O", "Y", "Z"]
    sizes = [m.px.size, d_size, s_size, n_o, m.py_x.shape[1], m.pz_x.shape[1]]
    if decoder:
        names += ["What", "Shat"]
        sizes += [k + 1, s_size]
    return SparseJoint(names, sizes, np.concatenate(blocks),
                       np.concatenate(masses))


def _attach_decoder(m, w, cols, mass, descs, y):
    """Expand rows by the decoder's output distribution."""
    k = m.k_users
    # user order: the measured user w, then the others in increasing index
    order = [w] + [u for u in range(k) if u != w]
    by_user = [None] * k
    for slot, u in enumerate(order):
        by_user[u] = descs[slot]
    passed = np.stack([m.pass_[y, d] for d in by_user], axis=1)
    unique = passed.sum(axis=1) == 1
    winner = np.where(unique, passed.argmax(axis=1), k)
    out_cols, out_mass = [], []
    for s in range(m.n_keys):
        d_win = np.where(unique, np.stack(by_user, 1)[np.arange(y.size),
                                                      np.minimum(winner, k - 1)], 0)
        p = np.where(unique, m.keyd[y, d_win, s], 1.0 if s == 0 else 0.0)
        keep = p > 0
        out_cols.append([c[keep] for c in cols] + [winner[keep],
                                                   np.full(keep.sum(), s)])
        out_mass.append(mass[keep] * p[keep])
    merged = [np.concatenate([oc[i] for oc in out_cols])
              for i in range(len(out_cols[0]))]
    return merged, np.concatenate(out_mass)


def joint_error(j: SparseJoint, w: int) -> float:
    """Error probability read off a materialized joint with decoder axes."""
    ok = (j.support[:, j.axis("What")] == w) & \
         (j.support[:, j.axis("Shat")] == j.support[:, j.axis("S")])
    return 1.0 - float(j.mass[ok].sum())


@dataclass(frozen=True)
class MarkovReport:
    chain_i: float
    chain_ii: float
    chain_iii: float
    chain_iv: float

    def max(self) -> float:
        return max(self.chain_i, self.chain_ii, self.chain_iii, self.chain_iv)


def markov_chain_suite(m: ExactModel, corrupt: bool = False) -> MarkovReport:
    """The four conditional mutual informations, maximized over users.

    (I) ``I(Y; O | M)``, (II) ``I(M, O, S; Y, Z | X)``,
    (III) ``I(X, Z; O | Y)``, (IV) ``I(X, Y, Z, S; O | M)``, with ``O`` the
    other users' descriptions, all given ``W = w``.
    """
    cmi = pr.conditional_mutual_information
    worst = np.zeros(4)
    for w in range(m.k_users):
        j = materialize(m, w, corrupt=corrupt)
        vals = [cmi(j, ["Y"], ["O"], ["M"]),
                cmi(j, ["M", "O", "S"], ["Y", "Z"], ["X"]),
                cmi(j, ["X", "Z"], ["O"], ["Y"]),
                cmi(j, ["X", "Y", "Z", "S"], ["O"], ["M"])]
        worst = np.maximum(worst, np.maximum(vals, 0.0))
    return MarkovReport(*map(float, worst))


# ------------------------------------------------------------------ attack

@dataclass
class AttackResult:
    mfap: float
    exponent: float
    map_bound: float
    guess_probability: float
    h_min: float
    n_keys: int
    best_response: Optional[list] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("best_response")
        return d


def _description_tuples(m: ExactModel):
    dsup = np.flatnonzero(m.q > 0)
    grids = np.meshgrid(*([dsup] * m.k_users), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def _active(m: ExactModel):
    """Measurements that pass for some description; the rest never accept.

    An always-rejected row is appended when no measurement passes, so the
    adversary's maximum is well defined.
    """
    active = np.flatnonzero(m.pass_.any(axis=1))
    pass_a, keyd_a = m.pass_[active], m.keyd[active]
    if active.size == 0:
        active = np.zeros(1, np.int64)
        pass_a = np.zeros((1,) + m.pass_.shape[1:], bool)
        keyd_a = np.zeros((1,) + m.keyd.shape[1:])
    return active, pass_a, keyd_a


def _attack_tables(m: ExactModel, dbar: np.ndarray, a: np.ndarray,
                   pz_d: np.ndarray, act):
    """Acceptance table ``G`` and joint ``Q`` for one database ``dbar``.

    ``G[y, w*S + s]`` is the probability that ``y`` is accepted as user ``w``
    with key ``s``; ``Q[w*S + s, z] = P(m_bar, z, S(w) = s)`` with ``W``
    uniform.
    """
    k, s_size = m.k_users, m.n_keys
    _, pass_a, keyd_a = act
    passed = pass_a[:, dbar]                        # (NY', K)
    unique = passed & (passed.sum(axis=1, keepdims=True) == 1)
    g = (unique[:, :, None] * keyd_a[:, dbar, :]).reshape(passed.shape[0], -1)
    c = m.q[dbar]
    b = m.p_ds[dbar]                                # (K, S)
    q_tab = np.zeros((k, s_size, pz_d.shape[1]))
    for wp in range(k):
        for wt in range(k):
            rest = np.prod([c[o] for o in range(k) if o not in (wp, wt)])
            if wt == wp:
                q_tab[wp] += a[dbar[wp]] * rest
            else:
                q_tab[wp] += b[wp][:, None] * pz_d[dbar[wt]][None, :] * rest
    return g, q_tab.reshape(k * s_size, -1) / k


def _joint_keys_given(m, dbar, a, pz_d):
    """``P(m_bar, z, s_bar)`` as (S**K, NZ), W uniform."""
    k, s_size = m.k_users, m.n_keys
    b = m.p_ds[dbar]
    out = 0.0
    for wt in range(k):
        t = np.ones((1, pz_d.shape[1]))
        for o in range(k):
            f = a[dbar[o]] if o == wt else b[o][:, None] * np.ones((1, pz_d.shape[1]))
            t = (t[:, None, :] * f[None, :, :]).reshape(-1, pz_d.shape[1])
        out = out + t
    return out / k


def exact_mfap(m: ExactModel, threads: int = 1,
               dump_best_response: bool = False) -> AttackResult:
    """Exact maximum false-acceptance probability of an optimal adversary.

    For every database ``m_bar`` and side information ``z`` the adversary
    picks the ``y`` maximizing ``P(accept | m_bar, z)``; the sum over
    ``(m_bar, z)`` of the joint-weighted best values is the mFAP.
    """
    a = m.a_dsz()
    pz_d = a.sum(axis=1)
    tuples = _description_tuples(m)
    act = _active(m)

    def one(dbar):
        g, qt = _attack_tables(m, dbar, a, pz_d, act)
        rows, inv = np.unique(g, axis=0, return_inverse=True)
        val = rows @ qt
        best = val.max(axis=0)
        mf = float(best.sum())
        # MAP strategy of the converse
        mp = _map_value(m, dbar, g, qt, a, pz_d)
        guess = float(_joint_keys_given(m, dbar, a, pz_d).max(axis=0).sum())
        resp = None
        if dump_best_response:
            arg = val.argmax(axis=0)
            y_of_row = np.array([np.flatnonzero(inv.ravel() == r)[0]
                                 for r in range(rows.shape[0])])
            resp = [(tuple(int(m.desc_labels[v]) for v in dbar), z, int(act[0][y_of_row[arg[z]]]),
                     float(best[z])) for z in range(best.size)]
        return mf, mp, guess, resp

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(one, tuples))
    else:
        parts = [one(t) for t in tuples]
    # fixed summation order keeps the result independent of threading
    mfap = math.fsum(p[0] for p in parts)
    map_bound = math.fsum(p[1] for p in parts)
    guess = math.fsum(p[2] for p in parts)
    best = None
    if dump_best_response:
        best = [row for p in parts for row in p[3]]
    mfap = min(1.0, mfap)
    return AttackResult(mfap, -math.log2(mfap) / m.n if mfap > 0 else math.inf,
                        map_bound, guess, -math.log2(guess), m.n_keys, best)


def _map_value(m, dbar, g, qt, a, pz_d) -> float:
    """Success of the converse strategy for one database."""
    k, s_size = m.k_users, m.n_keys
    g3 = g.reshape(g.shape[0], k, s_size)
    reach = g3.max(axis=0) > 0                       # (K, S)
    c = m.q[dbar]
    post = np.stack([pz_d[dbar[w]] * np.prod([c[o] for o in range(k) if o != w])
                     for w in range(k)])             # (K, NZ)
    post = np.where(reach.any(axis=1)[:, None], post, -1.0)
    w_star = post.argmax(axis=0)
    if not reach.any():
        return 0.0
    a_w = a[dbar]                                    # (K, S, NZ)
    score = np.where(reach[:, :, None], a_w, -1.0)
    s_star = score[w_star, :, np.arange(w_star.size)].argmax(axis=1)
    y_star = g3.argmax(axis=0)                       # (K, S)
    ys = y_star[w_star, s_star]
    z = np.arange(w_star.size)
    return float((g[ys, :] * qt[:, z].T).sum())


def map_attack(m: ExactModel) -> float:
    """Success probability of the converse's MAP strategy.

    Pick the most probable user among those with a reachable key, then the
    most probable reachable key for that user, and realize it with the
    ``y`` that the decoder accepts most often.
    """
    a = m.a_dsz()
    pz_d = a.sum(axis=1)
    total = []
    act = _active(m)
    for dbar in _description_tuples(m):
        g, qt = _attack_tables(m, dbar, a, pz_d, act)
        total.append(_map_value(m, dbar, g, qt, a, pz_d))
    return math.fsum(total)


def best_response_csv(result: AttackResult) -> str:
    if result.best_response is None:
        raise ValueError("run exact_mfap with dump_best_response=True")
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["descriptions", "z", "y", "accept_prob"])
    for dbar, z, y, v in result.best_response:
        wr.writerow([" ".join(map(str, dbar)), z, y, repr(v)])
    return buf.getvalue()


# ----------------------------------------------------------------- reports

@dataclass
class MetricsReport:
    per_user_error: list
    max_error: float
    max_leakage_rate: float
    max_key_leakage_rate: float
    min_key_entropy_rate: float
    compression_rate: float
    identification_rate: float
    lemma1_margin: float
    mfap: Optional[float] = None
    mfap_exponent: Optional[float] = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)


def metrics_report(m: ExactModel, attack: bool = True,
                   threads: int = 1) -> MetricsReport:
    err = exact_error_probability(m)
    _, leak = exact_leakage(m)
    h_s, key_leak = exact_key_metrics(m)
    res = exact_mfap(m, threads=threads) if attack else None
    return MetricsReport(
        list(err.per_user), err.max_error, leak, key_leak, h_s,
        math.log2(m.cb.n_descriptions) / m.n, math.log2(m.k_users) / m.n,
        lemma1_check(m),
        None if res is None else res.mfap,
        None if res is None else res.exponent)


# ------------------------------------------------------------- Monte Carlo

@dataclass(frozen=True)
class MonteCarloReport:
    trials: int
    errors: int
    error_rate: float
    ci95_halfwidth: float
    covering_failures: int
    covering_failure_rate: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)


def wilson_halfwidth(successes: int, trials: int, level: float = 0.95) -> float:
    z = float(norm.ppf(0.5 + level / 2))
    p = successes / trials
    return z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials**2)) \
        / (1 + z * z / trials)


def _sample_letters(rng, rows, given):
    cdf = np.cumsum(rows, axis=1)
    u = rng.random(given.shape)
    return (u[..., None] >= cdf[given]).sum(axis=-1).clip(max=rows.shape[1] - 1)


def monte_carlo(cb: LayeredCodebook, trials: int, seed: int,
                k_users: Optional[int] = None, threads: int = 1) -> MonteCarloReport:
    """Empirical error and covering-failure rates with fresh users per trial.

    Trial ``t`` draws from ``default_rng([seed, t])``, so counts do not depend
    on ``threads``.  Covering failures are counted per enrolled user.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    spec = cb.spec
    k = spec.k_users if k_users is None else int(k_users)
    src, n = spec.src, cb.n

    def trial(t):
        rng = np.random.default_rng([seed, t])
        xs = _sample_letters(rng, src.px.mass[None, :],
                             np.zeros((k, n), np.int64))
        typical = cb.typical_pairs(xs, "x")
        descs, keys, fails = [], [], 0
        for row in typical:
            pairs = np.flatnonzero(row)
            if pairs.size == 0:
                fails += 1
                pair = int(rng.integers(cb.n_pairs))
            else:
                pair = int(pairs[rng.integers(pairs.size)])
            descs.append((int(cb.u_bin_of[cb.pair_j[pair]]),
                          int(cb.v_bin_of[cb.pair_k[pair]])))
            keys.append(int(cb.pair_key[pair]))
        w = int(rng.integers(k))
        out = _sample_letters(rng, src.pyz_given_x.rows, xs[w])
        y = out // src.z_size
        res = decode_from_typical(cb, Database(tuple(descs)),
                                  cb.typical_pairs(y[None], "y")[0], rng)
        ok = isinstance(res, Identified) and res.w_hat == w and res.s_hat == keys[w]
        return (0 if ok else 1), fails

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            results = list(ex.map(trial, range(trials)))
    else:
        results = [trial(t) for t in range(trials)]
    errors = sum(r[0] for r in results)
    fails = sum(r[1] for r in results)
    return MonteCarloReport(trials, errors, errors / trials,
                            wilson_halfwidth(errors, trials), fails,
                            fails / (trials * k))
