"""Exact finite discrete probability.

Dense joint tables with named axes, channels, and information measures in
bits.  Everything here is immutable once built; every function is pure.

A sparse variant (:class:`SparseJoint`) stores only the reachable support as
an integer matrix plus a mass vector.  It is what the exact code analysis
produces, and all information measures accept either kind of joint.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

TOL = 1e-12
DEFAULT_CELL_CAP = 2**26


class ProbabilityError(ValueError):
    """Invalid probability object or incompatible operands."""


class CellCapExceeded(ProbabilityError):
    """A table would exceed the configured cell cap."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.flags.writeable = False
    return a


def _check_mass(mass: np.ndarray, what: str, tol: float = TOL) -> None:
    if mass.size == 0:
        raise ProbabilityError(f"{what}: empty support")
    if not np.all(np.isfinite(mass)):
        raise ProbabilityError(f"{what}: non-finite mass")
    if np.any(mass < 0):
        raise ProbabilityError(f"{what}: negative mass {mass.min()!r}")
    total = float(mass.sum())
    if abs(total - 1.0) > tol:
        raise ProbabilityError(f"{what}: total mass {total!r} is not 1")


def _h(mass: np.ndarray) -> float:
    p = np.asarray(mass, dtype=float).ravel()
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())


@dataclass(frozen=True)
class Pmf:
    """Probability mass function on ``{0, ..., support_size - 1}``."""

    mass: np.ndarray

    def __post_init__(self):
        m = _readonly(np.ravel(self.mass))
        _check_mass(m, "Pmf")
        object.__setattr__(self, "mass", m)

    @property
    def support_size(self) -> int:
        return int(self.mass.size)

    def to_dict(self) -> dict:
        return {"type": "pmf", "mass": self.mass.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Pmf":
        return cls(np.asarray(d["mass"], dtype=float))


@dataclass(frozen=True)
class Channel:
    """Row-stochastic transition matrix, ``rows[input, output]``."""

    rows: np.ndarray

    def __post_init__(self):
        r = _readonly(self.rows)
        if r.ndim != 2:
            raise ProbabilityError("Channel rows must form a 2-d table")
        for i, row in enumerate(r):
            _check_mass(row, f"Channel row {i}")
        object.__setattr__(self, "rows", r)

    @property
    def input_size(self) -> int:
        return int(self.rows.shape[0])

    @property
    def output_size(self) -> int:
        return int(self.rows.shape[1])

    def to_dict(self) -> dict:
        return {"type": "channel", "rows": self.rows.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Channel":
        return cls(np.asarray(d["rows"], dtype=float))


@dataclass(frozen=True)
class JointPmf:
    """Dense joint table; axis ``i`` is named ``names[i]``."""

    names: tuple
    mass: np.ndarray

    def __post_init__(self):
        names = tuple(self.names)
        m = _readonly(self.mass)
        if len(set(names)) != len(names):
            raise ProbabilityError(f"duplicate axis names in {names}")
        if m.ndim != len(names):
            raise ProbabilityError(
                f"{len(names)} axis names for a {m.ndim}-d table")
        _check_mass(m, "JointPmf")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "mass", m)

    @property
    def sizes(self) -> tuple:
        return tuple(int(s) for s in self.mass.shape)

    @property
    def axes(self) -> list:
        return list(zip(self.names, self.sizes))

    def axis(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ProbabilityError(f"unknown axis {name!r}") from None

    def group_entropy(self, group: Sequence[str]) -> float:
        if not group:
            return 0.0
        return _h(marginalize(self, list(group)).mass)

    def to_dict(self) -> dict:
        return {
            "type": "joint",
            "axes": [[n, s] for n, s in self.axes],
            "mass": self.mass.ravel(order="C").tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "JointPmf":
        names = [a[0] for a in d["axes"]]
        shape = [int(a[1]) for a in d["axes"]]
        return cls(tuple(names), np.asarray(d["mass"], float).reshape(shape))


class SparseJoint:
    """Joint distribution stored as its support.

    Parameters
    ----------
    names : sequence of str
        Axis names.
    sizes : sequence of int
        Alphabet size of every axis.
    support : ndarray, shape (N, d)
        Integer symbol of each axis for each support point.  Repeated rows
        are allowed; their masses add.
    mass : ndarray, shape (N,)
        Probability of each row.
    """

    def __init__(self, names, sizes, support, mass, tol: float = 1e-9):
        self.names = tuple(names)
        self.sizes = tuple(int(s) for s in sizes)
        if len(set(self.names)) != len(self.names):
            raise ProbabilityError(f"duplicate axis names in {self.names}")
        support = np.asarray(support, dtype=np.int64)
        mass = np.asarray(mass, dtype=float)
        if support.ndim != 2 or support.shape[1] != len(self.names):
            raise ProbabilityError("support must be (N, number of axes)")
        if support.shape[0] != mass.shape[0]:
            raise ProbabilityError("support and mass lengths differ")
        if np.any(support < 0) or np.any(support >= np.array(self.sizes)):
            raise ProbabilityError("support symbol out of range")
        _check_mass(mass, "SparseJoint", tol=tol)
        support.flags.writeable = False
        mass.flags.writeable = False
        self.support = support
        self.mass = mass

    def axis(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ProbabilityError(f"unknown axis {name!r}") from None

    def _codes(self, group: Sequence[str]) -> np.ndarray:
        idx = [self.axis(g) for g in group]
        radix = [self.sizes[i] for i in idx]
        if float(np.prod(radix, dtype=float)) < 2**62:
            code = np.zeros(self.support.shape[0], dtype=np.int64)
            for i, r in zip(idx, radix):
                code = code * r + self.support[:, i]
            return code
        _, code = np.unique(self.support[:, idx], axis=0, return_inverse=True)
        return code.ravel()

    def group_mass(self, group: Sequence[str]) -> np.ndarray:
        """Masses of the distinct values taken by ``group`` (order unspecified)."""
        code = self._codes(group)
        _, inv = np.unique(code, return_inverse=True)
        return np.bincount(inv.ravel(), weights=self.mass)

    def group_entropy(self, group: Sequence[str]) -> float:
        if not group:
            return 0.0
        return _h(self.group_mass(group))

    def to_dense(self) -> JointPmf:
        table = np.zeros(self.sizes)
        np.add.at(table, tuple(self.support.T), self.mass)
        return JointPmf(self.names, table)


# ---------------------------------------------------------------- builders

def as_pmf(p) -> Pmf:
    return p if isinstance(p, Pmf) else Pmf(np.asarray(p, dtype=float))


def bsc(alpha: float) -> Channel:
    if not 0.0 <= alpha <= 1.0:
        raise ProbabilityError(f"crossover {alpha!r} outside [0, 1]")
    return Channel(np.array([[1 - alpha, alpha], [alpha, 1 - alpha]]))


def erasure(p: float) -> Channel:
    """Binary erasure channel; output symbol 2 is the erasure."""
    if not 0.0 <= p <= 1.0:
        raise ProbabilityError(f"erasure probability {p!r} outside [0, 1]")
    return Channel(np.array([[1 - p, 0.0, p], [0.0, 1 - p, p]]))


def identity_channel(k: int) -> Channel:
    return Channel(np.eye(k))


def constant_channel(k_in: int, k_out: int = 1, symbol: int = 0) -> Channel:
    rows = np.zeros((k_in, k_out))
    rows[:, symbol] = 1.0
    return Channel(rows)


def joint_from(names: Sequence[str], mass) -> JointPmf:
    return JointPmf(tuple(names), np.asarray(mass, dtype=float))


# -------------------------------------------------------------- measures

def entropy(p) -> float:
    """Shannon entropy in bits, with ``0 log 0 = 0``."""
    return _h(as_pmf(p).mass)


def binary_entropy(a: float) -> float:
    if not 0.0 <= a <= 1.0:
        raise ProbabilityError(f"binary_entropy argument {a!r} outside [0, 1]")
    return _h(np.array([a, 1.0 - a]))


def marginalize(j: JointPmf, keep: Sequence[str]) -> JointPmf:
    """Sum out every axis not in ``keep``; the result follows ``keep``'s order."""
    keep = list(keep)
    if len(set(keep)) != len(keep):
        raise ProbabilityError(f"repeated axes in {keep}")
    idx = [j.axis(k) for k in keep]
    drop = tuple(i for i in range(len(j.names)) if i not in idx)
    m = j.mass.sum(axis=drop) if drop else j.mass
    remaining = [i for i in range(len(j.names)) if i in idx]
    order = [remaining.index(i) for i in idx]
    return JointPmf(tuple(keep), np.transpose(m, order))


def _groups(j, *groups):
    flat = [g for grp in groups for g in grp]
    if len(set(flat)) != len(flat):
        raise ProbabilityError(f"axis groups overlap: {groups}")
    for g in flat:
        j.axis(g)
    return [list(g) for g in groups]


def joint_entropy(j, group: Sequence[str]) -> float:
    (group,) = _groups(j, group)
    return j.group_entropy(group)


def conditional_entropy(j, a: Sequence[str], given: Sequence[str] = ()) -> float:
    a, c = _groups(j, a, given)
    return j.group_entropy(a + c) - j.group_entropy(c)


def mutual_information(j, a: Sequence[str], b: Sequence[str]) -> float:
    """I(A;B) in bits for axis groups ``a`` and ``b`` of a joint."""
    a, b = _groups(j, a, b)
    if not a or not b:
        raise ProbabilityError("mutual information needs nonempty groups")
    return j.group_entropy(a) + j.group_entropy(b) - j.group_entropy(a + b)


def conditional_mutual_information(j, a: Sequence[str], b: Sequence[str],
                                   c: Sequence[str] = ()) -> float:
    """I(A;B|C) = H(A,C) + H(B,C) - H(A,B,C) - H(C)."""
    a, b, c = _groups(j, a, b, c)
    if not a or not b:
        raise ProbabilityError("mutual information needs nonempty groups")
    return (j.group_entropy(a + c) + j.group_entropy(b + c)
            - j.group_entropy(a + b + c) - j.group_entropy(c))


# ------------------------------------------------------------ composition

def compose_chain(source: JointPmf, pvx: Channel, puv: Channel) -> JointPmf:
    """Joint over (U, V, X, Y, Z) from P_{X,Y,Z} P_{V|X} P_{U|V}.

    ``source`` must have axes named X, Y, Z (in any order).
    """
    xyz = marginalize(source, ["X", "Y", "Z"]).mass
    nx = xyz.shape[0]
    if pvx.input_size != nx:
        raise ProbabilityError(
            f"P(V|X) expects |X|={pvx.input_size}, source has {nx}")
    if puv.input_size != pvx.output_size:
        raise ProbabilityError(
            f"P(U|V) expects |V|={puv.input_size}, P(V|X) gives {pvx.output_size}")
    mass = np.einsum("xyz,xv,vu->uvxyz", xyz, pvx.rows, puv.rows)
    return JointPmf(("U", "V", "X", "Y", "Z"), mass)


def product_extension(j: JointPmf, n: int,
                      cell_cap: int = DEFAULT_CELL_CAP) -> JointPmf:
    """i.i.d. n-fold product of a joint.

    Axis ``A`` of size ``a`` becomes a sequence axis of size ``a**n``; the
    sequence ``(a_1, ..., a_n)`` is stored at index ``sum a_i a**(n-i)``
    (first letter most significant).
    """
    if n < 1:
        raise ProbabilityError(f"length {n!r} must be >= 1")
    cells = float(np.prod(j.sizes, dtype=float)) ** n
    if cells > cell_cap:
        raise CellCapExceeded(
            f"{cells:.3g} cells exceed the cap {cell_cap}; use Monte Carlo")
    d = len(j.names)
    out = j.mass
    for _ in range(n - 1):
        out = np.multiply.outer(out, j.mass)
    # axes are (letter1 axes..., letter2 axes..., ...); regroup per variable
    perm = [letter * d + k for k in range(d) for letter in range(n)]
    out = np.transpose(out, perm).reshape([s**n for s in j.sizes])
    return JointPmf(j.names, out)


def sequence_symbols(index, alphabet_size: int, n: int) -> np.ndarray:
    """Letters of sequence ``index`` (vectorised over ``index``)."""
    index = np.asarray(index, dtype=np.int64)
    powers = alphabet_size ** np.arange(n - 1, -1, -1, dtype=np.int64)
    return (index[..., None] // powers) % alphabet_size


def sequence_index(symbols, alphabet_size: int) -> np.ndarray:
    symbols = np.asarray(symbols, dtype=np.int64)
    n = symbols.shape[-1]
    powers = alphabet_size ** np.arange(n - 1, -1, -1, dtype=np.int64)
    return (symbols * powers).sum(axis=-1)


def all_sequences(alphabet_size: int, n: int) -> np.ndarray:
    """Every length-n sequence, shape (alphabet_size**n, n), lexicographic."""
    return sequence_symbols(np.arange(alphabet_size**n), alphabet_size, n)


def product_channel(ch: Channel, n: int,
                    cell_cap: int = DEFAULT_CELL_CAP) -> np.ndarray:
    """Dense n-fold memoryless channel matrix, sequences indexed as above."""
    cells = float(ch.input_size * ch.output_size) ** n
    if cells > cell_cap:
        raise CellCapExceeded(
            f"{cells:.3g} cells exceed the cap {cell_cap}; use Monte Carlo")
    out = ch.rows
    for _ in range(n - 1):
        out = np.einsum("ab,cd->acbd", out, ch.rows).reshape(
            out.shape[0] * ch.input_size, out.shape[1] * ch.output_size)
    return out


def product_pmf(p: Pmf, n: int) -> np.ndarray:
    out = p.mass
    for _ in range(n - 1):
        out = np.multiply.outer(out, p.mass).ravel()
    return out


# ----------------------------------------------------------- serialization

def dumps(obj) -> str:
    """JSON text for a Pmf, Channel or JointPmf (decimal, repr precision)."""
    return json.dumps(obj.to_dict())


def loads(text: str):
    d = json.loads(text)
    kind = d.get("type")
    if kind == "pmf":
        return Pmf.from_dict(d)
    if kind == "channel":
        return Channel.from_dict(d)
    if kind == "joint":
        return JointPmf.from_dict(d)
    raise ProbabilityError(f"unknown serialized type {kind!r}")


def random_joint(rng: np.random.Generator, names: Iterable[str],
                 sizes: Iterable[int], sparsity: float = 0.0) -> JointPmf:
    """Random dense joint (Dirichlet-like), some cells zeroed at ``sparsity``."""
    names = tuple(names)
    sizes = tuple(sizes)
    m = rng.exponential(size=sizes)
    if sparsity > 0:
        m = m * (rng.random(size=sizes) >= sparsity)
        if m.sum() == 0:
            m.flat[0] = 1.0
    return JointPmf(names, m / m.sum())


# ------------------------------------------------------------ identity suite

def csiszar_sum_gap(j, ys: Sequence[str], zs: Sequence[str],
                    t: Sequence[str] = ()) -> float:
    """Difference of the two sides of the Csiszar sum identity.

    ``sum_i I(Y_i; Z^{i-1} | T, Y_{i+1}^n) - sum_i I(Z_i; Y_{i+1}^n | T, Z^{i-1})``,
    which is zero for every joint.
    """
    ys, zs, t = list(ys), list(zs), list(t)
    if len(ys) != len(zs):
        raise ProbabilityError("Y and Z sequences differ in length")
    left = right = 0.0
    for i in range(len(ys)):
        future, past = ys[i + 1:], zs[:i]
        if past:
            left += conditional_mutual_information(j, [ys[i]], past, t + future)
        if future:
            right += conditional_mutual_information(j, [zs[i]], future, t + past)
    return left - right


def identity_suite(seed: int = 0, count: int = 100) -> dict:
    """Worst violation of each information identity over random joints.

    Keys: ``chain_rule``, ``nonnegativity``, ``data_processing`` and
    ``csiszar_sum``; a value is the largest deviation found (0 is perfect).
    """
    rng = np.random.default_rng(seed)
    worst = dict.fromkeys(
        ("chain_rule", "nonnegativity", "data_processing", "csiszar_sum"), 0.0)
    for t in range(count):
        sizes = tuple(int(s) for s in rng.integers(2, 4, size=3))
        j = random_joint(rng, ("A", "B", "C"), sizes, sparsity=0.2 * (t % 2))
        lhs = mutual_information(j, ["A"], ["B", "C"])
        rhs = mutual_information(j, ["A"], ["B"]) + \
            conditional_mutual_information(j, ["A"], ["C"], ["B"])
        worst["chain_rule"] = max(worst["chain_rule"], abs(lhs - rhs))
        for a, b, c in ((["A"], ["B"], ["C"]), (["A"], ["C"], ["B"]),
                        (["B"], ["C"], [])):
            v = conditional_mutual_information(j, a, b, c) if c \
                else mutual_information(j, a, b)
            worst["nonnegativity"] = max(worst["nonnegativity"], -v)
        # A - B - C by construction
        ab = marginalize(j, ["A", "B"]).mass
        ch = rng.exponential(size=(ab.shape[1], 3))
        ch /= ch.sum(axis=1, keepdims=True)
        chain = JointPmf(("A", "B", "C"), ab[:, :, None] * ch[None])
        gap = mutual_information(chain, ["A"], ["C"]) - \
            mutual_information(chain, ["A"], ["B"])
        worst["data_processing"] = max(worst["data_processing"], gap)
        n = 2 + t % 2
        ys = [f"Y{i}" for i in range(1, n + 1)]
        zs = [f"Z{i}" for i in range(1, n + 1)]
        cs = random_joint(rng, ys + zs + ["T"], (2,) * (2 * n + 1))
        worst["csiszar_sum"] = max(worst["csiszar_sum"],
                                   abs(csiszar_sum_gap(cs, ys, zs, ["T"])))
    return worst
