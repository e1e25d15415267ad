"""Layered random-binning code at finite blocklength.

Two codeword layers: ``u(j)`` drawn from P_U, and for every ``j`` a bank
``v(j, k)`` drawn from P_{V|U} given ``u(j)``.  First-layer codewords go into
bins ``m1``; second-layer indices ``k`` go into bins ``m2`` and, inside a bin,
into key subbins ``s``.  The stored description of a user is ``(m1, m2)``;
the key is ``s``.

Users, codeword indices and keys are 0-based throughout.
"""

from __future__ import annotations

import io
import json
import math
import struct
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence, Union

import numpy as np

from . import probability as pr
from .probability import JointPmf
from .region import AuxChannels, SourceModel

MAGIC = b"IDAUTHCB"
FORMAT_VERSION = 1
DEFAULT_MEMORY_CAP = 2**26  # codeword symbols


class CodecError(ValueError):
    pass


class DegenerateCodebook(CodecError):
    """An index set would be empty, or the rate conditions fail."""


class MemoryCapExceeded(CodecError):
    pass


# ------------------------------------------------------------- parameters

@dataclass(frozen=True)
class TypicalityParams:
    epsilon: float
    delta_eps: float

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise CodecError(f"epsilon={self.epsilon!r} must lie in (0, 1)")
        if not self.delta_eps > 0.0:
            raise CodecError(f"delta_eps={self.delta_eps!r} must be > 0")


@dataclass(frozen=True)
class CodebookSpec:
    n: int
    k_users: int
    r_i: float
    src: SourceModel
    aux: AuxChannels
    typ: TypicalityParams
    seed: int = 0
    memory_cap: int = DEFAULT_MEMORY_CAP

    def joint(self) -> JointPmf:
        return pr.compose_chain(self.src.joint(), self.aux.pvx, self.aux.puv)

    @cached_property
    def info(self) -> dict:
        """Single-letter quantities that size the codebook."""
        j = self.joint()
        mi = pr.mutual_information
        cmi = pr.conditional_mutual_information
        return {
            "I(X;U)": mi(j, ["X"], ["U"]),
            "I(X;U|Y)": cmi(j, ["X"], ["U"], ["Y"]),
            "I(U;Y)": mi(j, ["U"], ["Y"]),
            "I(X;V|U)": cmi(j, ["X"], ["V"], ["U"]),
            "I(X;V|U,Y)": cmi(j, ["X"], ["V"], ["U", "Y"]),
            "I(X;V|Y)": cmi(j, ["X"], ["V"], ["Y"]),
            "I(V;Y|U)": cmi(j, ["V"], ["Y"], ["U"]),
            "I(V;Z|U)": cmi(j, ["V"], ["Z"], ["U"]),
            "H(U)": pr.joint_entropy(j, ["U"]),
            "H(Z|U)": pr.conditional_entropy(j, ["Z"], ["U"]),
        }

    @property
    def u_constant(self) -> bool:
        return self.info["H(U)"] <= 1e-12

    def validate(self) -> None:
        if self.n < 1 or self.k_users < 1:
            raise CodecError("n and k_users must be >= 1")
        if self.r_i < 0:
            raise CodecError("r_i must be >= 0")
        info = self.info
        d = self.typ.delta_eps
        if self.r_i > 0 and self.r_i > info["I(U;Y)"] - d + 1e-12:
            raise DegenerateCodebook(
                f"r_i={self.r_i} exceeds I(U;Y) - delta = {info['I(U;Y)'] - d:.6g}")
        if info["I(V;Y|U)"] - info["I(V;Z|U)"] <= 0:
            raise DegenerateCodebook("needs I(V;Y|U) - I(V;Z|U) > 0")

    def exponents(self) -> dict:
        """n times the log2 of each sized index set, before rounding."""
        info, d, n = self.info, self.typ.delta_eps, self.n
        return {
            "n_j": n * (info["I(X;U)"] + d),
            "n_m1": n * (info["I(X;U|Y)"] + self.r_i + 2 * d),
            "n_k": n * (info["I(X;V|U)"] + d),
            "n_m2": n * (info["I(X;V|U,Y)"] + 3 * d),
            "n_s": n * (info["I(V;Y|U)"] - info["I(V;Z|U)"] - d),
        }

    def index_sizes(self) -> dict:
        sizes = {}
        for name, e in self.exponents().items():
            c = int(round(2.0 ** e))
            if c < 1:
                raise DegenerateCodebook(f"{name} = round(2^{e:.4g}) is 0")
            sizes[name] = c
        if self.u_constant:
            # one codeword suffices; |M1| keeps its nominal size for accounting
            sizes["n_j"] = 1
        return sizes

    def to_dict(self) -> dict:
        return {
            "n": self.n, "k_users": self.k_users, "r_i": self.r_i,
            "src": self.src.to_dict(), "aux": self.aux.to_dict(),
            "epsilon": self.typ.epsilon, "delta_eps": self.typ.delta_eps,
            "seed": self.seed, "memory_cap": self.memory_cap,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CodebookSpec":
        return cls(int(d["n"]), int(d["k_users"]), float(d["r_i"]),
                   SourceModel.from_dict(d["src"]),
                   AuxChannels.from_dict(d["aux"]),
                   TypicalityParams(float(d["epsilon"]), float(d["delta_eps"])),
                   int(d["seed"]), int(d.get("memory_cap", DEFAULT_MEMORY_CAP)))


# -------------------------------------------------------------- typicality

def _cell_counts(cells: np.ndarray, n_cells: int) -> np.ndarray:
    """Histogram along the last axis of an integer cell array."""
    out = np.zeros(cells.shape[:-1] + (n_cells,), dtype=np.int16)
    for i in range(cells.shape[-1]):
        c = cells[..., i]
        out += (c[..., None] == np.arange(n_cells)).astype(np.int16)
    return out


def _typical_counts(counts: np.ndarray, ref: np.ndarray, n: int,
                    epsilon: float) -> np.ndarray:
    expect = n * ref.ravel()
    dev = np.abs(counts - expect)
    return np.all(dev <= epsilon * expect + 1e-9, axis=-1)


def is_jointly_typical(seqs: Sequence, ref: JointPmf, epsilon: float) -> bool:
    """Robust typicality: ``|freq(a) - P(a)| <= epsilon * P(a)`` for every cell.

    ``seqs`` holds one sequence per axis of ``ref``, in axis order.
    """
    seqs = [np.asarray(s, dtype=np.int64) for s in seqs]
    if len(seqs) != len(ref.names):
        raise CodecError(f"{len(seqs)} sequences for {len(ref.names)} axes")
    n = seqs[0].shape[0]
    if any(s.shape != (n,) for s in seqs):
        raise CodecError("sequences must share one length")
    for s, size in zip(seqs, ref.sizes):
        if s.size and (s.min() < 0 or s.max() >= size):
            raise CodecError("symbol outside the reference alphabet")
    cell = np.ravel_multi_index(tuple(seqs), ref.sizes)
    counts = np.bincount(cell, minlength=int(np.prod(ref.sizes)))
    return bool(_typical_counts(counts, ref.mass, n, epsilon))


# --------------------------------------------------------------- codebook

@dataclass(frozen=True)
class LayeredCodebook:
    """Codeword banks and index maps.

    ``u_bank[j]`` is the first-layer codeword ``j``; ``u_bin_of[j]`` its bin
    ``m1``.  ``v_bank[j, k]`` is the second-layer codeword; the assignment
    ``k -> (m2, s)`` is shared by every ``j``.  ``m'`` and ``s'`` are ranks
    inside a bin or subbin, so ``j <-> (m1, m')`` and ``k <-> (m2, s, s')``
    are bijections onto the occupied cells.
    """

    spec: CodebookSpec
    u_bank: np.ndarray
    u_bin_of: np.ndarray
    v_bank: np.ndarray
    v_bin_of: np.ndarray
    v_subbin_of: np.ndarray
    n_m1: int
    n_m2: int
    n_s: int
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        for name in ("u_bank", "u_bin_of", "v_bank", "v_bin_of", "v_subbin_of"):
            a = np.array(getattr(self, name), copy=True)
            a.flags.writeable = False
            object.__setattr__(self, name, a)
        nj, n = self.u_bank.shape
        if self.v_bank.shape[:1] != (nj,) or self.v_bank.shape[2] != n:
            raise CodecError("v_bank must be (n_j, n_k, n)")
        nk = self.v_bank.shape[1]
        if self.u_bin_of.shape != (nj,) or self.v_bin_of.shape != (nk,) \
                or self.v_subbin_of.shape != (nk,):
            raise CodecError("index maps have the wrong length")
        if self.u_bin_of.max() >= self.n_m1 or self.v_bin_of.max() >= self.n_m2 \
                or self.v_subbin_of.max() >= self.n_s:
            raise CodecError("index map value out of range")

    # sizes ----------------------------------------------------------------
    @property
    def n(self) -> int:
        return int(self.u_bank.shape[1])

    @property
    def n_j(self) -> int:
        return int(self.u_bank.shape[0])

    @property
    def n_k(self) -> int:
        return int(self.v_bank.shape[1])

    @property
    def n_pairs(self) -> int:
        return self.n_j * self.n_k

    @property
    def n_descriptions(self) -> int:
        return self.n_m1 * self.n_m2

    @property
    def sizes(self) -> dict:
        mp = np.bincount(self.u_bin_of, minlength=self.n_m1).max()
        sp = np.bincount(self.v_bin_of * self.n_s + self.v_subbin_of,
                         minlength=self.n_m2 * self.n_s).max()
        return {"n_j": self.n_j, "n_m1": self.n_m1, "n_mprime": int(mp),
                "n_k": self.n_k, "n_m2": self.n_m2, "n_s": self.n_s,
                "n_sprime": int(sp)}

    # index maps -------------------------------------------------------------
    @cached_property
    def _mprime(self) -> np.ndarray:
        return _ranks(self.u_bin_of)

    @cached_property
    def _sprime(self) -> np.ndarray:
        return _ranks(self.v_bin_of * self.n_s + self.v_subbin_of)

    def j_to_bin(self, j: int) -> tuple:
        return int(self.u_bin_of[j]), int(self._mprime[j])

    def bin_to_j(self, m1: int, mprime: int) -> int:
        hit = np.flatnonzero((self.u_bin_of == m1) & (self._mprime == mprime))
        if hit.size != 1:
            raise KeyError((m1, mprime))
        return int(hit[0])

    def k_to_triple(self, k: int) -> tuple:
        return int(self.v_bin_of[k]), int(self.v_subbin_of[k]), int(self._sprime[k])

    def triple_to_k(self, m2: int, s: int, sprime: int) -> int:
        hit = np.flatnonzero((self.v_bin_of == m2) & (self.v_subbin_of == s)
                             & (self._sprime == sprime))
        if hit.size != 1:
            raise KeyError((m2, s, sprime))
        return int(hit[0])

    # pair views (pair index = j * n_k + k) ---------------------------------
    @cached_property
    def pair_j(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_j), self.n_k)

    @cached_property
    def pair_k(self) -> np.ndarray:
        return np.tile(np.arange(self.n_k), self.n_j)

    @cached_property
    def pair_description(self) -> np.ndarray:
        return self.u_bin_of[self.pair_j] * self.n_m2 + self.v_bin_of[self.pair_k]

    @cached_property
    def pair_key(self) -> np.ndarray:
        return self.v_subbin_of[self.pair_k]

    def description_of(self, m1: int, m2: int) -> int:
        return m1 * self.n_m2 + m2

    # typicality -------------------------------------------------------------
    @cached_property
    def _ref(self) -> JointPmf:
        return self.spec.joint()

    @cached_property
    def ref_xuv(self) -> JointPmf:
        return pr.marginalize(self._ref, ["X", "U", "V"])

    @cached_property
    def ref_yuv(self) -> JointPmf:
        return pr.marginalize(self._ref, ["Y", "U", "V"])

    def typical_pairs(self, seqs: np.ndarray, against: str,
                      block: int = 1 << 22) -> np.ndarray:
        """Boolean (B, n_pairs): which codeword pairs are jointly typical.

        ``against`` is ``"x"`` (enrollment, reference P_{X,U,V}) or ``"y"``
        (decoding, reference P_{Y,U,V}).  Typicality of the triple implies
        typicality of (x, u), so enrollment checks the triple only.
        """
        ref = self.ref_xuv if against == "x" else self.ref_yuv
        seqs = np.atleast_2d(np.asarray(seqs, dtype=np.int64))
        a_size, u_size, v_size = ref.sizes
        n_cells = a_size * u_size * v_size
        uv = (self.u_bank[:, None, :].astype(np.int64) * v_size
              + self.v_bank).reshape(self.n_pairs, self.n)
        out = np.empty((seqs.shape[0], self.n_pairs), dtype=bool)
        rows = max(1, block // max(1, self.n_pairs * n_cells))
        for lo in range(0, seqs.shape[0], rows):
            s = seqs[lo:lo + rows]
            cells = s[:, None, :] * (u_size * v_size) + uv[None]
            counts = _cell_counts(cells, n_cells)
            out[lo:lo + rows] = _typical_counts(counts, ref.mass, self.n,
                                                self.spec.typ.epsilon)
        return out

    # serialization -----------------------------------------------------------
    def to_bytes(self) -> bytes:
        header = json.dumps({
            "spec": self.spec.to_dict(),
            "n_m1": self.n_m1, "n_m2": self.n_m2, "n_s": self.n_s,
            "shapes": {"u_bank": list(self.u_bank.shape),
                       "v_bank": list(self.v_bank.shape)},
        }, sort_keys=True).encode()
        buf = io.BytesIO()
        buf.write(MAGIC)
        buf.write(struct.pack("<HI", FORMAT_VERSION, len(header)))
        buf.write(header)
        buf.write(np.ascontiguousarray(self.u_bank, dtype=np.uint8).tobytes())
        buf.write(np.ascontiguousarray(self.v_bank, dtype=np.uint8).tobytes())
        for a in (self.u_bin_of, self.v_bin_of, self.v_subbin_of):
            buf.write(np.ascontiguousarray(a, dtype="<u4").tobytes())
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "LayeredCodebook":
        if data[:len(MAGIC)] != MAGIC:
            raise CodecError("not a codebook file")
        off = len(MAGIC)
        version, hlen = struct.unpack_from("<HI", data, off)
        if version != FORMAT_VERSION:
            raise CodecError(f"unsupported codebook format version {version}")
        off += struct.calcsize("<HI")
        header = json.loads(data[off:off + hlen])
        off += hlen
        nj, n = header["shapes"]["u_bank"]
        _, nk, _ = header["shapes"]["v_bank"]

        def take(count, dtype):
            nonlocal off
            a = np.frombuffer(data, dtype=dtype, count=count, offset=off)
            off += a.nbytes
            return a

        u_bank = take(nj * n, np.uint8).reshape(nj, n)
        v_bank = take(nj * nk * n, np.uint8).reshape(nj, nk, n)
        u_bin = take(nj, "<u4").astype(np.int64)
        v_bin = take(nk, "<u4").astype(np.int64)
        v_sub = take(nk, "<u4").astype(np.int64)
        return cls(CodebookSpec.from_dict(header["spec"]), u_bank, u_bin,
                   v_bank, v_bin, v_sub, header["n_m1"], header["n_m2"],
                   header["n_s"])


def _ranks(labels: np.ndarray) -> np.ndarray:
    """Rank of each entry among equal labels, in index order."""
    order = np.argsort(labels, kind="stable")
    ranks = np.empty_like(order)
    sorted_labels = labels[order]
    starts = np.r_[0, np.flatnonzero(np.diff(sorted_labels)) + 1]
    run = np.repeat(starts, np.diff(np.r_[starts, len(labels)]))
    ranks[order] = np.arange(len(labels)) - run
    return ranks


def _sample_rows(rng: np.random.Generator, cdf: np.ndarray,
                 given: np.ndarray) -> np.ndarray:
    """Draw one symbol per entry of ``given`` from row ``cdf[given]``."""
    u = rng.random(size=given.shape)
    c = cdf[given]
    return (u[..., None] >= c).sum(axis=-1).clip(max=cdf.shape[1] - 1)


def generate_codebook(spec: CodebookSpec,
                      overrides: Optional[dict] = None) -> LayeredCodebook:
    """Random layered codebook, reproducible from ``spec.seed``.

    Codeword counts are ``round(2^(n * rate))`` for the five sized index
    sets.  A deterministic U collapses the first layer to a single codeword,
    so only one first-layer bin is occupied.

    Parameters
    ----------
    overrides : dict, optional
        Replacement index-set sizes (keys as in ``index_sizes``).  Forcing
        ``n_s`` skips the positive-key-rate check, which is how degenerate
        instances are built on purpose.
    """
    overrides = dict(overrides or {})
    if "n_s" in overrides:
        if spec.n < 1 or spec.k_users < 1 or spec.r_i < 0:
            raise CodecError("n, k_users >= 1 and r_i >= 0 required")
        exps = spec.exponents()
        sizes = {k: max(1, int(round(2.0 ** e))) for k, e in exps.items()}
        if spec.u_constant:
            sizes["n_j"] = 1
    else:
        spec.validate()
        sizes = spec.index_sizes()
    for key, val in overrides.items():
        if key not in sizes or int(val) < 1:
            raise CodecError(f"bad size override {key}={val!r}")
        sizes[key] = int(val)
    nj, nk, n = sizes["n_j"], sizes["n_k"], spec.n
    if nj * nk * n > spec.memory_cap:
        raise MemoryCapExceeded(
            f"{nj} x {nk} codewords of length {n} exceed {spec.memory_cap} symbols")
    j = spec.joint()
    puv = pr.marginalize(j, ["U", "V"]).mass
    pu = puv.sum(axis=1)
    pv_u = np.where(pu[:, None] > 0, puv / np.where(pu > 0, pu, 1)[:, None],
                    1.0 / puv.shape[1])
    rng = np.random.default_rng(spec.seed)
    if spec.u_constant:
        u_bank = np.full((1, n), int(np.argmax(pu)), dtype=np.int64)
    else:
        u_bank = _sample_rows(rng, np.cumsum(pu)[None], np.zeros((nj, n), int))
    v_bank = _sample_rows(rng, np.cumsum(pv_u, axis=1),
                          np.broadcast_to(u_bank[:, None, :], (nj, nk, n)))
    u_bin = rng.integers(sizes["n_m1"], size=nj)
    v_bin = rng.integers(sizes["n_m2"], size=nk)
    v_sub = rng.integers(sizes["n_s"], size=nk)
    return LayeredCodebook(spec, u_bank.astype(np.uint8), u_bin,
                           v_bank.astype(np.uint8), v_bin, v_sub,
                           sizes["n_m1"], sizes["n_m2"], sizes["n_s"])


def rate_accounting(cb: LayeredCodebook) -> dict:
    """Realised versus nominal compression and key rates (bits per symbol)."""
    info, d, n = cb.spec.info, cb.spec.typ.delta_eps, cb.n
    return {
        "compression": math.log2(cb.n_m1 * cb.n_m2) / n,
        "compression_nominal": info["I(X;V|Y)"] + cb.spec.r_i + 5 * d,
        "key": math.log2(cb.n_s) / n,
        "key_nominal": info["I(V;Y|U)"] - info["I(V;Z|U)"] - d,
    }


# ------------------------------------------------------ enroll / identify

@dataclass(frozen=True)
class EnrollmentRecord:
    user: int
    m1: int
    m2: int
    s: int
    j: int
    k: int
    covered: bool = True

    @property
    def description(self) -> tuple:
        return (self.m1, self.m2)

    def to_dict(self) -> dict:
        return {"user": self.user, "m1": self.m1, "m2": self.m2, "s": self.s,
                "j": self.j, "k": self.k, "covered": self.covered}

    @classmethod
    def from_dict(cls, d: dict) -> "EnrollmentRecord":
        return cls(**d)


@dataclass(frozen=True)
class CoveringFailure:
    """No codeword pair is jointly typical with the source sequence."""

    user: int


@dataclass(frozen=True)
class Database:
    descriptions: tuple

    def __post_init__(self):
        object.__setattr__(self, "descriptions",
                           tuple((int(a), int(b)) for a, b in self.descriptions))

    @property
    def k_users(self) -> int:
        return len(self.descriptions)

    def to_json(self) -> str:
        return json.dumps({"descriptions": [list(d) for d in self.descriptions]})

    @classmethod
    def from_json(cls, text: str) -> "Database":
        return cls(tuple(tuple(d) for d in json.loads(text)["descriptions"]))


@dataclass(frozen=True)
class Identified:
    w_hat: int
    s_hat: int


@dataclass(frozen=True)
class IdFailure:
    """Zero or several users passed the typicality test."""

    candidates: tuple


def _record(cb: LayeredCodebook, user: int, pair: int, covered: bool):
    j, k = int(cb.pair_j[pair]), int(cb.pair_k[pair])
    return EnrollmentRecord(user, int(cb.u_bin_of[j]), int(cb.v_bin_of[k]),
                            int(cb.v_subbin_of[k]), j, k, covered)


def enroll(cb: LayeredCodebook, x, rng: np.random.Generator,
           user: int = 0) -> Union[EnrollmentRecord, CoveringFailure]:
    """Pick a uniformly random jointly typical codeword pair for ``x``."""
    x = np.asarray(x, dtype=np.int64)
    if x.shape != (cb.n,):
        raise CodecError(f"source sequence must have length {cb.n}")
    pairs = np.flatnonzero(cb.typical_pairs(x[None], "x")[0])
    if pairs.size == 0:
        return CoveringFailure(user)
    return _record(cb, user, int(pairs[rng.integers(pairs.size)]), True)


def enroll_all(cb: LayeredCodebook, xs, rng: np.random.Generator):
    """Enroll every user; a covering failure stores a uniformly random pair.

    Returns ``(Database, records)``; uncovered users have ``covered=False``.
    """
    records = []
    for w, x in enumerate(np.asarray(xs)):
        rec = enroll(cb, x, rng, user=w)
        if isinstance(rec, CoveringFailure):
            rec = _record(cb, w, int(rng.integers(cb.n_pairs)), False)
        records.append(rec)
    return Database(tuple(r.description for r in records)), records


def decode_from_typical(cb: LayeredCodebook, db: Database,
                        typical: np.ndarray, rng: np.random.Generator):
    """Decoder given the typical-pair mask of the measurement."""
    hits = np.flatnonzero(typical)
    desc = cb.pair_description[hits]
    passing = [w for w, (m1, m2) in enumerate(db.descriptions)
               if np.any(desc == cb.description_of(m1, m2))]
    if len(passing) != 1:
        return IdFailure(tuple(passing))
    w = passing[0]
    keys = np.unique(cb.pair_key[hits[desc == cb.description_of(*db.descriptions[w])]])
    s = keys[0] if keys.size == 1 else keys[rng.integers(keys.size)]
    return Identified(w, int(s))


def identify_authenticate(cb: LayeredCodebook, db: Database, y,
                          rng: np.random.Generator):
    """Return ``Identified(w_hat, s_hat)`` or ``IdFailure``.

    A user passes when some pair in its bins is jointly typical with ``y``;
    exactly one user must pass.  When the passing pairs carry several keys,
    one distinct key is drawn uniformly.
    """
    y = np.asarray(y, dtype=np.int64)
    if y.shape != (cb.n,):
        raise CodecError(f"measurement must have length {cb.n}")
    return decode_from_typical(cb, db, cb.typical_pairs(y[None], "y")[0], rng)
