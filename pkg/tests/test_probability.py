import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from idauth_lab import probability as pr
from idauth_lab.region import erasure_cascade


def _h2(a):
    return 0.0 if a in (0.0, 1.0) else -a * math.log2(a) - (1 - a) * math.log2(1 - a)


@pytest.fixture
def cascade():
    return erasure_cascade(0.3, 0.5).joint()


# ------------------------------------------------------------ point values

@pytest.mark.parametrize("p, expected", [
    ([0.5, 0.5], 1.0),
    ([1.0, 0.0], 0.0),
    ([0.9, 0.1], 0.468996),
])
def test_entropy_values(p, expected):
    assert pr.entropy(p) == pytest.approx(expected, abs=1e-6)


@pytest.mark.parametrize("a", [0.5, 0.0, 0.1, 0.37])
def test_binary_entropy_matches_formula(a):
    assert pr.binary_entropy(a) == pytest.approx(_h2(a), abs=1e-15)


def test_binary_entropy_rejects_out_of_range():
    with pytest.raises(pr.ProbabilityError):
        pr.binary_entropy(1.2)


def test_pmf_rejects_bad_mass():
    with pytest.raises(pr.ProbabilityError):
        pr.Pmf(np.array([0.6, 0.6]))
    with pytest.raises(pr.ProbabilityError):
        pr.Pmf(np.array([1.1, -0.1]))


def test_marginalize_simple():
    ind = pr.joint_from(["A", "B"], np.full((2, 2), 0.25))
    assert np.allclose(pr.marginalize(ind, ["A"]).mass, [0.5, 0.5])
    corr = pr.joint_from(["A", "B"], [[0.5, 0], [0, 0.5]])
    assert np.allclose(pr.marginalize(corr, ["B"]).mass, [0.5, 0.5])


def test_marginalize_cascade_z(cascade):
    # Z is unerased with probability (1-p)(1-q) = 0.35, split evenly over the
    # two bits; the erasure symbol takes the remaining 0.65.
    pz = pr.marginalize(cascade, ["Z"]).mass
    assert np.allclose(pz, [0.175, 0.175, 0.65], atol=1e-12)


def test_marginalize_keeps_requested_order(cascade):
    zx = pr.marginalize(cascade, ["Z", "X"])
    assert zx.names == ("Z", "X")
    assert np.allclose(zx.mass, pr.marginalize(cascade, ["X", "Z"]).mass.T)


def test_mutual_information_examples(cascade):
    ind = pr.joint_from(["A", "B"], np.outer([0.3, 0.7], [0.2, 0.5, 0.3]))
    assert abs(pr.mutual_information(ind, ["A"], ["B"])) < 1e-12
    assert pr.mutual_information(cascade, ["X"], ["Y"]) == pytest.approx(0.7, abs=1e-12)
    same = pr.joint_from(["X", "Y"], [[0.5, 0], [0, 0.5]])
    assert pr.mutual_information(same, ["X"], ["Y"]) == pytest.approx(1.0)


def test_conditional_mutual_information_examples(cascade):
    assert pr.conditional_mutual_information(
        cascade, ["X"], ["Z"], ["Y"]) == pytest.approx(0.0, abs=1e-12)
    assert pr.conditional_mutual_information(
        cascade, ["X"], ["Y"], ["Z"]) == pytest.approx(0.35, abs=1e-12)
    ab = np.array([[0.1, 0.3], [0.4, 0.2]])
    j = pr.joint_from(["A", "B", "C"], ab[:, :, None])
    assert pr.conditional_mutual_information(j, ["A"], ["B"], ["C"]) == \
        pytest.approx(pr.mutual_information(j, ["A"], ["B"]), abs=1e-14)


def test_overlapping_groups_rejected(cascade):
    with pytest.raises(pr.ProbabilityError):
        pr.mutual_information(cascade, ["X"], ["X", "Y"])


def test_compose_chain_identity():
    src = erasure_cascade(0.3, 0.5).joint()
    eye = pr.identity_channel(2)
    j = pr.compose_chain(src, eye, eye)
    uvx = pr.marginalize(j, ["U", "V", "X"]).mass
    off = uvx.copy()
    for a in range(2):
        off[a, a, a] = 0
    assert off.sum() == 0
    flat = pr.compose_chain(src, pr.Channel(np.full((2, 2), 0.5)), eye)
    assert abs(pr.mutual_information(flat, ["X"], ["V"])) < 1e-12


def test_compose_chain_key_difference():
    src = erasure_cascade(0.3, 0.5).joint()
    j = pr.compose_chain(src, pr.bsc(0.1), pr.constant_channel(2))
    key = (pr.conditional_mutual_information(j, ["V"], ["Y"], ["U"])
           - pr.conditional_mutual_information(j, ["V"], ["Z"], ["U"]))
    assert key == pytest.approx(0.5 * 0.7 * (1 - _h2(0.1)), abs=1e-12)
    assert key == pytest.approx(0.185851, abs=1e-6)


def test_product_extension():
    b = pr.joint_from(["A"], [0.5, 0.5])
    assert np.array_equal(pr.product_extension(b, 1).mass, b.mass)
    assert np.allclose(pr.product_extension(b, 2).mass, 0.25)
    ch = pr.erasure(0.3)
    joint = pr.joint_from(["X", "Y"], 0.5 * ch.rows)
    cube = pr.product_extension(joint, 3).mass
    eee = pr.sequence_index([2, 2, 2], 3)
    cond = cube[:, eee] / cube.sum(axis=1)
    assert np.allclose(cond, 0.3**3)


def test_product_extension_cap():
    j = pr.joint_from(["A", "B"], np.full((3, 3), 1 / 9))
    with pytest.raises(pr.CellCapExceeded):
        pr.product_extension(j, 10, cell_cap=10**6)


def test_product_channel_matches_extension():
    ch = pr.erasure(0.25)
    big = pr.product_channel(ch, 3)
    ext = pr.product_extension(pr.joint_from(["X", "Y"], 0.5 * ch.rows), 3).mass
    assert np.allclose(big, ext / ext.sum(axis=1, keepdims=True))


def test_sequence_index_round_trip():
    seqs = pr.all_sequences(3, 4)
    assert np.array_equal(pr.sequence_index(seqs, 3), np.arange(81))


def test_sparse_joint_matches_dense(cascade):
    idx = np.argwhere(cascade.mass > 0)
    sj = pr.SparseJoint(cascade.names, cascade.sizes, idx, cascade.mass[tuple(idx.T)])
    for a, b, c in ((["X"], ["Z"], ["Y"]), (["Y"], ["Z"], []), (["X", "Z"], ["Y"], [])):
        dense = pr.conditional_mutual_information(cascade, a, b, c) if c \
            else pr.mutual_information(cascade, a, b)
        sparse = pr.conditional_mutual_information(sj, a, b, c) if c \
            else pr.mutual_information(sj, a, b)
        assert sparse == pytest.approx(dense, abs=1e-12)
    assert np.allclose(sj.to_dense().mass, cascade.mass)


def test_json_round_trip(cascade):
    again = pr.loads(pr.dumps(cascade))
    assert again.names == cascade.names
    assert np.array_equal(again.mass, cascade.mass)


# ------------------------------------------------------------- properties

def _joint(seed, sizes, sparsity=0.0, names=("A", "B", "C")):
    return pr.random_joint(np.random.default_rng(seed), names, sizes, sparsity)


sizes3 = st.tuples(*[st.integers(2, 4)] * 3)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31), sizes=sizes3,
       sparsity=st.sampled_from([0.0, 0.3]))
def test_chain_rule(seed, sizes, sparsity):
    j = _joint(seed, sizes, sparsity)
    h_ab = pr.joint_entropy(j, ["A", "B"])
    assert h_ab == pytest.approx(
        pr.joint_entropy(j, ["A"]) + pr.conditional_entropy(j, ["B"], ["A"]),
        abs=1e-10)
    assert pr.mutual_information(j, ["A"], ["B", "C"]) == pytest.approx(
        pr.mutual_information(j, ["A"], ["B"])
        + pr.conditional_mutual_information(j, ["A"], ["C"], ["B"]), abs=1e-10)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31), sizes=sizes3,
       sparsity=st.sampled_from([0.0, 0.5]))
def test_nonnegativity(seed, sizes, sparsity):
    j = _joint(seed, sizes, sparsity)
    for a, b, c in ((["A"], ["B"], ["C"]), (["B"], ["C"], ["A"]),
                    (["A", "C"], ["B"], [])):
        v = pr.conditional_mutual_information(j, a, b, c) if c \
            else pr.mutual_information(j, a, b)
        assert v >= -1e-12


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_data_processing_on_composed_chain(seed):
    rng = np.random.default_rng(seed)
    src = erasure_cascade(*rng.uniform(0, 1, size=2)).joint()
    pvx = pr.Channel(rng.dirichlet(np.ones(3), size=2))
    puv = pr.Channel(rng.dirichlet(np.ones(2), size=3))
    j = pr.compose_chain(src, pvx, puv)
    assert pr.mutual_information(j, ["U"], ["Y"]) <= \
        pr.mutual_information(j, ["V"], ["Y"]) + 1e-10
    assert pr.mutual_information(j, ["V"], ["Z"]) <= \
        pr.mutual_information(j, ["V"], ["Y"]) + 1e-10


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.sampled_from([2, 3]))
def test_csiszar_sum_identity(seed, n):
    ys = [f"Y{i}" for i in range(n)]
    zs = [f"Z{i}" for i in range(n)]
    j = _joint(seed, (2,) * (2 * n + 1), names=ys + zs + ["T"])
    # written out directly so the check does not share the helper's loop
    left = sum(pr.conditional_mutual_information(j, [ys[i]], zs[:i], ["T"] + ys[i + 1:])
               for i in range(1, n))
    right = sum(pr.conditional_mutual_information(j, [zs[i]], ys[i + 1:], ["T"] + zs[:i])
                for i in range(n - 1))
    assert left == pytest.approx(right, abs=1e-9)
    assert abs(pr.csiszar_sum_gap(j, ys, zs, ["T"])) < 1e-9


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), nv=st.integers(1, 4), nu=st.integers(1, 3))
def test_compose_chain_markov_structure(seed, nv, nu):
    rng = np.random.default_rng(seed)
    src = erasure_cascade(*rng.uniform(0, 1, size=2)).joint()
    j = pr.compose_chain(src, pr.Channel(rng.dirichlet(np.ones(nv), size=2)),
                         pr.Channel(rng.dirichlet(np.ones(nu), size=nv)))
    assert pr.conditional_mutual_information(j, ["U"], ["X", "Y", "Z"], ["V"]) < 1e-10
    assert pr.conditional_mutual_information(j, ["Y", "Z"], ["U", "V"], ["X"]) < 1e-10


def test_identity_suite_is_clean_and_seeded():
    a = pr.identity_suite(seed=5, count=20)
    assert max(a.values()) < 1e-9
    assert a == pr.identity_suite(seed=5, count=20)
