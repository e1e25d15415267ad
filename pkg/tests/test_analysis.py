import dataclasses
import itertools
import math

import numpy as np
import pytest

from idauth_lab import probability as pr
from idauth_lab import analysis as an
from idauth_lab.codec import (CodebookSpec, TypicalityParams, generate_codebook,
                              is_jointly_typical)
from idauth_lab.region import AuxChannels, erasure_cascade


# ------------------------------------------------------- brute-force oracle

def _letter_prob(rows, xs, outs):
    return float(np.prod([rows[x, o] for x, o in zip(xs, outs)]))


def brute_force(cb, k_users):
    """Error probability and mFAP by direct enumeration.

    Shares nothing with the factored model: typicality is checked one
    tuple at a time and the decoder rule is re-implemented here.
    """
    spec, n = cb.spec, cb.n
    src = spec.src
    eps = spec.typ.epsilon
    xs = [tuple(s) for s in pr.all_sequences(2, n)]
    ys = [tuple(s) for s in pr.all_sequences(src.y_size, n)]
    zs = [tuple(s) for s in pr.all_sequences(src.z_size, n)]
    pairs = [(j, k) for j in range(cb.n_j) for k in range(cb.n_k)]

    def uv(pair):
        return cb.u_bank[pair[0]], cb.v_bank[pair[0], pair[1]]

    def enroll_dist(x):
        ok = [p for p in pairs if is_jointly_typical([x, *uv(p)], cb.ref_xuv, eps)]
        ok = ok or pairs
        return {p: 1 / len(ok) for p in ok}

    def desc(p):
        return (int(cb.u_bin_of[p[0]]), int(cb.v_bin_of[p[1]]))

    def key(p):
        return int(cb.v_subbin_of[p[1]])

    passing = {y: [p for p in pairs if is_jointly_typical([y, *uv(p)], cb.ref_yuv, eps)]
               for y in ys}

    def accept(dbar, y):
        """{(w, s): probability} of the decoder output."""
        hits = passing[y]
        users = [w for w in range(k_users) if any(desc(p) == dbar[w] for p in hits)]
        if len(users) != 1:
            return {}
        w = users[0]
        keys = sorted({key(p) for p in hits if desc(p) == dbar[w]})
        return {(w, s): 1 / len(keys) for s in keys}

    px = {x: math.prod(src.px.mass[a] for a in x) for x in xs}
    ych, zch = src.y_channel().rows, src.z_channel().rows
    users = []  # per user: list of (x, desc, key, prob)
    for x in xs:
        for p, q in enroll_dist(x).items():
            users.append((x, desc(p), key(p), px[x] * q))

    err = 0.0
    view = {}  # (dbar, z) -> {skeys tuple: prob}
    for combo in itertools.product(users, repeat=k_users):
        dbar = tuple(c[1] for c in combo)
        sbar = tuple(c[2] for c in combo)
        pc = math.prod(c[3] for c in combo)
        for w in range(k_users):
            x = combo[w][0]
            for y in ys:
                py = _letter_prob(ych, x, y)
                if py:
                    err += pc / k_users * py * (1 - accept(dbar, y).get((w, sbar[w]), 0.0))
            for z in zs:
                pz = _letter_prob(zch, x, z)
                if pz:
                    cell = view.setdefault((dbar, z), {})
                    cell[sbar] = cell.get(sbar, 0.0) + pc * pz / k_users
    mfap = 0.0
    for (dbar, z), dist in view.items():
        best = 0.0
        for y in ys:
            acc = accept(dbar, y)
            v = sum(pr_s * acc.get((w, s[w]), 0.0)
                    for s, pr_s in dist.items() for w in range(k_users))
            best = max(best, v)
        mfap += best
    return err, mfap


# --------------------------------------------------------------- fixtures

@pytest.fixture(scope="module")
def seeded_n6():
    from conftest import noiseless_spec
    return an.build_exact_model(generate_codebook(noiseless_spec(n=6, seed=0)))


@pytest.fixture(scope="module")
def erased_n4():
    """Half-erased measurements; the decoder still accepts some y."""
    spec = CodebookSpec(4, 2, 0.0, erasure_cascade(0.5, 0.5),
                        AuxChannels(pr.identity_channel(2), pr.constant_channel(2)),
                        TypicalityParams(0.75, 0.1), 2)
    return an.build_exact_model(generate_codebook(spec))


# ----------------------------------------------------------- model basics

def test_model_mass_and_shapes(seeded_n6):
    m = seeded_n6
    assert m.total_mass() == pytest.approx(1.0, abs=1e-9)
    assert m.kernel.sum(axis=1) == pytest.approx(np.ones(m.px.size))
    assert m.py_x.sum(axis=1) == pytest.approx(np.ones(m.px.size))


def test_cap_exceeded(spec_factory):
    cb = generate_codebook(spec_factory(n=6))
    with pytest.raises(an.ExactCapExceeded):
        an.build_exact_model(cb, cell_cap=1000)


def test_brute_force_agrees_on_noiseless(spec_factory):
    m = an.build_exact_model(generate_codebook(spec_factory(n=4, seed=1)))
    err, mfap = brute_force(m.cb, 2)
    assert an.exact_error_probability(m).max_error == pytest.approx(err, abs=1e-10)
    assert an.exact_mfap(m).mfap == pytest.approx(mfap, abs=1e-10)


def test_brute_force_agrees_on_erasures(erased_n4):
    m = erased_n4
    assert m.pass_.any()
    err, mfap = brute_force(m.cb, 2)
    assert an.exact_error_probability(m).max_error == pytest.approx(err, abs=1e-10)
    assert an.exact_mfap(m).mfap == pytest.approx(mfap, abs=1e-10)


def test_error_matches_materialized_joint(erased_n4):
    m = erased_n4
    for w in range(2):
        j = an.materialize(m, w, decoder=True)
        assert j.mass.sum() == pytest.approx(1.0, abs=1e-9)
        assert an.joint_error(j, w) == pytest.approx(
            an.exact_error_probability(m).per_user[w], abs=1e-12)


def test_error_decomposition(seeded_n6, erased_n4):
    for m in (seeded_n6, erased_n4):
        e = an.exact_error_probability(m)
        assert e.max_error == pytest.approx(e.p_wrong_user + e.p_wrong_key, abs=1e-12)


def test_error_reproducible(spec_factory):
    a = an.exact_error_probability(an.build_exact_model(generate_codebook(spec_factory(n=6))))
    b = an.exact_error_probability(an.build_exact_model(generate_codebook(spec_factory(n=6))))
    assert a == b


# ------------------------------------------------------ hand-built models

def test_single_user_noiseless_error_is_uncovered_mass(hand_factory):
    cb = hand_factory([[0, 1], [1, 0]], [0, 1], [0, 0], 2, 1, q=0.0)
    m = an.build_exact_model(cb)
    # 01 and 10 decode; 00 and 11 are not typical and are never accepted
    assert an.exact_error_probability(m).max_error == pytest.approx(0.5, abs=1e-15)


def test_noiseless_all_covered_is_error_free():
    spec = CodebookSpec(2, 1, 0.0,
                        erasure_cascade(0.0, 0.5).__class__(pr.Pmf(np.array([1.0, 0.0])),
                                                            erasure_cascade(0.0, 0.5).pyz_given_x,
                                                            3, 3),
                        AuxChannels(pr.identity_channel(2), pr.constant_channel(2)),
                        TypicalityParams(0.5, 0.25), 0)
    from idauth_lab.codec import LayeredCodebook
    cb = LayeredCodebook(spec, np.zeros((1, 2), np.uint8), [0],
                         np.array([[[0, 0]]], np.uint8), [0], [0], 1, 1, 1)
    m = an.build_exact_model(cb)
    assert an.exact_error_probability(m).max_error == 0.0
    mc = an.monte_carlo(cb, 300, seed=1)
    assert mc.errors == 0 and mc.covering_failures == 0


def test_single_codeword_gives_constant_key(hand_factory):
    cb = hand_factory([[0, 1]], [0], [0], 1, 1)
    m = an.build_exact_model(cb)
    assert an.exact_key_metrics(m) == (0.0, 0.0)


def test_independent_measurement_error_bound(spec_factory):
    spec = spec_factory(n=4, p=1.0, q=1.0)
    m = an.build_exact_model(generate_codebook(spec, overrides={"n_s": 2}))
    err = an.exact_error_probability(m).max_error
    assert err >= 1 - 1 / (2 * 2) - 1e-12


def test_leakage_examples(spec_factory):
    v_const = AuxChannels(pr.constant_channel(2), pr.constant_channel(1))
    spec = spec_factory(n=4, q=1.0, aux=v_const)
    m = an.build_exact_model(generate_codebook(spec, overrides={"n_s": 1}))
    assert an.exact_leakage(m)[1] == pytest.approx(0.0, abs=1e-12)
    open_z = an.build_exact_model(generate_codebook(spec_factory(n=4, q=0.0),
                                                    overrides={"n_s": 2}))
    assert an.exact_leakage(open_z)[1] == pytest.approx(1.0, abs=1e-12)


def test_seeded_metrics_ranges(seeded_n6):
    m = seeded_n6
    rates, worst = an.exact_leakage(m)
    assert len(rates) == 2 and 0 <= worst <= 1.0 + 1e-12
    h_s, leak_s = an.exact_key_metrics(m)
    assert 0 <= leak_s < h_s <= math.log2(m.n_keys) / m.n + 1e-12


def test_lemma1_margin(seeded_n6, spec_factory):
    # U constant: J is fixed, so H(Z^n|J) = n H(Z) and the margin is n * delta
    assert an.lemma1_check(seeded_n6) == pytest.approx(6 * 0.25, abs=1e-9)
    deg = an.build_exact_model(generate_codebook(spec_factory(n=4, q=1.0),
                                                 overrides={"n_s": 1}))
    assert an.lemma1_check(deg) == pytest.approx(4 * 0.25, abs=1e-12)


# ----------------------------------------------------------------- attack

def test_mfap_one_key(hand_factory):
    cb = hand_factory([[0, 1], [1, 0]], [0, 0], [0, 0], 1, 1)
    m = an.build_exact_model(cb)
    r = an.exact_mfap(m)
    assert r.mfap == pytest.approx(1.0, abs=1e-15) and r.exponent == pytest.approx(0.0)
    assert an.map_attack(m) == pytest.approx(1.0, abs=1e-15)


def test_mfap_uniform_independent_key(hand_factory):
    cb = hand_factory([[0, 1], [1, 0], [0, 0], [1, 1]], [0] * 4, [0, 1, 0, 1], 1, 2)
    m = an.build_exact_model(cb)
    assert m.p_ds.sum(axis=0) == pytest.approx([0.5, 0.5], abs=1e-15)
    assert an.exact_key_metrics(m) == pytest.approx((0.5, 0.0), abs=1e-12)
    assert an.exact_mfap(m).mfap == pytest.approx(0.5, abs=1e-15)


def test_map_attack_when_z_reveals_key(hand_factory):
    cb = hand_factory([[0, 1], [1, 0]], [0, 0], [0, 1], 1, 2, q=0.0)
    m = an.build_exact_model(cb)
    # make every source enroll deterministically: 00 -> key 0, 11 -> key 1
    pxds = m.pxds.copy()
    pxds[0] = 0
    pxds[0, 0, 0] = m.px[0]
    pxds[3] = 0
    pxds[3, 0, 1] = m.px[3]
    rigged = dataclasses.replace(m, pxds=pxds)
    assert an.map_attack(rigged) == pytest.approx(1.0, abs=1e-15)
    assert an.exact_mfap(rigged).mfap == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_attack_ordering_seeded(spec_factory, seed):
    m = an.build_exact_model(generate_codebook(spec_factory(n=6, seed=seed)))
    r = an.exact_mfap(m)
    assert r.map_bound == pytest.approx(an.map_attack(m), abs=1e-15)
    assert r.map_bound <= r.mfap + 1e-12
    assert 1 / m.n_keys - 1e-12 <= r.mfap <= 1.0
    assert r.mfap >= r.guess_probability - 1e-12
    assert r.h_min == pytest.approx(-math.log2(r.guess_probability))


def test_map_equals_mfap_single_user_deterministic_decoder(hand_factory):
    cb = hand_factory([[0, 1], [1, 0], [0, 0], [1, 1]], [0] * 4, [0, 1, 0, 1], 1, 2,
                      q=0.5)
    m = an.build_exact_model(cb)
    assert set(np.unique(m.keyd)) <= {0.0, 1.0}
    assert an.map_attack(m) == pytest.approx(an.exact_mfap(m).mfap, abs=1e-15)


def test_mfap_threads_identical(seeded_n6):
    a = an.exact_mfap(seeded_n6, threads=1)
    b = an.exact_mfap(seeded_n6, threads=3)
    assert a.to_dict() == b.to_dict()


def test_best_response_dump(erased_n4):
    r = an.exact_mfap(erased_n4, dump_best_response=True)
    text = an.best_response_csv(r)
    lines = text.strip().split("\n")
    assert lines[0] == "descriptions,z,y,accept_prob"
    assert math.fsum(float(l.split(",")[3]) for l in lines[1:]) == pytest.approx(r.mfap)
    with pytest.raises(ValueError):
        an.best_response_csv(an.exact_mfap(erased_n4))


# ----------------------------------------------------------------- Markov

def test_markov_suite_clean(seeded_n6, erased_n4):
    for m in (seeded_n6, erased_n4):
        assert an.markov_chain_suite(m).max() <= 1e-9


def test_markov_suite_detects_corruption(erased_n4):
    bad = an.markov_chain_suite(erased_n4, corrupt=True)
    assert bad.chain_i > 1e-3


def test_markov_needs_two_users(hand_factory):
    m = an.build_exact_model(hand_factory([[0, 1]], [0], [0], 1, 1))
    with pytest.raises(ValueError):
        an.markov_chain_suite(m)


# ------------------------------------------------------------ Monte Carlo

def test_monte_carlo_matches_exact(seeded_n6):
    mc = an.monte_carlo(seeded_n6.cb, 1500, seed=3)
    exact = an.exact_error_probability(seeded_n6).max_error
    assert abs(mc.error_rate - exact) <= 2 * mc.ci95_halfwidth
    assert mc.ci95_halfwidth > 0
    cover = float(seeded_n6.px[~seeded_n6.covered].sum())
    assert abs(mc.covering_failure_rate - cover) < 0.03


def test_monte_carlo_deterministic(seeded_n6):
    a = an.monte_carlo(seeded_n6.cb, 200, seed=9)
    b = an.monte_carlo(seeded_n6.cb, 200, seed=9, threads=3)
    assert a == b
    with pytest.raises(ValueError):
        an.monte_carlo(seeded_n6.cb, 0, seed=1)


def test_wilson_halfwidth():
    # textbook value for 10 successes in 100 trials
    assert an.wilson_halfwidth(10, 100) == pytest.approx(0.0594, abs=5e-4)


def test_metrics_report_json(seeded_n6):
    rep = an.metrics_report(seeded_n6, attack=False)
    assert rep.compression_rate == pytest.approx(
        math.log2(seeded_n6.cb.n_m1 * seeded_n6.cb.n_m2) / 6)
    assert rep.identification_rate == pytest.approx(1 / 6)
    assert '"max_error"' in rep.to_json()


@pytest.mark.slow
def test_longer_block_beats_exact_n8():
    from conftest import noiseless_spec
    exact8 = an.exact_error_probability(
        an.build_exact_model(generate_codebook(noiseless_spec(n=8)))).max_error
    mc = an.monte_carlo(generate_codebook(noiseless_spec(n=16)), 80, seed=0)
    # the whole 95% interval sits below the n=8 value
    assert mc.error_rate + mc.ci95_halfwidth < exact8
