import numpy as np
import pytest

from idauth_lab import probability as pr
from idauth_lab.codec import CodebookSpec, LayeredCodebook, TypicalityParams
from idauth_lab.region import AuxChannels, bsc_aux, erasure_cascade

IDENTITY_AUX = AuxChannels(pr.identity_channel(2), pr.constant_channel(2))

# Noiseless operating point used throughout: Y = X, Z erases half the bits,
# V = X, U constant.  Robust typicality needs a generous epsilon at n <= 8.
NOISELESS = dict(p=0.0, q=0.5, epsilon=0.75, delta=0.25)


def noiseless_spec(n=8, k_users=2, seed=0, **kw) -> CodebookSpec:
    o = {**NOISELESS, **kw}
    return CodebookSpec(n, k_users, 0.0, erasure_cascade(o["p"], o["q"]),
                        o.get("aux", IDENTITY_AUX),
                        TypicalityParams(o["epsilon"], o["delta"]), seed)


def hand_codebook(v_words, v_bin, v_sub, n_m2, n_s, *, k_users=1, p=0.0,
                  q=1.0, epsilon=0.5) -> LayeredCodebook:
    """Codebook with U constant and an explicit second-layer bank."""
    v = np.asarray(v_words, dtype=np.uint8)
    spec = CodebookSpec(v.shape[1], k_users, 0.0, erasure_cascade(p, q),
                        IDENTITY_AUX, TypicalityParams(epsilon, 0.25), 0)
    return LayeredCodebook(spec, np.zeros((1, v.shape[1]), np.uint8), [0],
                           v[None], np.asarray(v_bin), np.asarray(v_sub),
                           1, n_m2, n_s)


@pytest.fixture
def spec_factory():
    return noiseless_spec


@pytest.fixture
def hand_factory():
    return hand_codebook


@pytest.fixture
def bsc_spec():
    """The BSC(0.1) instance on the (0.3, 0.5) erasure cascade."""
    return CodebookSpec(8, 2, 0.0, erasure_cascade(0.3, 0.5), bsc_aux(0.1),
                        TypicalityParams(0.5, 0.05), 1)


# acceptance verdict lines, filled by tests/test_acceptance.py
RESULTS: list = []


def pytest_terminal_summary(terminalreporter):
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
