import numpy as np
import pytest
from hypothesis import given, strategies as st

from cocompact.axioms import _same
from cocompact.group import apply, invert, shift
from cocompact.lattice import EnergySpec, GridFunction, LatticeError, MassSpec, eval_F, refine
from cocompact.weak import (FunctionSequence, NotConvergent, TestFunctionalFamily, cocompactness_check,
                            d_weak_defect, estimate_weak_limit, pairing, reference_pairings, scan,
                            write_trace_csv)

SPEC = EnergySpec(2.0, 1)
FAM = TestFunctionalFamily(1, radius=2.0, scales=2, q=4.0 / 3.0, h0=0.5)


def phi(x):
    return np.clip(1.0 - (x / 2.0) ** 2, 0.0, None) ** 3


def bump(centre=0.0, amp=1.0, h0=0.5, level=0):
    return GridFunction.from_function(lambda x: amp * phi(x - centre), centre - 2, centre + 2, level, h0)


def spreading(k, h0=0.5):
    return GridFunction.from_function(lambda x: phi(x / k) / np.sqrt(k), -2 * k, 2 * k, 0, h0)


@st.composite
def small_functions(draw):
    rng = np.random.default_rng(draw(st.integers(0, 2 ** 32 - 1)))
    n = int(rng.integers(1, 15))
    return GridFunction(rng.standard_normal(n), (int(rng.integers(-10, 10)),), 0, 0.5)


def test_pairing_zero_and_disjoint():
    t = FAM.member(0, 0)
    assert pairing(GridFunction.zeros(1, 0, 0.5), t) == 0.0
    assert pairing(GridFunction([1.0], (100,), 0, 0.5), t) == 0.0


def test_tent_self_pairing_closed_form():
    # unnormalised tent with n nodes per side: h * (1 + (n-1)(2n-1)/(3n))
    for n, h0 in ((4, 0.5), (16, 0.125), (7, 1.0)):
        tent = GridFunction.from_function(lambda x: np.clip(1 - np.abs(x) / (n * h0), 0, None), -n * h0, n * h0, 0, h0)
        assert pairing(tent, tent) == pytest.approx(h0 * (1 + (n - 1) * (2 * n - 1) / (3 * n)), rel=1e-10)
    # with q' = 2 the family normalisation makes every member a unit vector
    fam2 = TestFunctionalFamily(1, radius=2.0, scales=3, q=2.0, h0=0.5)
    for i in range(3):
        t = fam2.member(i, 2)
        assert pairing(t, t) == pytest.approx(1.0, rel=1e-10)


@given(small_functions(), small_functions(), st.floats(-10, 10))
def test_pairing_bilinear(u, v, a):
    t = FAM.member(1, 0)
    lhs = pairing(u * a + v, t)
    rhs = a * pairing(u, t) + pairing(v, t)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12 * (1 + abs(a)))


def test_pairing_reconciles_levels():
    t = FAM.member(0, 0)
    u = refine(bump(), 2)
    assert pairing(u, t) == pytest.approx(pairing(u, refine(t, 2)), rel=1e-14)


def test_defect_of_zero():
    assert d_weak_defect(GridFunction.zeros(1, 0, 0.5), FAM, SPEC) == 0.0


@given(small_functions(), st.integers(-200, 200))
def test_defect_shift_invariant(u, y):
    assert d_weak_defect(apply(shift(y), u, SPEC), FAM, SPEC) == pytest.approx(d_weak_defect(u, FAM, SPEC),
                                                                              rel=1e-12)


@given(small_functions())
def test_defect_zero_iff_all_pairings_zero(u):
    d = d_weak_defect(u, FAM, SPEC)
    # a nonzero finite array convolved with a tent is nonzero, so some recentering pairs nontrivially
    assert (d == 0.0) == u.is_zero()
    g = scan(u, FAM, SPEC).dislocation
    best = max(abs(x) for x in reference_pairings(apply(invert(g), u, SPEC), FAM))
    assert best == pytest.approx(d, rel=1e-12)


def test_defect_of_single_bump_is_location_independent():
    d0 = d_weak_defect(bump(0.0), FAM, SPEC)
    for c in (-37.5, 3.0, 120.0):
        assert d_weak_defect(bump(c), FAM, SPEC) == pytest.approx(d0, rel=1e-12)


def test_spreading_family_defect_strictly_decreasing():
    d = [d_weak_defect(spreading(k), FAM, SPEC) for k in range(1, 65)]
    assert all(b < a for a, b in zip(d, d[1:]))


def test_lemma_energy_to_zero_forces_defect_to_zero():
    from cocompact.axioms import lemma_suite
    checks = lemma_suite()
    assert len(checks) == 3 and all(c["verdict"] == "PASS" for c in checks)
    for c in checks:
        assert c["energies"][-1] < c["energies"][0]


def test_weak_limit_constant_tail():
    w = bump(amp=0.8)
    est = estimate_weak_limit([w] * 6, FAM)
    assert _same(est, w, 0.0)


def test_weak_limit_with_escaping_bump():
    w = bump(amp=0.8)
    tail = [w + bump(4.0 * k) for k in range(2, 12)]
    est = estimate_weak_limit(tail, FAM)
    np.testing.assert_allclose(reference_pairings(est, FAM), reference_pairings(w, FAM), atol=1e-3)


def test_weak_limit_oscillating_tail():
    with pytest.raises(NotConvergent) as exc:
        estimate_weak_limit([bump() * (-1) ** k for k in range(8)], FAM)
    assert "discrepancies" in exc.value.trace


def test_weak_limit_needs_four_members():
    with pytest.raises(LatticeError):
        estimate_weak_limit([bump()] * 3, FAM)


def test_cocompactness_cases(tmp_path):
    mass = MassSpec(4.0)
    ks = [1, 2, 4, 8, 16, 32, 64]
    zero = FunctionSequence(ks, [GridFunction.zeros(1, 0, 0.5)] * len(ks))
    assert cocompactness_check(zero, SPEC, mass, FAM)["verdict"] == "CONSISTENT"

    rep = cocompactness_check(FunctionSequence(ks, [spreading(k) for k in ks]), SPEC, mass, FAM)
    assert rep["verdict"] == "CONSISTENT"
    assert all(b < a for a, b in zip(rep["defect"], rep["defect"][1:]))
    assert all(b < a for a, b in zip(rep["target_norm"], rep["target_norm"][1:]))
    # small enough amplitude that both trends get under their tolerances by k = 64
    small = [GridFunction.from_function(lambda x, k=k: 0.3 * np.exp(-(x / k) ** 2 / 4) / np.sqrt(k),
                                        -12 * k, 12 * k, 0, 0.5) for k in ks]
    rep2 = cocompactness_check(FunctionSequence(ks, small), SPEC, mass,
                               TestFunctionalFamily(1, radius=1.0, scales=3, q=4 / 3, h0=0.5))
    assert rep2["note"] == "defect and target norm both vanish"
    assert rep2["defect"][-1] < 0.05 and rep2["target_norm"][-1] < 0.2
    write_trace_csv(rep, tmp_path / "trace.csv")
    assert (tmp_path / "trace.csv").read_text().splitlines()[0] == "k,defect,target_norm"

    fixed = cocompactness_check(FunctionSequence(ks, [bump()] * len(ks)), SPEC, mass, FAM)
    assert fixed["verdict"] == "CONSISTENT" and fixed["note"] == "premise-not-triggered"


def test_cocompactness_exponent_range():
    seq = FunctionSequence([1, 2, 3], [bump()] * 3)
    with pytest.raises(LatticeError):
        cocompactness_check(seq, EnergySpec(2.0, 3), MassSpec(7.0), FAM)


def test_unbounded_sequence_rejected():
    seq = FunctionSequence([1, 2], [bump(), bump(amp=1e6)])
    with pytest.raises(LatticeError):
        seq.check_bounded(SPEC)
    assert eval_F(bump(), SPEC) > 0
