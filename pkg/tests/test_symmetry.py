import numpy as np
import pytest
from hypothesis import given, strategies as st

from cocompact.group import Dislocation, DislocationSequence, apply, shift
from cocompact.lattice import EnergySpec, GridFunction, LatticeError, MassSpec, eval_F
from cocompact.symmetry import (EVEN, RADIAL, LatticeDomain, SymmetrySpec, ball_union,
                                conjugation_divergence_check, fixed_residual, flask_check, half_space,
                                liminf_set, novanish_compactness_test, project_symmetric, projection_report,
                                symmetric_compactness_test)
from cocompact.weak import FunctionSequence, TestFunctionalFamily

SPEC1 = EnergySpec(2.0, 1)
SPEC2 = EnergySpec(2.0, 2)
MASS = MassSpec(4.0)


def shifts(fn, ks=range(1, 13)):
    return DislocationSequence(ks, tuple(Dislocation(tuple(float(v) for v in np.atleast_1d(fn(k))), 0) for k in ks))


@st.composite
def functions(draw, dim):
    rng = np.random.default_rng(draw(st.integers(0, 2 ** 32 - 1)))
    shape = tuple(int(n) for n in rng.integers(1, 12, size=dim))
    return GridFunction(rng.standard_normal(shape), tuple(int(o) for o in rng.integers(-8, 8, size=dim)), 0, 0.5)


def b(x):
    return np.clip(1 - (x / 1.5) ** 2, 0, None) ** 2


# ---------------------------------------------------------------- projectors

def test_even_projector_examples():
    even = GridFunction.from_function(lambda x: np.exp(-x ** 2), -3, 3, 0, 0.25)
    p = project_symmetric(even, SymmetrySpec(EVEN))
    np.testing.assert_array_equal(p.samples, even.samples)
    odd = GridFunction.from_function(lambda x: x * np.exp(-x ** 2), -3, 3, 0, 0.25)
    assert np.max(np.abs(project_symmetric(odd, EVEN).samples)) == 0.0


@given(functions(1))
def test_even_projector_idempotent_and_commutes_with_reflection(u):
    p = project_symmetric(u, EVEN)
    assert fixed_residual(p, EVEN) <= 1e-12 * max(1.0, np.abs(p.samples).max())
    # reflecting u first gives the same projection
    refl = GridFunction(u.samples[::-1], (-(u.offset[0] + u.shape[0] - 1),), 0, u.h0)
    assert np.max(np.abs((project_symmetric(refl, EVEN) - p).samples)) <= 1e-15


@given(functions(2))
def test_radial_projector_idempotent(u):
    rep = projection_report(u, SymmetrySpec(RADIAL), SPEC2)
    assert rep["idempotence_residual"] <= 1e-12 * max(1.0, np.abs(u.samples).max())
    # an orthogonal projector never increases the L2 norm
    p = project_symmetric(u, RADIAL)
    assert np.sum(p.samples ** 2) <= np.sum(u.samples ** 2) * (1 + 1e-12)


def test_radial_projector_needs_two_dimensions():
    with pytest.raises(LatticeError):
        project_symmetric(GridFunction([1.0, 2.0]), RADIAL)
    with pytest.raises(LatticeError):
        SymmetrySpec("spherical")


def test_radial_function_is_fixed():
    # support inside the window; a cut-off Gaussian would not be radial on the lattice
    u = GridFunction.from_function(lambda x, y: radial_w(x / 2, y / 2), (-3, -3), (3, 3), 0, 0.25)
    assert fixed_residual(u, RADIAL) < 1e-12


# ---------------------------------------------------------------- flask

def test_flask_bounded_domain_passes_with_identity():
    dom = ball_union([[0.0, 0.0]], [5.0], scan_radius=20)
    out = flask_check(dom, [shifts(lambda k: (3 * k, 0))], search_radius=20)
    assert out["verdict"] == "PASS"
    assert out["families"][0] == {"liminf_size": 0, "verdict": "PASS", "witness": [0, 0]}


def test_flask_half_space_passes_with_witness():
    dom = half_space((1, 0), 0.0, scan_radius=10)
    out = flask_check(dom, [shifts(lambda k: (-2 * k, 0))], search_radius=10)
    fam = out["families"][0]
    assert out["verdict"] == "PASS" and fam["liminf_size"] > 0
    L = liminf_set(dom, shifts(lambda k: (-2 * k, 0)))
    assert dom.contains(L - np.array(fam["witness"])).all()


def test_flask_expanding_balls_fail():
    ks = range(1, 60)
    dom = ball_union([[k * k, 0.0] for k in ks], list(ks), scan_radius=12)
    fam = shifts(lambda k: (-k * k, 0), ks)
    out = flask_check(dom, [fam], search_radius=12)
    assert out["verdict"] == "FAIL" and "uncovered_point" in out["families"][0]
    # a search smaller than the scan window cannot certify a failure
    assert flask_check(dom, [fam], search_radius=3)["verdict"] == "INCONCLUSIVE"


def test_flask_rejects_bounded_nonconstant_family():
    dom = half_space((1,), 0.0)
    wobble = DislocationSequence(range(6), tuple(Dislocation((float(k % 2),), 0) for k in range(6)))
    with pytest.raises(LatticeError):
        flask_check(dom, [wobble], 10)


def test_domain_kinds():
    per = LatticeDomain("periodic", {"motif": [[0, 0]], "periods": [3, 3]})
    assert per.contains(np.array([[3, -6], [1, 0]])).tolist() == [True, False]
    fin = LatticeDomain("finite", {"points": [[1, 2], [3, 4]]})
    assert fin.contains(np.array([[3, 4], [0, 0]])).tolist() == [True, False]
    with pytest.raises(LatticeError):
        LatticeDomain("cone", {})


# ---------------------------------------------------------------- conjugation

def test_conjugation_examples():
    ks = range(1, 13)
    assert conjugation_divergence_check("identity", shifts(lambda k: k, ks))["verdict"] == "FAIL"
    out = conjugation_divergence_check("reflection", shifts(lambda k: k, ks), threshold=8.0)
    assert out["verdict"] == "PASS"
    assert [p[0] for p in out["conjugate_shifts"]] == [-2.0 * k for k in ks]
    rot = conjugation_divergence_check("rotation90", shifts(lambda k: (k, k), ks))
    assert rot["verdict"] == "PASS"
    # (R - I)(k, k) = (-2k, 0)
    assert rot["conjugate_shifts"][-1] == [-24.0, 0.0]


# ---------------------------------------------------------------- compactness tests

def test_constant_even_sequence_passes():
    w = GridFunction.from_function(b, -2, 2, 0, 0.25)
    seq = FunctionSequence(range(1, 9), [w] * 8)
    out = symmetric_compactness_test(seq, EVEN, SPEC1, MASS, TestFunctionalFamily(1, 2.0, 2, 4 / 3, h0=0.25))
    assert out["verdict"] == "PASS" and out["profiles"] == 1 and out["escaping_profiles"] == []


def test_mirror_bumps_give_caveat():
    ks = range(2, 14)
    seq = FunctionSequence(ks, [GridFunction.from_function(lambda x, k=k: b(x - k) + b(-x - k), -k - 2, k + 2, 0, 0.25)
                                for k in ks])
    out = symmetric_compactness_test(seq, EVEN, SPEC1, MASS, TestFunctionalFamily(1, 2.0, 2, 4 / 3, h0=0.25))
    assert out["verdict"] == "CAVEAT" and out["escaping_profiles"] and "finite symmetry group" in out["note"]


def test_symmetric_test_rejects_asymmetric_members():
    seq = FunctionSequence([1, 2, 3, 4], [GridFunction.from_function(lambda x: b(x - 1), -1, 3, 0, 0.25)] * 4)
    with pytest.raises(LatticeError):
        symmetric_compactness_test(seq, EVEN, SPEC1, MASS, TestFunctionalFamily(1, 2.0, 2, 4 / 3, h0=0.25))


def radial_w(x, y):
    return np.clip(1 - x ** 2 - y ** 2, 0, None) ** 2


@pytest.mark.parametrize("case", ["concentrating", "converging"])
def test_radial_sequences_have_no_escaping_profiles(case):
    fam = TestFunctionalFamily(2, 1.0, 2, 4 / 3, h0=0.25)
    if case == "concentrating":
        ks = range(1, 11)
        members = [GridFunction.from_function(lambda x, y, k=k: radial_w(2 ** k * x, 2 ** k * y),
                                              (-2.0 ** -k,) * 2, (2.0 ** -k,) * 2, k, 0.25) for k in ks]
    else:
        ks = range(1, 13)
        members = [GridFunction.from_function(lambda x, y, k=k: (1 + 2.0 ** -k) * radial_w(x, y), (-1, -1), (1, 1), 0, 0.25)
                   for k in ks]
    out = symmetric_compactness_test(FunctionSequence(ks, members), RADIAL, SPEC2, MASS, fam)
    assert out["verdict"] == "PASS" and out["escaping_profiles"] == []
    assert out["profiles"] == (0 if case == "concentrating" else 1)
    for table in out["dislocations"]:
        assert all(row[1] == [0, 0] and row[2] == 0 for row in table)


def novanish_members(ks, escape=False):
    out = []
    for k in ks:
        u = GridFunction.from_function(lambda x, k=k: b(x) + 2.0 ** -k * np.exp(-x ** 2), -2.5, 2.5, 0, 0.25)
        if escape:
            u = u + apply(shift(8 * k), GridFunction.from_function(b, -2, 2, 0, 0.25), SPEC1)
        out.append(u)
    return FunctionSequence(ks, out)


def test_novanish_cases():
    fam = TestFunctionalFamily(1, 2.0, 2, 4 / 3, h0=0.25)
    box = ((-3.0,), (3.0,))
    ks = range(1, 13)
    ok = novanish_compactness_test(novanish_members(ks), SPEC1, MASS, fam, box)
    assert ok["verdict"] == "PASS" and max(ok["outside_pairings"]) <= 1e-10
    assert all(y < x for x, y in zip(ok["distance_to_limit"][6:], ok["distance_to_limit"][7:]))
    bad = novanish_compactness_test(novanish_members(ks, escape=True), SPEC1, MASS, fam, box)
    assert bad["verdict"] == "HYPOTHESIS-VIOLATED"
    zero = FunctionSequence(ks, [GridFunction.zeros(1, 0, 0.25)] * len(ks))
    assert novanish_compactness_test(zero, SPEC1, MASS, fam, box)["verdict"] == "PASS"
    assert eval_F(novanish_members([1]).members[0], SPEC1) > 0
