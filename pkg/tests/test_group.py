import numpy as np
import pytest
from hypothesis import given, strategies as st

from cocompact.group import (Dislocation, DislocationSequence, apply, compose, dilation, diverges,
                             group_distance, invert, relative, shift)
from cocompact.lattice import HOMOGENEOUS, EnergySpec, GridFunction, LatticeError, MassSpec, eval_F, eval_G
from cocompact.axioms import _same

INHOM = EnergySpec(2.0, 1)
HOM = EnergySpec(1.5, 2, HOMOGENEOUS)

ints = st.integers(-40, 40)
levels = st.integers(-3, 3)


@st.composite
def functions_2d(draw):
    rng = np.random.default_rng(draw(st.integers(0, 2 ** 32 - 1)))
    shape = tuple(int(n) for n in rng.integers(2, 9, size=2))
    return GridFunction(rng.standard_normal(shape), tuple(int(o) for o in rng.integers(-5, 5, 2)),
                        int(rng.integers(0, 3)), 0.5)


dislocations_2d = st.builds(lambda a, b, j: Dislocation((a / 4, b / 4), j), ints, ints, levels)
# multiples of 8 stay on the lattice for every level in range, so no refinement happens
lattice_dislocations_2d = st.builds(lambda a, b, j: Dislocation((8.0 * a, 8.0 * b), j), ints, ints, levels)


def test_identity_and_inverse_shift():
    u = GridFunction([1.0, 2.0, 3.0], (2,))
    assert apply(Dislocation.identity(1), u, INHOM) is u
    back = apply(shift(-7), apply(shift(7), u, INHOM), INHOM)
    assert back.offset == u.offset
    np.testing.assert_array_equal(back.samples, u.samples)


def test_dilation_example_scales_samples():
    u = GridFunction(np.random.default_rng(0).random((5, 4)), (0, 0), 0, 1.0)
    v = apply(dilation(1, 2), u, HOM)
    assert v.h == u.h / 2
    np.testing.assert_allclose(v.samples, u.samples * 2 ** (1 / 3), rtol=1e-15)
    assert eval_F(v, HOM) == pytest.approx(eval_F(u, HOM), rel=1e-12)


def test_dilation_rejected_in_inhomogeneous_mode():
    with pytest.raises(LatticeError):
        apply(dilation(1, 1), GridFunction([1.0]), INHOM)


def test_compose_shifts_adds():
    assert compose(shift((1.5, -2)), shift((0.5, 4))) == shift((2.0, 2.0))


@given(dislocations_2d, dislocations_2d, dislocations_2d)
def test_group_laws(a, b, c):
    ident = Dislocation.identity(2)
    assert compose(a, invert(a)) == ident
    assert compose(invert(a), a) == ident
    assert compose(a, ident) == a
    assert compose(compose(a, b), c) == compose(a, compose(b, c))


@given(dislocations_2d, dislocations_2d, functions_2d())
def test_action_is_a_homomorphism(a, b, u):
    assert _same(apply(compose(a, b), u, HOM), apply(a, apply(b, u, HOM), HOM))


@given(lattice_dislocations_2d, functions_2d())
def test_exact_invariance_homogeneous(g, u):
    v = apply(g, u, HOM)
    assert eval_F(v, HOM) == pytest.approx(eval_F(u, HOM), rel=1e-12)
    # q = p* = 6 makes the mass dilation invariant as well
    assert eval_G(v, MassSpec(6.0)) == pytest.approx(eval_G(u, MassSpec(6.0)), rel=1e-12)


@given(ints, st.integers(0, 2 ** 32 - 1))
def test_integer_shifts_are_bitwise_invariant(y, seed):
    u = GridFunction(np.random.default_rng(seed).standard_normal(9), (3,), 0, 0.5)
    v = apply(shift(y), u, INHOM)
    assert eval_F(v, INHOM) == eval_F(u, INHOM)
    assert eval_G(v, MassSpec(4.0)) == eval_G(u, MassSpec(4.0))


def test_group_distance_examples():
    ident = Dislocation.identity(1)
    assert group_distance(ident, ident) == 0.0
    assert group_distance(shift(6), ident, h0=0.25) == pytest.approx(1.5)


@given(dislocations_2d, dislocations_2d)
def test_group_distance_symmetric(a, b):
    assert group_distance(a, b, 0.5) == group_distance(b, a, 0.5)
    assert group_distance(a, a, 0.5) == 0.0


def test_diverges_examples():
    ks = range(1, 13)
    const = DislocationSequence.constant(ks, Dislocation.identity(1))
    assert not diverges(const)[0]
    assert diverges(DislocationSequence(ks, tuple(shift(k) for k in ks)))[0]
    ok, rep = diverges(DislocationSequence(ks, tuple(dilation(k, 2) for k in ks)))
    assert ok and rep["distances"] == [float(k) for k in ks]
    with pytest.raises(LatticeError):
        diverges(DislocationSequence((1, 2), (shift(1), shift(2))))


def test_separation_surrogate_on_diverging_shifts():
    ks = range(1, 13)
    g1 = DislocationSequence(ks, tuple(shift(k) for k in ks))
    g2 = DislocationSequence(ks, tuple(shift(-2 * k) for k in ks))
    assert diverges(relative(g1, g2))[0]


def test_serialisation_roundtrip():
    g = Dislocation((3.0, -0.5), 2)
    assert g.to_list() == [[3, -0.5], 2]
    assert Dislocation.from_list(g.to_list()) == g
    seq = DislocationSequence((1, 2, 3), (g, g, invert(g)))
    assert DislocationSequence.from_list(seq.to_list()) == seq
