"""Lattice shifts and critically weighted dyadic dilations.

A :class:`Dislocation` ``(shift, level)`` acts by

    (g u)(x) = 2**(level * (N - p) / p) * u(2**level * (x - shift * h0))

i.e. dilate about the origin, then translate by ``shift`` base units.  The
shift is a dyadic rational (exact in binary floating point), which keeps
the group closed under composition and inversion.
"""
from dataclasses import dataclass

import numpy as np

from .lattice import GridFunction, LatticeError, refine


def _clean(x):
    x = float(x)
    return 0.0 if x == 0 else x


@dataclass(frozen=True)
class Dislocation:
    shift: tuple
    level: int = 0

    def __post_init__(self):
        object.__setattr__(self, "shift", tuple(_clean(s) for s in np.atleast_1d(self.shift)))
        object.__setattr__(self, "level", int(self.level))

    @classmethod
    def identity(cls, dim):
        return cls((0.0,) * dim, 0)

    @property
    def dim(self):
        return len(self.shift)

    def is_identity(self):
        return self.level == 0 and not any(self.shift)

    def to_list(self):
        return [[int(s) if float(s).is_integer() else s for s in self.shift], self.level]

    @classmethod
    def from_list(cls, item):
        return cls(tuple(item[0]), item[1])

    def key(self):
        """Lexicographic (level, shift) key used for tie-breaking."""
        return (self.level,) + self.shift


def shift(y, level=0):
    return Dislocation(tuple(np.atleast_1d(y)), level)


def dilation(j, dim):
    return Dislocation((0.0,) * dim, j)


def compose(g1, g2):
    """The element acting as ``g1`` after ``g2``."""
    if g1.dim != g2.dim:
        raise LatticeError("dislocations of different dimension")
    f = 2.0 ** (-g1.level)
    return Dislocation(tuple(a + f * b for a, b in zip(g1.shift, g2.shift)), g1.level + g2.level)


def invert(g):
    f = 2.0 ** g.level
    return Dislocation(tuple(-f * s for s in g.shift), -g.level)


def apply(g, u, spec):
    """Act on a grid function.  Shifts edit the offset, dilations edit the level."""
    if g.dim != u.dim:
        raise LatticeError(f"dimension mismatch: {g.dim}-d dislocation, {u.dim}-d function")
    if g.level != 0 and not spec.homogeneous:
        raise LatticeError("dilations are not group elements in inhomogeneous mode")
    if g.is_identity():
        return u
    # offset change is 2**(L + j) * shift; refine until it is an integer vector
    extra = 0
    while True:
        move = [s * 2.0 ** (u.level + extra + g.level) for s in g.shift]
        if all(float(m).is_integer() for m in move):
            break
        extra += 1
        if extra > 60:
            raise LatticeError(f"shift {g.shift} is not a dyadic rational")
    if extra:
        u = refine(u, extra)
    samples = u.samples
    if g.level:
        samples = samples * 2.0 ** (g.level * spec.dilation_weight)
    offset = tuple(o + int(m) for o, m in zip(u.offset, move))
    return GridFunction(samples, offset, u.level + g.level, u.h0)


def group_distance(g1, g2, h0=1.0):
    """|j1 - j2| + physical distance between the two translation parts."""
    diff = np.subtract(g1.shift, g2.shift)
    return float(abs(g1.level - g2.level) + h0 * np.sqrt(np.dot(diff, diff)))


@dataclass(frozen=True)
class DislocationSequence:
    indices: tuple
    elements: tuple

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(int(k) for k in self.indices))
        object.__setattr__(self, "elements", tuple(self.elements))
        if len(self.indices) != len(self.elements):
            raise LatticeError("index range does not match the number of dislocations")

    def __len__(self):
        return len(self.elements)

    def __getitem__(self, i):
        return self.elements[i]

    def __iter__(self):
        return iter(self.elements)

    def at(self, k):
        return self.elements[self.indices.index(k)]

    @classmethod
    def constant(cls, indices, g):
        return cls(tuple(indices), tuple(g for _ in indices))

    def to_list(self):
        return [[k] + g.to_list() for k, g in zip(self.indices, self.elements)]

    @classmethod
    def from_list(cls, rows):
        return cls(tuple(r[0] for r in rows), tuple(Dislocation(tuple(r[1]), r[2]) for r in rows))


def relative(seq1, seq2):
    """The sequence invert(g_k^(1)) g_k^(2)."""
    return DislocationSequence(seq1.indices, tuple(compose(invert(a), b) for a, b in zip(seq1, seq2)))


def strictly_increasing(values):
    return all(b > a for a, b in zip(values[:-1], values[1:]))


def diverges(seq, threshold=8.0, h0=1.0):
    """Finite surrogate for g_k -> 0 weakly: distances from the identity grow without bound.

    True iff the distances are strictly increasing over the final third of
    the indices and the last one exceeds ``threshold`` (physical units).
    """
    if len(seq) < 3:
        raise LatticeError("need at least 3 indices to judge divergence")
    ident = Dislocation.identity(seq[0].dim)
    d = [group_distance(g, ident, h0) for g in seq]
    start = len(d) - max(2, int(np.ceil(len(d) / 3)))
    tail = d[start:]
    verdict = strictly_increasing(tail) and tail[-1] > threshold
    return verdict, {"distances": d, "tail_start": start, "threshold": threshold}
