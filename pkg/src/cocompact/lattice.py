"""Grid functions on a virtual unbounded dyadic lattice, and the functionals on them.

A :class:`GridFunction` stores samples over a finite index window.  The
window starts at an integer ``offset`` on the lattice of level ``level``,
whose spacing is ``h0 * 2**-level``.  Samples outside the window are zero.
Shifts and dyadic dilations only edit ``offset``/``level`` (plus one scalar
multiply), so group invariance of the energy is exact.
"""
import csv
import json
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from . import _kernels

INHOMOGENEOUS = "inhomogeneous"
HOMOGENEOUS = "homogeneous"


class LatticeError(ValueError):
    """Incompatible grids, bad specs or non-finite data."""


@dataclass(frozen=True, eq=False)
class GridFunction:
    samples: np.ndarray
    offset: tuple = None
    level: int = 0
    h0: float = 1.0

    def __post_init__(self):
        arr = np.array(self.samples, dtype=float)
        if arr.ndim == 0:
            raise LatticeError("samples must have at least one axis")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)
        off = (0,) * arr.ndim if self.offset is None else tuple(int(o) for o in np.atleast_1d(self.offset))
        if len(off) != arr.ndim:
            raise LatticeError(f"offset has {len(off)} entries for a {arr.ndim}-d window")
        object.__setattr__(self, "offset", off)
        object.__setattr__(self, "level", int(self.level))
        if not self.h0 > 0:
            raise LatticeError("base spacing h0 must be positive")
        object.__setattr__(self, "h0", float(self.h0))

    # -- geometry
    @property
    def dim(self):
        return self.samples.ndim

    @property
    def shape(self):
        return self.samples.shape

    @property
    def h(self):
        return self.h0 * 2.0 ** (-self.level)

    @property
    def upper(self):
        """Exclusive upper index bound of the window."""
        return tuple(o + s for o, s in zip(self.offset, self.shape))

    def coords(self, axis=0):
        """Physical coordinates of the window nodes along ``axis``."""
        return (self.offset[axis] + np.arange(self.shape[axis])) * self.h

    def mesh(self):
        axes = [self.coords(d) for d in range(self.dim)]
        return np.meshgrid(*axes, indexing="ij")

    def is_zero(self):
        return not np.any(self.samples)

    def check_finite(self):
        if not np.all(np.isfinite(self.samples)):
            raise LatticeError("non-finite samples")

    @classmethod
    def zeros(cls, dim, level=0, h0=1.0):
        return cls(np.zeros((1,) * dim), (0,) * dim, level, h0)

    @classmethod
    def from_function(cls, func, lower, upper, level=0, h0=1.0):
        """Sample ``func`` (vectorized over coordinate arrays) on nodes in [lower, upper]."""
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        h = h0 * 2.0 ** (-level)
        lo = np.ceil(lower / h - 1e-9).astype(int)
        hi = np.floor(upper / h + 1e-9).astype(int)
        axes = [np.arange(a, b + 1) * h for a, b in zip(lo, hi)]
        grids = np.meshgrid(*axes, indexing="ij")
        vals = func(*grids)
        return cls(np.broadcast_to(vals, grids[0].shape), tuple(lo), level, h0)

    # -- arithmetic
    def with_samples(self, samples):
        return GridFunction(samples, self.offset, self.level, self.h0)

    def __mul__(self, a):
        return self.with_samples(self.samples * float(a))

    __rmul__ = __mul__

    def __truediv__(self, a):
        return self.with_samples(self.samples / float(a))

    def __neg__(self):
        return self.with_samples(-self.samples)

    def __add__(self, other):
        return combine(self, other, 1.0)

    def __sub__(self, other):
        return combine(self, other, -1.0)

    def __repr__(self):
        return (f"GridFunction(dim={self.dim}, shape={self.shape}, offset={self.offset}, "
                f"level={self.level}, h0={self.h0})")

    # -- serialization
    def to_dict(self):
        return {
            "dim": self.dim,
            "shape": list(self.shape),
            "offset": list(self.offset),
            "level": self.level,
            "h0": self.h0,
            "samples": self.samples.ravel().tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        arr = np.asarray(d["samples"], dtype=float).reshape(d["shape"])
        if arr.ndim != d["dim"]:
            raise LatticeError("dim does not match shape")
        return cls(arr, tuple(d["offset"]), d["level"], d["h0"])

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(fh.read())


def export_csv(u, path, axis_index=None):
    """Write a 1D function, or a 2D function (full grid, or the row ``axis_index``), as CSV."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if u.dim == 1:
            w.writerow(["x", "u"])
            for x, v in zip(u.coords(0), u.samples):
                w.writerow([repr(float(x)), repr(float(v))])
        elif u.dim == 2 and axis_index is not None:
            w.writerow(["x", "u"])
            row = axis_index - u.offset[1]
            col = u.samples[:, row] if 0 <= row < u.shape[1] else np.zeros(u.shape[0])
            for x, v in zip(u.coords(0), col):
                w.writerow([repr(float(x)), repr(float(v))])
        elif u.dim == 2:
            w.writerow(["x", "y", "u"])
            xs, ys = u.coords(0), u.coords(1)
            for i, x in enumerate(xs):
                for j, y in enumerate(ys):
                    w.writerow([repr(float(x)), repr(float(y)), repr(float(u.samples[i, j]))])
        else:
            raise LatticeError("CSV export supports 1D and 2D functions only")


# ---------------------------------------------------------------- dyadic resampling

def refine(u, levels=1):
    """Resample ``u`` onto a finer level by multilinear interpolation.

    Coarse nodes coincide with every second fine node, so the piecewise
    multilinear interpolant (zero outside the window) is reproduced exactly.
    """
    if levels < 0:
        raise LatticeError("refine needs a non-negative level count")
    a = u.samples
    off = list(u.offset)
    for _ in range(levels):
        for ax in range(a.ndim):
            a = np.moveaxis(a, ax, 0)
            padded = np.concatenate([np.zeros((1,) + a.shape[1:]), a, np.zeros((1,) + a.shape[1:])])
            fine = np.empty((2 * padded.shape[0] - 1,) + a.shape[1:])
            fine[0::2] = padded
            fine[1::2] = 0.5 * (padded[:-1] + padded[1:])
            # drop the outer zero nodes: window becomes [2o-1, 2(o+n-1)+1]
            a = np.moveaxis(fine[1:-1], 0, ax)
            off[ax] = 2 * off[ax] - 1
    return GridFunction(a, tuple(off), u.level + levels, u.h0)


def restrict(u, levels=1):
    """Adjoint of :func:`refine` for the h^N-weighted pairing.

    For every coarse ``v``: pairing(u, refine(v)) == pairing(restrict(u), v),
    up to rounding.  Used to pair a fine function with a coarse tent without
    sampling the tent at the fine level.
    """
    if levels < 0:
        raise LatticeError("restrict needs a non-negative level count")
    a = u.samples
    off = list(u.offset)
    for _ in range(levels):
        for ax in range(a.ndim):
            a = np.moveaxis(a, ax, 0)
            # window [o, o+n-1] -> even-aligned [lo-1, hi+1] with lo, hi even
            lo = off[ax] - (off[ax] % 2)
            end = off[ax] + a.shape[0] - 1
            hi = end + (end % 2)
            pad = np.zeros((hi - lo + 3,) + a.shape[1:])
            pad[off[ax] - lo + 1: off[ax] - lo + 1 + a.shape[0]] = a
            coarse = 0.5 * (pad[1:-1:2] + 0.5 * (pad[0:-2:2] + pad[2::2]))
            a = np.moveaxis(coarse, 0, ax)
            off[ax] = lo // 2
    return GridFunction(a, tuple(off), u.level - levels, u.h0)


def to_level(u, level):
    if level < u.level:
        raise LatticeError(f"cannot move a level-{u.level} function down to level {level} exactly")
    return refine(u, level - u.level) if level > u.level else u


def coarsen_exact(u, rtol=1e-12):
    """Undo :func:`refine` as far as the samples allow; returns ``u`` if not a refinement."""
    while True:
        c = _coarsen_once(u, rtol)
        if c is None:
            return u
        u = c


def _coarsen_once(u, rtol):
    if u.is_zero():
        return None
    a = u.samples
    off = list(u.offset)
    # put the window on even fine nodes, padding with zeros
    pads = []
    for ax in range(a.ndim):
        lo = off[ax] % 2
        hi = (off[ax] + a.shape[ax] - 1) % 2
        pads.append((lo, hi))
        off[ax] -= lo
    a = np.pad(a, pads)
    coarse = a[tuple(slice(0, None, 2) for _ in range(a.ndim))]
    cand = GridFunction(coarse, tuple(o // 2 for o in off), u.level - 1, u.h0)
    back = refine(cand, 1)
    diff = combine(back, u, -1.0)
    scale = max(np.abs(a).max(), 1e-300)
    if np.abs(diff.samples).max() <= rtol * scale:
        return trim(cand)
    return None


def trim(u):
    """Shrink the window to the smallest box holding all nonzero samples."""
    a = u.samples
    nz = np.nonzero(a)
    if len(nz[0]) == 0:
        return GridFunction(np.zeros((1,) * a.ndim), (0,) * a.ndim, u.level, u.h0)
    lo = [int(ix.min()) for ix in nz]
    hi = [int(ix.max()) + 1 for ix in nz]
    sl = tuple(slice(a_, b_) for a_, b_ in zip(lo, hi))
    return GridFunction(a[sl], tuple(o + l for o, l in zip(u.offset, lo)), u.level, u.h0)


def reconcile(u, v):
    """Bring ``u`` and ``v`` to a common level (the finer one)."""
    if u.dim != v.dim:
        raise LatticeError(f"dimension mismatch: {u.dim} vs {v.dim}")
    if u.h0 != v.h0:
        ratio = np.log2(u.h0 / v.h0)
        if abs(ratio - round(ratio)) > 1e-12:
            raise LatticeError(f"spacings {u.h0} and {v.h0} are not dyadically related")
        # re-express v on u's base spacing
        v = GridFunction(v.samples, v.offset, v.level + int(round(ratio)), u.h0)
    lev = max(u.level, v.level)
    return to_level(u, lev), to_level(v, lev)


def embed(u, lower, upper):
    """Samples of ``u`` on the index box [lower, upper) (same level)."""
    out = np.zeros(tuple(b - a for a, b in zip(lower, upper)))
    src, dst = [], []
    for ax in range(u.dim):
        lo = max(lower[ax], u.offset[ax])
        hi = min(upper[ax], u.upper[ax])
        if hi <= lo:
            return out
        src.append(slice(lo - u.offset[ax], hi - u.offset[ax]))
        dst.append(slice(lo - lower[ax], hi - lower[ax]))
    out[tuple(dst)] = u.samples[tuple(src)]
    return out


def combine(u, v, b=1.0):
    """u + b*v on the union window, at the finer of the two levels."""
    u, v = reconcile(u, v)
    lower = tuple(min(a, c) for a, c in zip(u.offset, v.offset))
    upper = tuple(max(a, c) for a, c in zip(u.upper, v.upper))
    s = embed(u, lower, upper) + b * embed(v, lower, upper)
    return GridFunction(s, lower, u.level, u.h0)


# ---------------------------------------------------------------- specs

@dataclass(frozen=True)
class EnergySpec:
    """F(u) = ||grad u||_p^p (+ ||u||_p^p in inhomogeneous mode)."""
    p: float
    N: int
    mode: str = INHOMOGENEOUS

    def __post_init__(self):
        if not self.p > 1:
            raise LatticeError("p must exceed 1")
        if self.mode not in (INHOMOGENEOUS, HOMOGENEOUS):
            raise LatticeError(f"unknown energy mode {self.mode!r}")
        if self.mode == HOMOGENEOUS and not self.p < self.N:
            raise LatticeError("homogeneous mode needs p < N")

    @property
    def homogeneous(self):
        return self.mode == HOMOGENEOUS

    @property
    def critical_exponent(self):
        """p* = Np/(N-p), or inf when p >= N."""
        return self.N * self.p / (self.N - self.p) if self.p < self.N else np.inf

    @property
    def dilation_weight(self):
        """Exponent (N-p)/p of the critical dilation weight 2^(j(N-p)/p)."""
        return (self.N - self.p) / self.p


@dataclass(frozen=True)
class MassSpec:
    q: float

    def __post_init__(self):
        if not self.q > 1:
            raise LatticeError("q must exceed 1")

    def check_cocompact_range(self, spec):
        """Raise unless q is in the exponent range where the embedding is cocompact."""
        if spec.homogeneous:
            if abs(self.q - spec.critical_exponent) > 1e-12:
                raise LatticeError(f"homogeneous mode needs q = p* = {spec.critical_exponent}")
        elif not (spec.p < self.q < spec.critical_exponent):
            raise LatticeError(f"need p < q < p* ({spec.p} < {self.q} < {spec.critical_exponent})")


# ---------------------------------------------------------------- functionals

def eval_F(u, spec):
    if u.dim != spec.N:
        raise LatticeError(f"dimension mismatch: function is {u.dim}-d, spec is {spec.N}-d")
    u.check_finite()
    return _kernels.energy(u.samples, u.h, spec.p, not spec.homogeneous)


def grad_F(u, spec):
    """L2-type gradient of F: derivative with respect to the samples divided by h^N."""
    g = _kernels.energy_grad(np.ascontiguousarray(u.samples), u.h, spec.p, not spec.homogeneous)
    return g / u.h ** u.dim


def eval_G(u, spec):
    u.check_finite()
    return _kernels.power_sum(u.samples, spec.q) * u.h ** u.dim


def target_norm(u, spec):
    return eval_G(u, spec) ** (1.0 / spec.q)


@dataclass(frozen=True)
class PowerSumFunctional:
    """F(u) = sum_i c_i ||u||_{r_i}^{r_i}, e.g. ||u||_2^2 + ||u||_4^4 (convex, even, not homogeneous)."""
    coefficients: tuple
    exponents: tuple

    def __post_init__(self):
        if len(self.coefficients) != len(self.exponents) or not self.exponents:
            raise LatticeError("need one coefficient per exponent")
        if min(self.coefficients) <= 0 or min(self.exponents) < 1:
            raise LatticeError("coefficients must be positive and exponents at least 1")

    def sums(self, u):
        u.check_finite()
        return [c * _kernels.power_sum(u.samples, r) * u.h ** u.dim
                for c, r in zip(self.coefficients, self.exponents)]

    def __call__(self, u):
        return float(sum(self.sums(u)))


Functional = Union[EnergySpec, PowerSumFunctional, Callable[[GridFunction], float]]


def _scaled(u, F):
    """lam -> F(u / lam) without rebuilding grid functions where possible."""
    if isinstance(F, EnergySpec):
        if u.dim != F.N:
            raise LatticeError(f"dimension mismatch: function is {u.dim}-d, spec is {F.N}-d")
        u.check_finite()
        a, h, inhom = u.samples, u.h, not F.homogeneous
        return lambda lam: _kernels.energy(a / lam, h, F.p, inhom)
    if isinstance(F, PowerSumFunctional):
        terms = list(zip(F.sums(u), F.exponents))
        return lambda lam: sum(s / lam ** r for s, r in terms)
    return lambda lam: F(u / lam)


def gauge_norm(u, F, rtol=1e-12, max_iter=400):
    """Luxemburg-type norm: the unique lambda with F(u/lambda) = 1.

    ``F`` is an :class:`EnergySpec`, a :class:`PowerSumFunctional` or any
    even convex functional with F(0) = 0.  Bracketing by doubling/halving,
    then bisection.
    """
    if u.is_zero():
        return 0.0
    f = _scaled(u, F)
    lam = 1.0
    val = f(lam)
    if not np.isfinite(val):
        raise LatticeError("functional is not finite at the initial guess")
    it = 0
    if val > 1.0:
        lo = lam
        while val > 1.0:
            lo, lam = lam, lam * 2.0
            val = f(lam)
            it += 1
            if it > max_iter:
                raise LatticeError("gauge norm: failed to bracket (functional does not decrease)")
        hi = lam
    else:
        hi = lam
        while val <= 1.0:
            hi, lam = lam, lam / 2.0
            val = f(lam)
            it += 1
            if it > max_iter:
                raise LatticeError("gauge norm: failed to bracket (functional does not grow)")
        lo = lam
    # invariant: f(lo) > 1 >= f(hi), lo < hi
    tol = min(rtol, 1e-15)
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if f(mid) > 1.0:
            lo = mid
        else:
            hi = mid
        it += 1
        if it > max_iter:
            break
    return hi


def bl_defect(u, v, spec):
    """|G(u+v) - G(u) - G(v)| evaluated pointwise on the common grid."""
    u, v = reconcile(u, v)
    lower = tuple(min(a, c) for a, c in zip(u.offset, v.offset))
    upper = tuple(max(a, c) for a, c in zip(u.upper, v.upper))
    a = embed(u, lower, upper)
    b = embed(v, lower, upper)
    q = spec.q
    # a + b and |a|^q + |b|^q are commutative, so the result is symmetric bitwise
    pointwise = np.abs(a + b) ** q - (np.abs(a) ** q + np.abs(b) ** q)
    return float(abs(pointwise.sum()) * u.h ** u.dim)
