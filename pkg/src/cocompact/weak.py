"""Probes for weak and D-weak convergence.

The dual basis is replaced by a finite family of product tents (piecewise
multilinear, so dyadic refinement reproduces them exactly), normalized to
unit L^{q'} norm where q' is the dual of the target exponent.  The D-weak
defect is the largest recentered pairing found by scanning the group.
"""
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np

from . import _kernels
from .group import Dislocation, apply, dilation
from .lattice import (GridFunction, LatticeError, coarsen_exact, embed, eval_F, reconcile,
                      restrict, target_norm, to_level, trim)
from .trends import non_increasing, tail, tends_to_zero, ZERO


class NotConvergent(Exception):
    """A recentered tail shows no Cauchy trend."""

    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class TestFunctionalFamily:
    __test__ = False  # not a pytest class

    dim: int
    radius: float = 4.0
    scales: int = 3
    q: float = 2.0
    h0: float = 1.0
    shift_radius: Optional[float] = None
    dilation_range: int = 0

    def __post_init__(self):
        if self.scales < 1 or self.radius <= 0:
            raise LatticeError("empty test family")
        if self.shift_radius is not None and self.shift_radius < 0:
            raise LatticeError("empty search range")
        if self.dilation_range < 0:
            raise LatticeError("dilation range must be non-negative")

    @property
    def radii(self):
        return [self.radius * 2.0 ** (-i) for i in range(self.scales)]

    def member(self, i, level):
        """Tent number ``i`` sampled at ``level``, or None if the level is too coarse."""
        return _tent(self.dim, self.radii[i], self.q, self.h0, level)

    def member_size(self, i, level):
        """Sample count of member ``i`` at ``level``, without building it."""
        n = self.radii[i] / (self.h0 * 2.0 ** (-level))
        return (2 * int(round(n)) + 1) ** self.dim

    def min_level(self, i):
        """Coarsest level at which member ``i`` has at least one node per side."""
        n = self.radii[i] / self.h0
        return int(np.ceil(-np.log2(n) - 1e-12))

    def scan_levels(self, level):
        if self.dilation_range == 0:
            return [level]
        return list(range(self.dilation_range, -self.dilation_range - 1, -1))

    def to_dict(self):
        return dict(dim=self.dim, radius=self.radius, scales=self.scales, q=self.q, h0=self.h0,
                    shift_radius=self.shift_radius, dilation_range=self.dilation_range)


@lru_cache(maxsize=512)
def _tent(dim, r, q, h0, level):
    h = h0 * 2.0 ** (-level)
    n = r / h
    if n < 1 - 1e-12 or abs(n - round(n)) > 1e-9:
        return None
    n = int(round(n))
    x = np.arange(-n, n + 1)
    t1 = 1.0 - np.abs(x) / n
    t = t1
    for _ in range(dim - 1):
        t = np.multiply.outer(t, t1)
    qd = q / (q - 1.0)
    norm = (np.sum(np.abs(t) ** qd) * h ** dim) ** (1.0 / qd)
    return GridFunction(t / norm, (-n,) * dim, level, h0)


@dataclass
class FunctionSequence:
    indices: tuple
    members: list

    def __post_init__(self):
        self.indices = tuple(int(k) for k in self.indices)
        self.members = list(self.members)
        if len(self.indices) != len(self.members):
            raise LatticeError("index range does not match the members")
        if list(self.indices) != sorted(set(self.indices)):
            raise LatticeError("indices must be strictly increasing")

    @classmethod
    def from_generator(cls, fn, indices):
        indices = tuple(indices)
        return cls(indices, [fn(k) for k in indices])

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def check_bounded(self, spec, bound=1e8):
        energies = [eval_F(u, spec) for u in self.members]
        if not all(np.isfinite(energies)) or max(energies) > bound:
            raise LatticeError(f"sequence is not bounded in energy (sup F = {max(energies)})")
        return energies


# ---------------------------------------------------------------- pairing

def pairing(u, phi):
    """Discrete L2 pairing sum u*phi*h^N on the common (finer) level."""
    u, phi = reconcile(u, phi)
    lower = tuple(max(a, b) for a, b in zip(u.offset, phi.offset))
    upper = tuple(min(a, b) for a, b in zip(u.upper, phi.upper))
    if any(b <= a for a, b in zip(lower, upper)):
        return 0.0
    return float(np.sum(embed(u, lower, upper) * embed(phi, lower, upper)) * u.h ** u.dim)


TENT_CAP = 2 ** 20


def _member_for(fam, i, u):
    """Member i and a version of ``u`` on a common level.

    Normally the tent is sampled at ``u``'s level.  When that would exceed
    TENT_CAP samples, ``u`` is restricted (adjoint of refinement) to the
    finest level where the tent fits; pairings stay exact and translation
    scans then run on that coarser lattice.
    """
    lev = max(u.level, fam.min_level(i))
    while fam.member(i, lev) is None:
        lev += 1
        if lev > u.level + 40:
            raise LatticeError("irreconcilable spacings between function and test family")
    while fam.member_size(i, lev) > TENT_CAP and fam.member(i, lev - 1) is not None:
        lev -= 1
    t = fam.member(i, lev)
    if lev < u.level:
        return t, restrict(u, u.level - lev)
    return t, to_level(u, lev)


def reference_pairings(u, fam):
    """Pairings of ``u`` with every family member at the reference position."""
    out = []
    for i in range(fam.scales):
        t, uu = _member_for(fam, i, u)
        out.append(pairing(uu, t))
    return np.array(out)


# ---------------------------------------------------------------- scan

@dataclass
class ScanResult:
    value: float
    dislocation: Dislocation
    member: int
    signed: float
    candidates: list = field(default_factory=list)


def _scan_one(ut, t, fam, shift_level, j):
    """Best |pairing| of all lattice translates of ``ut`` against tent ``t``."""
    c = _kernels.correlate(np.ascontiguousarray(ut.samples), np.ascontiguousarray(t.samples))
    c = c * ut.h ** ut.dim
    mag = np.abs(c)
    lags = [np.arange(c.shape[ax]) - (t.shape[ax] - 1) + ut.offset[ax] - t.offset[ax]
            for ax in range(c.ndim)]
    if fam.shift_radius is not None:
        # translation part of the candidate dislocation, physical units
        grids = np.meshgrid(*[lg * ut.h0 * 2.0 ** (-shift_level) for lg in lags], indexing="ij")
        r2 = sum(g * g for g in grids)
        mag = np.where(r2 <= fam.shift_radius ** 2 + 1e-12, mag, -1.0)
    flat = int(np.argmax(mag))
    best = float(mag.ravel()[flat])
    if best < 0:
        return None
    idx = np.unravel_index(flat, c.shape)
    s_idx = [int(lags[ax][idx[ax]]) for ax in range(c.ndim)]
    # g^{-1} u = translate(-s) dilate(-j) u  =>  g = (s * 2^-(level + j), j)
    g = Dislocation(tuple(s * 2.0 ** (-shift_level) for s in s_idx), j)
    return best, g, float(c[idx])


def scan(u, fam, spec):
    """Argmax over scanned dislocations g and members phi of |<g^{-1} u, phi>|.

    Ties go to the lexicographically smallest (level, shift).
    """
    if u.dim != fam.dim:
        raise LatticeError("dimension mismatch between function and test family")
    if fam.dilation_range and not spec.homogeneous:
        raise LatticeError("dilation scan requested in inhomogeneous mode")
    cands = []
    if u.is_zero():
        g = Dislocation.identity(u.dim)
        return ScanResult(0.0, g, 0, 0.0, [(0.0, g, 0, 0.0)])
    u = trim(u)
    for lev in fam.scan_levels(u.level):
        j = u.level - lev
        ut = apply(dilation(-j, u.dim), u, spec) if j else u
        for i in range(fam.scales):
            if fam.dilation_range:
                t = fam.member(i, lev)
                if t is None:
                    continue
                uu = ut
            else:
                t, uu = _member_for(fam, i, ut)
            res = _scan_one(uu, t, fam, uu.level + j, j)
            if res is not None:
                cands.append((res[0], res[1], i, res[2]))
    if not cands:
        raise LatticeError("empty search range: no test functional fits the scanned levels")
    cands.sort(key=lambda c: (-c[0], c[1].key(), c[2]))
    best = cands[0]
    return ScanResult(best[0], best[1], best[2], best[3], cands)


def d_weak_defect(u, fam, spec):
    """Sup over scanned recenterings and family members of the pairing magnitude."""
    return scan(u, fam, spec).value


# ---------------------------------------------------------------- weak limits

def _common_box(funcs):
    lower = tuple(min(f.offset[ax] for f in funcs) for ax in range(funcs[0].dim))
    upper = tuple(max(f.upper[ax] for f in funcs) for ax in range(funcs[0].dim))
    return lower, upper


def _local_averages(vals, lower, coarse_step):
    """Hat-weighted averages of equally boxed arrays at every ``coarse_step``-th node."""
    r = coarse_step
    x = np.arange(-r, r + 1)
    hat1 = 1.0 - np.abs(x) / r
    hat = hat1
    for _ in range(vals[0].ndim - 1):
        hat = np.multiply.outer(hat, hat1)
    hat = hat / hat.sum()
    # first coarse node at or below the box corner, and one past the far end
    first = tuple(-((-lo) // r) - 1 for lo in lower)
    out = []
    for a in vals:
        pads = [(lo - f * r, 2 * r) for lo, f in zip(lower, first)]
        big = np.pad(a, pads)
        c = _kernels.correlate(np.ascontiguousarray(big), hat)
        # c[m + r] is the average centred on padded node m; coarse nodes are every r-th
        sl = tuple(slice(r, r + big.shape[ax], r) for ax in range(big.ndim))
        out.append(c[sl])
    return out, first


GROWTH_FLOOR = 1.0


def _unstable(vals, pointwise_tol):
    """Increments between consecutive members grow somewhere, or the last one is too large.

    Growth is only counted once an increment exceeds GROWTH_FLOOR * pointwise_tol
    of the largest value; below that it is rounding or far-tail noise.
    """
    scale = np.abs(vals[-1]).max()
    incs = [np.abs(b - a) for a, b in zip(vals[:-1], vals[1:])]
    bad = incs[-1] > pointwise_tol * scale
    floor = max(GROWTH_FLOOR * pointwise_tol, ZERO) * scale
    for d0, d1 in zip(incs[:-1], incs[1:]):
        bad |= (d1 > d0 + ZERO * scale) & (d1 > floor)
    return bad


def _stable_mask(last, members, pointwise_tol):
    """Nodes of ``last`` whose value settles along the tail.

    Members are compared at the finest level, node by node, and through
    hat-weighted local averages at the coarsest level of the tail.  A node
    is stable when, in both views, the increments between consecutive
    members never grow and the final increment is below ``pointwise_tol``
    times the largest value.  Escaping parts produce growing increments
    where they arrive; concentrating parts keep their peak value but their
    local averages decay too slowly relative to their size.
    """
    fine_level = max(m.level for m in members)
    fine = [to_level(m, fine_level) for m in members]
    lower, upper = _common_box(fine)
    vals = [embed(f, lower, upper) for f in fine]
    if not np.abs(vals[-1]).max():
        return None
    unstable = _unstable(vals, pointwise_tol)
    r = 2 ** (fine_level - min(m.level for m in members))
    if r > 1:
        avgs, first = _local_averages(vals, lower, r)
        if np.abs(avgs[-1]).max():
            bad = np.pad(_unstable(avgs, pointwise_tol), 1)
            # fine node X lies in the open support of the coarse hats at floor(X/r) and ceil(X/r)
            for ax in range(len(lower)):
                X = lower[ax] + np.arange(vals[0].shape[ax])
                lo = np.floor_divide(X, r) - first[ax] + 1
                hi = -np.floor_divide(-X, r) - first[ax] + 1
                lo = np.clip(lo, 0, bad.shape[ax] - 1)
                hi = np.clip(hi, 0, bad.shape[ax] - 1)
                bad = np.maximum(np.take(bad, lo, axis=ax), np.take(bad, hi, axis=ax))
            unstable = unstable | bad
    last_f = to_level(last, fine_level)
    keep = ~embed(GridFunction(unstable.astype(float), lower, fine_level, last.h0),
                  last_f.offset, last_f.upper).astype(bool)
    return last_f, keep


def pairing_discrepancies(tail_members, fam):
    ref = reference_pairings(tail_members[-1], fam)
    return [float(np.max(np.abs(reference_pairings(v, fam) - ref))) for v in tail_members]


def estimate_weak_limit(members, fam, tol=1e-3, pointwise_tol=1e-3):
    """Weak limit of a recentered tail.

    Converged when the reference-pairing discrepancies against the final
    member are all below ``tol`` over the final half, or are non-increasing
    there with the one before the final member below ``tol``.  The returned limit is the final member
    with every node removed whose value does not settle along the final
    half (escaping or concentrating parts leave through these nodes).
    """
    members = list(members)
    if len(members) < 4:
        raise LatticeError("weak-limit estimation needs at least 4 tail members")
    disc = pairing_discrepancies(members, fam)
    t = tail(disc[:-1], 0.5)
    trace = {"discrepancies": disc}
    scale = max(ZERO, float(np.max(np.abs(reference_pairings(members[-1], fam)))))
    small = max(t) <= tol
    if not (small or (non_increasing(t, slack=1e-12 * scale) and t[-1] <= tol)):
        raise NotConvergent("recentered tail has no Cauchy trend", trace)
    last = members[-1]
    final_half = tail(members, 0.5)
    res = _stable_mask(last, final_half, pointwise_tol)
    if res is None:
        return GridFunction.zeros(last.dim, last.level, last.h0)
    last_f, keep = res
    w = last_f.with_samples(np.where(keep, last_f.samples, 0.0))
    return coarsen_exact(trim(w))


# ---------------------------------------------------------------- cocompactness

def cocompactness_check(seq, spec, mass, fam, defect_tol=0.05, norm_tol=0.2):
    """Does D-weak vanishing of the sequence come with vanishing in the target norm?"""
    mass.check_cocompact_range(spec)
    defects = [d_weak_defect(u, fam, spec) for u in seq.members]
    norms = [target_norm(u, mass) for u in seq.members]
    premise = tends_to_zero(defects, defect_tol)
    conclusion = tends_to_zero(norms, norm_tol)
    if not premise:
        verdict, note = "CONSISTENT", "premise-not-triggered"
    elif conclusion:
        verdict, note = "CONSISTENT", "defect and target norm both vanish"
    else:
        verdict, note = "VIOLATION", "defect vanishes but target norm does not"
    offending = []
    if verdict == "VIOLATION":
        t = tail(list(range(len(norms))), 0.5)
        offending = [seq.indices[i] for i in t if norms[i] > norm_tol]
    return {
        "verdict": verdict,
        "note": note,
        "indices": list(seq.indices),
        "defect": defects,
        "target_norm": norms,
        "defect_tol": defect_tol,
        "norm_tol": norm_tol,
        "offending_indices": offending,
    }


def write_trace_csv(report, path):
    import csv
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "defect", "target_norm"])
        for k, d, n in zip(report["indices"], report["defect"], report["target_norm"]):
            w.writerow([k, repr(d), repr(n)])
