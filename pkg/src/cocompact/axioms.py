"""Randomized and constructed checks of the dislocation-space axioms.

Each suite takes a seeded generator and the group action under test and
returns a list of checks.  The action is a parameter so a faulty one can
be injected and caught.
"""
import numpy as np

from . import group
from .decomposition import (DecompositionOptions, decompose, verify_additivity,
                            verify_energy_inequality)
from .group import Dislocation, compose, invert
from .lattice import (HOMOGENEOUS, EnergySpec, GridFunction, MassSpec, bl_defect, eval_F, eval_G,
                      gauge_norm, reconcile, embed, PowerSumFunctional)
from .trends import strictly_decreasing, tends_to_zero
from .weak import FunctionSequence, TestFunctionalFamily, d_weak_defect, reference_pairings


def check(name, verdict, tolerance, **data):
    return {"name": name, "verdict": verdict, "tolerance": tolerance, **data}


def _verdict(ok):
    return "PASS" if ok else "FAIL"


def _random_function(rng, dim, max_len=24, level=0, h0=0.5):
    shape = tuple(int(n) for n in rng.integers(3, max_len, size=dim))
    offset = tuple(int(o) for o in rng.integers(-10, 10, size=dim))
    return GridFunction(rng.standard_normal(shape), offset, level, h0)


COMPOSITE = PowerSumFunctional((1.0, 1.0), (2.0, 4.0))


def _same(u, v, rtol=1e-12):
    u, v = reconcile(u, v)
    lower = tuple(min(a, b) for a, b in zip(u.offset, v.offset))
    upper = tuple(max(a, b) for a, b in zip(u.upper, v.upper))
    a, b = embed(u, lower, upper), embed(v, lower, upper)
    return float(np.max(np.abs(a - b), initial=0.0)) <= rtol * max(1.0, float(np.max(np.abs(a))))


# ---------------------------------------------------------------- suites

def gauge_suite(rng, action=None, n_pairs=1000, n_consistency=100):
    spec = EnergySpec(2.0, 1)
    out = []
    for label, F in (("p-homogeneous", spec), ("composite", COMPOSITE)):
        worst_h = 0.0
        for _ in range(n_consistency):
            u = _random_function(rng, 1)
            c = float(rng.uniform(0.1, 10.0)) * (1 if rng.random() < 0.5 else -1)
            lu = gauge_norm(u, F)
            worst_h = max(worst_h, abs(gauge_norm(u * c, F) - abs(c) * lu) / (abs(c) * lu))
        out.append(check(f"gauge homogeneity ({label})", _verdict(worst_h <= 1e-12), 1e-12,
                         max_relative_error=worst_h))

        excess = 0.0
        for _ in range(n_pairs):
            u = _random_function(rng, 1, 12)
            v = _random_function(rng, 1, 12)
            lu, lv, luv = gauge_norm(u, F), gauge_norm(v, F), gauge_norm(u + v, F)
            excess = max(excess, (luv - lu - lv) / (lu + lv))
        out.append(check(f"gauge triangle inequality ({label})", _verdict(excess <= 1e-12), 1e-12,
                         pairs=n_pairs, max_relative_excess=excess))

        worst = 0.0
        fF = F if callable(F) else (lambda w: eval_F(w, spec))
        for _ in range(n_consistency):
            u = _random_function(rng, 1)
            worst = max(worst, abs(fF(u / gauge_norm(u, F)) - 1.0))
        out.append(check(f"gauge consistency ({label})", _verdict(worst <= 1e-10), 1e-10,
                         samples=n_consistency, max_error=worst))
    return out


def invariance_suite(rng, action=None, n_samples=100):
    act = action or group.apply
    out = []
    setups = [
        (EnergySpec(2.0, 1), MassSpec(4.0), False),
        (EnergySpec(1.5, 2, HOMOGENEOUS), MassSpec(6.0), True),
    ]
    for spec, mass, dilate in setups:
        worst_f = worst_g = 0.0
        laws = True
        for _ in range(n_samples):
            u = _random_function(rng, spec.N, 10 if spec.N == 2 else 24)
            # shifts stay on the lattice of u's level after any dilation in range
            j = int(rng.integers(-2, 3)) if dilate else 0
            y = tuple(float(s) for s in rng.integers(-16, 16, size=spec.N) * (4.0 if dilate else 1.0))
            g = Dislocation(y, j)
            gu = act(g, u, spec)
            fu, gu_mass = eval_F(u, spec), eval_G(u, mass)
            worst_f = max(worst_f, abs(eval_F(gu, spec) - fu) / fu)
            worst_g = max(worst_g, abs(eval_G(gu, mass) - gu_mass) / gu_mass)
            y2 = tuple(float(s) for s in rng.integers(-16, 16, size=spec.N) / 2.0)  # may need refinement
            g2 = Dislocation(y2, int(rng.integers(-2, 3)) if dilate else 0)
            laws &= _same(act(compose(g, g2), u, spec), act(g, act(g2, u, spec), spec))
            laws &= _same(act(compose(g, invert(g)), u, spec), u)
        tag = f"N={spec.N}, {spec.mode}"
        out.append(check(f"F-invariance ({tag})", _verdict(worst_f <= 1e-12), 1e-12,
                         max_relative_error=worst_f))
        out.append(check(f"G-invariance ({tag})", _verdict(worst_g <= 1e-12), 1e-12,
                         max_relative_error=worst_g))
        out.append(check(f"composition laws ({tag})", _verdict(laws), 1e-12))
    return out


def _bump_exp(x):
    return np.exp(-np.abs(x))


def bl_suite(rng, action=None, n_pairs=100):
    mass = MassSpec(4.0)
    h0 = 0.125
    u = GridFunction.from_function(_bump_exp, -40, 40, 0, h0)
    seps = [2 ** m for m in range(1, 7)]
    defects = []
    for s in seps:
        v = GridFunction.from_function(lambda x, s=s: _bump_exp(x - s), s - 40, s + 40, 0, h0)
        defects.append(bl_defect(u, v, mass))
    ok = strictly_decreasing(defects) and defects[-1] < 1e-6
    out = [check("Brezis-Lieb decay (exponential tails, q=4)", _verdict(ok), 1e-6,
                 separations=seps, defects=defects)]
    sym = True
    for _ in range(n_pairs):
        a, b = _random_function(rng, 1), _random_function(rng, 1)
        sym &= bl_defect(a, b, mass) == bl_defect(b, a, mass)
    out.append(check("Brezis-Lieb defect symmetry", _verdict(sym), 0.0, pairs=n_pairs))
    return out


def _phi(x):
    return np.clip(1.0 - (x / 2.0) ** 2, 0.0, None) ** 3


def newii_suite(rng, action=None):
    """Bounded dislocations map a D-weakly null sequence to a weakly null one."""
    act = action or group.apply
    spec = EnergySpec(2.0, 1)
    h0 = 0.5
    fam = TestFunctionalFamily(1, radius=2.0, scales=2, q=4.0 / 3.0, h0=h0)
    ks = [1, 2, 4, 8, 16, 32, 64]
    members = [GridFunction.from_function(lambda x, k=k: _phi(x / k) / k, -2 * k, 2 * k, 0, h0) for k in ks]
    defects = [d_weak_defect(u, fam, spec) for u in members]
    shifts = [float(s) for s in rng.integers(-6, 7, size=len(ks))]
    moved = [act(Dislocation((s,), 0), u, spec) for s, u in zip(shifts, members)]
    pair = [float(np.max(np.abs(reference_pairings(v, fam)))) for v in moved]
    tol = 0.05
    ok = tends_to_zero(defects, tol) and tends_to_zero(pair, tol)
    return [check("bounded dislocations preserve weak nullity", _verdict(ok), tol,
                  indices=ks, shifts=shifts, defects=defects, pairings=pair)]


def lemma_families(h0=0.5):
    """Three sequences with F(u_k) -> 0, as (name, indices, members)."""
    ks = [1, 2, 4, 8, 16, 32, 64]
    amp = [GridFunction.from_function(lambda x, k=k: _phi(x) / k, -2, 2, 0, h0) for k in ks]
    spread = [GridFunction.from_function(lambda x, k=k: _phi(x / k) / k, -2 * k, 2 * k, 0, h0)
              for k in ks]
    escape = [GridFunction.from_function(lambda x, k=k: 2.0 ** -k * _phi(x - 5 * k), 5 * k - 2, 5 * k + 2,
                                         0, h0) for k in ks]
    return [("decaying amplitude", ks, amp), ("spreading", ks, spread), ("escaping and decaying", ks, escape)]


def lemma_suite(rng=None, action=None, tol=0.05):
    """Energy tending to zero forces the D-weak defect to zero."""
    spec = EnergySpec(2.0, 1)
    fam = TestFunctionalFamily(1, radius=2.0, scales=2, q=4.0 / 3.0, h0=0.5)
    out = []
    for name, ks, members in lemma_families(fam.h0):
        energies = [eval_F(u, spec) for u in members]
        defects = [d_weak_defect(u, fam, spec) for u in members]
        ok = tends_to_zero(energies, tol) and tends_to_zero(defects, tol)
        out.append(check(f"energy to zero forces defect to zero ({name})", _verdict(ok), tol,
                         indices=ks, energies=energies, defects=defects))
    return out


def two_bump_sequence(a=1.0, b=0.7, h0=0.25, ks=range(1, 13)):
    def member(k):
        s = 4 * k * h0
        lo, hi = -2.0, s + 2.0
        return GridFunction.from_function(lambda x: a * _phi(x) + b * _phi(x - s), lo, hi, 0, h0)
    return FunctionSequence.from_generator(member, ks)


def wbl_suite(rng=None, action=None):
    spec = EnergySpec(2.0, 1)
    seq = two_bump_sequence()
    fam = TestFunctionalFamily(1, radius=4.0, scales=3, q=4.0 / 3.0, h0=0.25)
    res = decompose(seq, spec, fam, DecompositionOptions())
    ineq = verify_energy_inequality(res, seq, spec)
    add = verify_additivity(res)
    return [
        check("weak Brezis-Lieb energy inequality", ineq["verdict"], ineq["tolerance"],
              slack=ineq["slack"], n_profiles=res.n_profiles),
        check("asymptotic energy additivity", add["verdict"], add["tolerance"], defects=add["defects"]),
    ]


SUITES = {
    "gauge": gauge_suite,
    "invariance": invariance_suite,
    "brezis-lieb": bl_suite,
    "newii": newii_suite,
    "lemma": lemma_suite,
    "wbl": wbl_suite,
}


def verify_axioms(seed=0, suites=None, action=None):
    """Run the selected suites (all by default) and aggregate their verdicts."""
    names = list(SUITES) if suites is None else list(suites)
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise ValueError(f"unknown suite(s): {', '.join(unknown)}")
    checks = []
    for name in names:
        rng = np.random.default_rng([seed, list(SUITES).index(name)])
        for c in SUITES[name](rng, action):
            checks.append({"suite": name, **c})
    if not checks:
        verdict = "INCONCLUSIVE"
    elif any(c["verdict"] == "FAIL" for c in checks):
        verdict = "FAIL"
    else:
        verdict = "PASS"
    return {"seed": seed, "suites": names, "verdict": verdict, "checks": checks}
