"""Energy minimization at fixed mass, c_t = inf{F(u) : G(u) = t}.

The solver is a preconditioned normalized gradient flow: step along
A^{-1}(E' - mu C'), with A = -Laplacian + I (or -Laplacian in homogeneous
mode) and mu the multiplier that makes the step tangent to the constraint,
then rescale to restore the constraint exactly.  Both constraint terms are
q-homogeneous, so the rescaling is a single scalar multiply.
"""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
import os

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .decomposition import DecompositionOptions, decompose
from .lattice import GridFunction, LatticeError, MassSpec, embed, eval_F, eval_G, grad_F
from .symmetry import EVEN, NONE, RADIAL, project_symmetric
from .weak import TestFunctionalFamily, scan

HALF_SPACE = "half-space"


class SolverError(RuntimeError):
    """Step-size or constraint-restoration failure."""


def workers():
    """Process count for independent runs, from COCOMPACT_WORKERS (default 1)."""
    try:
        return max(1, int(os.environ.get("COCOMPACT_WORKERS", "1")))
    except ValueError:
        return 1


def pmap(fn, items):
    items = list(items)
    n = min(workers(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------- problem

@dataclass(frozen=True)
class PerturbationPair:
    """f(u) = sum V|u|^p h^N and g(u) = sum W|u|^q h^N.

    ``V`` and ``W`` are callables of the coordinate arrays (or None for 0).
    """
    V: object = None
    W: object = None

    def sample(self, grid):
        mesh = grid.mesh()
        out = []
        for pot in (self.V, self.W):
            if pot is None:
                out.append(None)
                continue
            a = np.broadcast_to(np.asarray(pot(*mesh), dtype=float), grid.shape).copy()
            if not np.all(np.isfinite(a)):
                raise LatticeError("perturbation potential is not finite on the window")
            if np.any(a < 0):
                raise LatticeError("perturbation potentials must be nonnegative")
            out.append(a)
        if all(a is None or not np.any(a > 0) for a in out):
            raise LatticeError("perturbation pair is identically zero; at least one potential must be positive somewhere")
        return tuple(out)


@dataclass(frozen=True)
class IsoperimetricProblem:
    energy: object
    mass: MassSpec
    t: float
    window: tuple = ((-20.0, 20.0),)
    h: float = 0.05
    restriction: str = NONE
    perturbation: PerturbationPair = None

    def __post_init__(self):
        if not self.t > 0:
            raise LatticeError("mass level t must be positive")
        win = tuple(tuple(float(x) for x in w) for w in self.window)
        if len(win) != self.energy.N:
            raise LatticeError("window needs one (lower, upper) pair per dimension")
        object.__setattr__(self, "window", win)
        self.mass.check_cocompact_range(self.energy)
        if self.restriction not in (NONE, RADIAL, EVEN, HALF_SPACE):
            raise LatticeError(f"unknown restriction {self.restriction!r}")
        if self.perturbation is not None:
            self.perturbation.sample(self.grid())

    @property
    def symmetry(self):
        """Projector kind for the restriction; radial in 1D means even."""
        if self.restriction == RADIAL and self.energy.N == 1:
            return EVEN
        return self.restriction if self.restriction in (RADIAL, EVEN) else NONE

    def grid(self):
        lower = tuple(int(round(lo / self.h)) for lo, _ in self.window)
        upper = tuple(int(round(hi / self.h)) for _, hi in self.window)
        shape = tuple(b - a + 1 for a, b in zip(lower, upper))
        return GridFunction(np.zeros(shape), lower, 0, self.h)

    def with_t(self, t):
        return replace(self, t=float(t))

    def to_dict(self):
        return {
            "N": self.energy.N, "p": self.energy.p, "q": self.mass.q, "mode": self.energy.mode,
            "t": self.t, "window": [list(w) for w in self.window], "h": self.h,
            "restriction": self.restriction, "penalized": self.perturbation is not None,
        }


@dataclass
class SolverOptions:
    tau0: float = 0.1
    tau_max: float = 1.0
    tau_min: float = 1e-14
    eps_e: float = 1e-10
    eps_el: float = 1e-6
    constraint_tol: float = 1e-10
    max_iter: int = 20000
    n_starts: int = 3
    seed: int = 0
    recenter: bool = True
    recenter_every: int = 10
    value_tol: float = 1e-6

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class MinimizerReport:
    minimizer: GridFunction
    value: float
    constraint_residual: float
    el_residual: float
    multiplier: float
    energy_trace: list = field(default_factory=list)
    recentering: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    start: int = 0
    starts: list = field(default_factory=list)
    euler_gap: float = 0.0
    comparison: dict = None

    def to_dict(self, include_minimizer=True):
        d = {
            "value": self.value,
            "constraint_residual": self.constraint_residual,
            "el_residual": self.el_residual,
            "multiplier": self.multiplier,
            "euler_identity_gap": self.euler_gap,
            "iterations": self.iterations,
            "converged": self.converged,
            "best_start": self.start,
            "starts": self.starts,
            "recentering": self.recentering,
            "energy_trace": self.energy_trace,
        }
        if self.comparison is not None:
            d["comparison"] = self.comparison
        if include_minimizer:
            d["minimizer"] = self.minimizer.to_dict()
        return d


# ---------------------------------------------------------------- discrete operators

def _precond(shape, h, mass_term):
    """Sparse LU of A = sum_d D_d^T D_d / h^2 (+ I): the p = 2 Hessian of F / 2."""
    mats = []
    for n in shape:
        mats.append(sparse.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1]) / h ** 2)
    A = sparse.csc_matrix((int(np.prod(shape)),) * 2)
    for ax, L in enumerate(mats):
        term = None
        for bx, n in enumerate(shape):
            f = L if bx == ax else sparse.identity(n)
            term = f if term is None else sparse.kron(term, f)
        A = A + term
    if mass_term:
        A = A + sparse.identity(A.shape[0])
    return splu(sparse.csc_matrix(A))


class _Flow:
    """Objective E = F - f and constraint C = G + g on a fixed window."""

    def __init__(self, prob, opts):
        self.prob, self.opts = prob, opts
        self.spec, self.q = prob.energy, prob.mass.q
        self.grid = prob.grid()
        self.hN = prob.h ** prob.energy.N
        self.lu = _precond(self.grid.shape, prob.h, not prob.energy.homogeneous)
        self.V, self.W = prob.perturbation.sample(self.grid) if prob.perturbation else (None, None)
        self.mask = None
        if prob.restriction == HALF_SPACE:
            x1 = self.grid.coords(0)
            sh = [1] * self.grid.dim
            sh[0] = -1
            self.mask = np.broadcast_to((x1 > 0).reshape(sh), self.grid.shape)

    def fn(self, a):
        return self.grid.with_samples(a)

    def objective(self, a):
        val = eval_F(self.fn(a), self.spec)
        if self.V is not None:
            val -= float(np.sum(self.V * np.abs(a) ** self.spec.p) * self.hN)
        return val

    def constraint(self, a):
        val = eval_G(self.fn(a), self.prob.mass)
        if self.W is not None:
            val += float(np.sum(self.W * np.abs(a) ** self.q) * self.hN)
        return val

    def grads(self, a):
        p, q = self.spec.p, self.q
        dE = grad_F(self.fn(a), self.spec)
        if self.V is not None:
            dE = dE - p * self.V * np.sign(a) * np.abs(a) ** (p - 1)
        dC = q * np.sign(a) * np.abs(a) ** (q - 1)
        if self.W is not None:
            dC = dC + self.W * dC
        return dE, dC

    def solve(self, r):
        return self.lu.solve(r.ravel()).reshape(r.shape)

    def project(self, a):
        if self.mask is not None:
            a = np.where(self.mask, a, 0.0)
        sym = self.prob.symmetry
        if sym != NONE:
            a = embed(project_symmetric(self.fn(a), sym), self.grid.offset, self.grid.upper)
        return a

    def normalize(self, a):
        c = self.constraint(a)
        if not (c > 0 and np.isfinite(c)):
            raise SolverError("constraint restoration failed: iterate has no mass")
        a = a * (self.prob.t / c) ** (1.0 / self.q)
        res = abs(self.constraint(a) - self.prob.t)
        if res > self.opts.constraint_tol * max(1.0, self.prob.t):
            raise SolverError(f"constraint restoration failed: residual {res:.3e}")
        return a

    def direction(self, a):
        dE, dC = self.grads(a)
        aE, aC = self.solve(dE), self.solve(dC)
        mu = float(np.sum(dC * aE) / np.sum(dC * aC))
        r = dE - mu * dC
        d = aE - mu * aC
        el = float(np.sqrt(max(np.sum(r * d), 0.0) * self.hN))
        return d, mu, el

    def recenter_shift(self, a):
        """Integer lattice shift of the argmax recentering dislocation."""
        ext = [(hi - lo) for lo, hi in self.prob.window]
        fam = TestFunctionalFamily(self.grid.dim, radius=max(self.prob.h, min(ext) / 8.0), scales=1,
                                   q=self.q / (self.q - 1.0), h0=self.prob.h)
        g = scan(self.fn(np.abs(a)), fam, self.spec).dislocation
        return tuple(int(round(s)) for s in g.shift)


def _shift_array(a, s):
    """Move the contents by ``-s`` nodes with zero fill; also return the dropped samples' mass."""
    out = np.zeros_like(a)
    src, dst = [], []
    for ax, k in enumerate(s):
        n = a.shape[ax]
        if abs(k) >= n:
            return out, a
        if k >= 0:
            src.append(slice(k, n))
            dst.append(slice(0, n - k))
        else:
            src.append(slice(0, n + k))
            dst.append(slice(-k, n))
    out[tuple(dst)] = a[tuple(src)]
    kept = np.zeros(a.shape, dtype=bool)
    kept[tuple(src)] = True
    return out, np.where(kept, 0.0, a)


def _initial(flow, rng, centre_spread):
    """A positive Gaussian bump with random centre, width and amplitude.

    Several separated bumps would only merge on an exponentially slow time
    scale, so each start uses one.
    """
    mesh = flow.grid.mesh()
    c = [rng.uniform(-s, s) for s in centre_spread]
    w = rng.uniform(0.5, 2.0)
    r2 = sum((m - ci) ** 2 for m, ci in zip(mesh, c))
    a = rng.uniform(0.5, 1.5) * np.exp(-r2 / (2 * w * w))
    return flow.normalize(flow.project(a))


def _run(flow, a, opts, recenter):
    E = flow.objective(a)
    trace = [E]
    log = []
    tau = opts.tau0
    d, mu, el = flow.direction(a)
    converged = False
    it = 0
    while it < opts.max_iter:
        it += 1
        while True:
            cand = flow.normalize(flow.project(a - tau * d))
            Ec = flow.objective(cand)
            if Ec <= E:
                break
            tau *= 0.5
            if tau < opts.tau_min:
                if el < opts.eps_el:
                    return a, E, mu, el, trace, log, True, it
                raise SolverError(f"non-decreasing energy: step size underflow at iteration {it} (EL residual {el:.3e})")
        drop = E - Ec
        a, E = cand, Ec
        if recenter and it % opts.recenter_every == 0:
            s = flow.recenter_shift(a)
            if any(s):
                b, dropped = _shift_array(a, s)
                lost = float(np.sum(np.abs(dropped) ** flow.q) * flow.hN)
                a = flow.normalize(b)
                E_new = flow.objective(a)
                log.append({"iteration": it, "shift": list(s), "dropped_mass": lost, "energy_change": E_new - E})
                E = E_new
        trace.append(E)
        d, mu, el = flow.direction(a)
        if drop < opts.eps_e and el < opts.eps_el:
            converged = True
            break
        tau = min(2.0 * tau, opts.tau_max)
    return a, E, mu, el, trace, log, converged, it


def _solve_start(args):
    prob, opts, seed_seq, index, spread = args
    flow = _Flow(prob, opts)
    rng = np.random.default_rng(seed_seq)
    recenter = opts.recenter and prob.symmetry == NONE and prob.restriction == NONE and prob.perturbation is None
    try:
        a0 = _initial(flow, rng, spread)
        a, E, mu, el, trace, log, conv, it = _run(flow, a0, opts, recenter)
    except SolverError as exc:
        return {"start": index, "error": str(exc)}
    return {"start": index, "samples": a, "value": E, "multiplier": mu, "el": el, "trace": trace,
            "log": log, "converged": conv, "iterations": it,
            "constraint_residual": abs(flow.constraint(a) - prob.t)}


def _minimize(prob, opts, spread):
    seqs = np.random.SeedSequence(opts.seed).spawn(opts.n_starts)
    runs = pmap(_solve_start, [(prob, opts, s, i, spread) for i, s in enumerate(seqs)])
    ok = [r for r in runs if "error" not in r]
    summary = [{"start": r["start"], "value": r.get("value"), "converged": r.get("converged", False),
                "error": r.get("error")} for r in runs]
    if not ok:
        raise SolverError("; ".join(r["error"] for r in runs))
    best = min(ok, key=lambda r: (r["value"], r["start"]))
    grid = prob.grid()
    u = grid.with_samples(best["samples"])
    G = eval_G(u, prob.mass)
    gap = abs(prob.energy.p * eval_F(u, prob.energy) - best["multiplier"] * prob.mass.q * G)
    return MinimizerReport(
        minimizer=u,
        value=best["value"],
        constraint_residual=best["constraint_residual"],
        el_residual=best["el"],
        multiplier=best["multiplier"],
        energy_trace=best["trace"],
        recentering=best["log"],
        iterations=best["iterations"],
        converged=best["converged"],
        start=best["start"],
        starts=summary,
        euler_gap=gap / max(abs(prob.energy.p * eval_F(u, prob.energy)), 1e-300),
    )


def minimize_isoperimetric(prob, opts=None):
    opts = opts or SolverOptions()
    if prob.perturbation is not None:
        raise LatticeError("use minimize_penalized for problems with perturbations")
    # symmetric starts are centred: a symmetrized off-centre bump splits in two
    width = 0.0 if prob.symmetry != NONE else 0.25
    spread = [width * (hi - lo) for lo, hi in prob.window]
    return _minimize(prob, opts, spread)


def minimize_penalized(prob, opts=None, companion=True):
    """Minimize F - f subject to G + g = t; recentering is disabled.

    With ``companion`` the unpenalized c_t is computed on the same window
    and the comparison c'_t < c_t is attached to the report.
    """
    opts = opts or SolverOptions()
    if prob.perturbation is None:
        raise LatticeError("penalized problem needs a perturbation pair")
    # start near the potential well
    spread = [min(2.0, 0.25 * (hi - lo)) for lo, hi in prob.window]
    rep = _minimize(prob, opts, spread)
    if companion:
        base = minimize_isoperimetric(replace(prob, perturbation=None), opts)
        rep.comparison = {
            "c_t": base.value,
            "c_t_penalized": rep.value,
            "strictly_below": bool(rep.value < base.value),
            "unpenalized_converged": base.converged,
            "unpenalized_el_residual": base.el_residual,
        }
    return rep


# ---------------------------------------------------------------- subadditivity

def _value_at(args):
    prob, opts, t = args
    try:
        rep = minimize_isoperimetric(prob.with_t(t), opts)
        return {"t": t, "value": rep.value, "converged": rep.converged, "el_residual": rep.el_residual}
    except SolverError as exc:
        return {"t": t, "value": None, "converged": False, "error": str(exc)}


def subadditivity_table(prob, taus, opts=None):
    """c_tau + c_{t-tau} - c_t for each tau, with weak-subadditivity violation flags."""
    opts = opts or SolverOptions()
    t = prob.t
    levels = sorted({t} | {float(x) for tau in taus for x in (tau, t - tau)})
    if any(not 0 < x <= t for x in levels):
        raise LatticeError("every tau must lie in (0, t)")
    inner = replace(opts, n_starts=opts.n_starts)
    vals = {r["t"]: r for r in pmap(_value_at, [(prob, inner, x) for x in levels])}
    tol = opts.value_tol
    rows = []
    for tau in taus:
        a, b, c = vals[float(tau)], vals[float(t - tau)], vals[t]
        row = {"tau": float(tau), "c_tau": a["value"], "c_t_minus_tau": b["value"], "c_t": c["value"]}
        failed = [r.get("error") for r in (a, b, c) if r["value"] is None]
        if failed:
            row.update(margin=None, violation=None, solver_failure=True, errors=failed)
        else:
            margin = a["value"] + b["value"] - c["value"]
            row.update(margin=margin, violation=bool(margin < -2 * tol),
                       solver_failure=bool(margin < -2 * tol) or not all(r["converged"] for r in (a, b, c)))
        rows.append(row)
    return {"t": t, "tolerance": tol, "values": [vals[x] for x in levels], "rows": rows}


# ---------------------------------------------------------------- coercivity

def default_sampler(dim=1, window=10.0, h=0.1):
    """Random grid functions: a few Gaussian bumps with random signs, plus noise."""
    n = int(round(2 * window / h)) + 1
    lower = (-(n // 2),) * dim

    def sample(rng):
        mesh = np.meshgrid(*[(np.arange(n) + lower[0]) * h] * dim, indexing="ij")
        a = 0.1 * rng.normal(size=(n,) * dim) * rng.uniform()
        for _ in range(int(rng.integers(1, 4))):
            c = rng.uniform(-window / 2, window / 2, size=dim)
            w = rng.uniform(0.2, 3.0)
            r2 = sum((m - ci) ** 2 for m, ci in zip(mesh, c))
            a += rng.choice([-1.0, 1.0]) * rng.uniform(0.1, 2.0) * np.exp(-r2 / (2 * w * w))
        return GridFunction(a, lower, 0, h)

    return sample


def coercivity_probe(spec, mass, a, b, sampler=None, n_samples=500, seed=0, floor=1e-3, excess=0.01):
    """min F over random functions rescaled to G(a u) = (1 + excess) b."""
    sampler = sampler or default_sampler(spec.N)
    rng = np.random.default_rng(seed)
    vals = []
    for _ in range(n_samples):
        u = sampler(rng)
        g = eval_G(u * a, mass)
        if not (g > 0 and np.isfinite(g)):
            continue
        u = u * ((1 + excess) * b / g) ** (1.0 / mass.q)
        vals.append(eval_F(u, spec))
    if not vals:
        raise LatticeError("sampler produced no admissible function")
    lo = float(min(vals))
    return {"verdict": "PASS" if lo > floor else "FAIL", "min_F": lo, "floor": floor,
            "admissible": len(vals), "a": a, "b": b}


# ---------------------------------------------------------------- classification

def classify_minimizing_sequence(seq, prob, fam=None, dopts=None, delta=0.05, vanish_tol=0.05):
    """converges-after-recentring, vanishing, or dichotomy (with the mass split)."""
    fam = fam or TestFunctionalFamily(prob.energy.N, radius=4.0, scales=3,
                                      q=prob.mass.q / (prob.mass.q - 1.0), h0=seq.members[0].h0)
    dopts = dopts or DecompositionOptions(eps_stop=vanish_tol)
    res = decompose(seq, prob.energy, fam, dopts)
    if res.status != "ok":
        raise SolverError(f"decomposition failed: {res.rounds[-1]}")
    masses = [eval_G(w, prob.mass) for w, _ in res.nonzero()]
    out = {"profiles": len(masses), "masses": masses, "t": prob.t,
           "remainder_defects": res.remainder_defects}
    if not masses:
        out["label"] = "vanishing"
    elif sum(m >= (1 - delta) * prob.t for m in masses) == 1:
        # one profile carries the mass; any others are slivers of a tail still settling
        out["label"] = "converges-after-recentring"
    else:
        out["label"] = "dichotomy"
        out["split"] = masses
        out["split_total"] = float(sum(masses))
    return out
