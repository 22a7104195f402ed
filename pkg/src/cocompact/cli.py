"""Command-line entry point: ``cocompact <command> --config <file> --out <dir>``."""
import argparse
import os
import sys
import time
from contextlib import contextmanager

import numpy as np

from .axioms import SUITES, lemma_suite, verify_axioms
from .config import COMMANDS, ConfigError, RunConfig, fixture_names
from .decomposition import decompose, verify_all
from .group import Dislocation, DislocationSequence
from .lattice import LatticeError, eval_G, export_csv
from .report import Report
from .symmetry import (conjugation_divergence_check, flask_check, novanish_compactness_test,
                       symmetric_compactness_test)
from .variational import (SolverError, classify_minimizing_sequence, minimize_isoperimetric,
                          minimize_penalized, subadditivity_table)
from .weak import NotConvergent, cocompactness_check


class CheckError(RuntimeError):
    """A downstream failure, tagged with the check that raised it."""

    def __init__(self, check, exc):
        super().__init__(f"check {check!r} failed: {type(exc).__name__}: {exc}")
        self.check = check


@contextmanager
def stage(rep, name):
    t0 = time.perf_counter()
    try:
        yield
    except ConfigError:
        raise
    except (LatticeError, SolverError, NotConvergent, ValueError, ArithmeticError) as exc:
        raise CheckError(name, exc) from exc
    finally:
        rep.timing[name] = time.perf_counter() - t0


# ---------------------------------------------------------------- commands

def _expected_profiles(cfg, rep, n):
    if cfg.has("expect", "profiles"):
        want = cfg.number("expect", "profiles", integer=True)
        rep.check("profile count", "PASS" if n == want else "FAIL", 0, expected=want, found=n)


def cmd_decompose(cfg, rep, args):
    spec, mass = cfg.energy(), cfg.mass()
    with stage(rep, "sequence"):
        seq = cfg.sequence(spec)
        energies = seq.check_bounded(spec)
    fam = cfg.family(spec.N, seq.members[0].h0)
    opts = cfg.decomposition_options()
    with stage(rep, "decompose"):
        res = decompose(seq, spec, fam, opts)
    rep.check("decomposition completed", "PASS" if res.status == "ok" else "FAIL",
              {"eps_stop": opts.eps_stop, "weak_tol": opts.weak_tol}, status=res.status)
    _expected_profiles(cfg, rep, res.n_profiles)
    if res.status == "ok":
        with stage(rep, "verify"):
            checks = verify_all(res, seq, mass, cfg.tolerance("separation_threshold", 8.0))
        for name, c in checks.items():
            tol = c.get("tolerance", c.get("threshold"))
            if tol is None:
                tol = {k: v for k, v in c.items() if k.endswith("_tol")}
            rep.check(name.replace("_", " "), c["verdict"], tol,
                      **{k: v for k, v in c.items() if k not in ("verdict", "tolerance")})
    rep.results.update(decomposition=res.to_dict(), options=opts.to_dict(), family=fam.to_dict(),
                       sequence_energies=energies)
    rep.trace("remainder_defects.csv", ["round", "defect"], enumerate(res.remainder_defects, 1))
    rows = []
    for n, gs in enumerate(res.dislocations, 1):
        for k, g in zip(gs.indices, gs):
            rows.append([n, k, g.level] + list(g.shift))
    rep.trace("dislocations.csv", ["profile", "k", "level"] + [f"shift_{i}" for i in range(spec.N)], rows)


def _centroid_error(u, oracle, q):
    """Max error against oracle(x - a), a the |u|^q centroid, up to sign."""
    x = u.coords(0)
    w = np.abs(u.samples) ** q
    a = float(np.sum(x * w) / np.sum(w))
    ref = oracle(x - a)
    sign = 1.0 if np.sum(u.samples * ref) >= 0 else -1.0
    return float(np.max(np.abs(sign * u.samples - ref))), a


def cmd_minimize(cfg, rep, args):
    prob = cfg.problem()
    opts = cfg.solver_options(args.seed)
    with stage(rep, "minimize"):
        if prob.perturbation is not None:
            mr = minimize_penalized(prob, opts)
        else:
            mr = minimize_isoperimetric(prob, opts)
    rep.check("Euler-Lagrange residual", "PASS" if mr.converged else "FAIL", opts.eps_el,
              el_residual=mr.el_residual, iterations=mr.iterations)
    rep.check("constraint residual", "PASS" if mr.constraint_residual <= opts.constraint_tol else "FAIL",
              opts.constraint_tol, constraint_residual=mr.constraint_residual)
    if mr.comparison is not None:
        cmp_ = mr.comparison
        rep.check("penalized value below c_t", "PASS" if cmp_["strictly_below"] else "FAIL", 0.0,
                  **cmp_)
        rep.check("unpenalized run converged", "PASS" if cmp_["unpenalized_converged"] else "FAIL",
                  opts.eps_el, el_residual=cmp_["unpenalized_el_residual"])
    if cfg.has("oracle", "value"):
        want = cfg.number("oracle", "value")
        rtol = cfg.number("oracle", "value_rtol", 0.02, positive=True)
        err = abs(mr.value - want) / abs(want)
        rep.check("value against oracle", "PASS" if err <= rtol else "FAIL", rtol,
                  value=mr.value, oracle=want, relative_error=err)
    if cfg.has("oracle", "profile"):
        if prob.energy.N != 1:
            raise ConfigError("[oracle] profile", "profile comparison is implemented for N = 1")
        e = cfg.expr("oracle", "profile", ["x"])
        tol = cfg.number("oracle", "profile_tol", 0.02, positive=True)
        err, a = _centroid_error(mr.minimizer, lambda x: e(x=x), prob.mass.q)
        rep.check("minimizer against oracle profile", "PASS" if err <= tol else "FAIL", tol,
                  max_error=err, centre=a)
    rep.results.update(problem=prob.to_dict(), solver=opts.to_dict(),
                       minimizer=mr.to_dict(include_minimizer=False))
    rep.trace("energy_trace.csv", ["iteration", "energy"], enumerate(mr.energy_trace))
    if prob.energy.N <= 2:
        os.makedirs(rep.out_dir, exist_ok=True)
        export_csv(mr.minimizer, os.path.join(rep.out_dir, "minimizer.csv"),
                   axis_index=0 if prob.energy.N == 2 else None)
        rep.traces.append("minimizer.csv")


def _taus(text):
    try:
        taus = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigError("--taus", f"expected comma-separated numbers, got {text!r}") from None
    if not taus:
        raise ConfigError("--taus", "no values given")
    return taus


def cmd_subadd(cfg, rep, args):
    prob = cfg.problem()
    opts = cfg.solver_options(args.seed)
    taus = _taus(args.taus) if args.taus else list(cfg.vector("subadd", "taus"))
    if any(not 0 < tau < prob.t for tau in taus):
        raise ConfigError("taus", f"every tau must lie in (0, {prob.t:g})")
    with stage(rep, "subadditivity"):
        table = subadditivity_table(prob, taus, opts)
    rows = table["rows"]
    weak_ok = all(r["violation"] is False for r in rows)
    rep.check("weak subadditivity", "PASS" if weak_ok else "FAIL", 2 * table["tolerance"],
              margins=[r["margin"] for r in rows])
    strict_ok = all(r["margin"] is not None and r["margin"] > 0 for r in rows)
    rep.check("strict subadditivity margins", "PASS" if strict_ok else "FAIL", 0.0,
              margins=[r["margin"] for r in rows])
    conv = all(v.get("converged") for v in table["values"])
    rep.check("solver convergence", "PASS" if conv else "FAIL", opts.eps_el)
    rep.results["subadditivity"] = table
    rep.trace("subadditivity.csv", ["tau", "c_tau", "c_t_minus_tau", "c_t", "margin"],
              [[r["tau"], r["c_tau"], r["c_t_minus_tau"], r["c_t"], r["margin"]] for r in rows])
    if cfg.has("subadd", "scaling"):
        ts = cfg.vector("subadd", "scaling")
        rtol = cfg.number("subadd", "scaling_rtol", 0.01, positive=True)
        expo = prob.energy.p / prob.mass.q
        with stage(rep, "scaling"):
            vals = [minimize_isoperimetric(prob.with_t(t), opts).value for t in sorted({1.0, *ts})]
        by_t = dict(zip(sorted({1.0, *ts}), vals))
        errs = [abs(by_t[t] / by_t[1.0] / t ** expo - 1.0) for t in ts]
        rep.check("scaling c_t / c_1 = t^(p/q)", "PASS" if max(errs) <= rtol else "FAIL", rtol,
                  t=list(ts), c_t=[by_t[t] for t in ts], relative_errors=errs)
        rep.results["scaling"] = {"t": list(ts), "c_t": [by_t[t] for t in ts], "exponent": expo}


def cmd_verify_axioms(cfg, rep, args):
    if args.suites is not None:
        suites = [s.strip() for s in args.suites.split(",") if s.strip()]
    elif cfg is not None and cfg.has("axioms", "suites"):
        suites = [s.strip() for s in cfg.raw("axioms", "suites").split(",") if s.strip()]
    else:
        suites = None
    bad = [s for s in suites or [] if s not in SUITES]
    if bad:
        raise ConfigError("suites", f"unknown suite(s) {bad}; choose from {list(SUITES)}")
    with stage(rep, "axioms"):
        out = verify_axioms(rep.seed, suites)
    for c in out["checks"]:
        rep.check(f"{c['suite']}: {c['name']}", c["verdict"], c["tolerance"],
                  **{k: v for k, v in c.items() if k not in ("name", "verdict", "tolerance", "suite")})
    if not out["checks"]:
        rep.check("suite selection", "INCONCLUSIVE", 0, note="no suites selected")
    rep.results["suites"] = out["suites"]


def cmd_flask(cfg, rep, args):
    dom = cfg.domain()
    fams = cfg.shift_families("flask")
    radius = cfg.number("flask", "search_radius", dom.scan_radius, positive=True, integer=True)
    with stage(rep, "flask"):
        out = flask_check(dom, list(fams.values()), radius)
    for (name, fam), entry in zip(fams.items(), out["families"]):
        rep.check(f"flask ({name})", entry["verdict"],
                  {"search_radius": radius, "scan_radius": dom.scan_radius},
                  **{k: v for k, v in entry.items() if k != "verdict"})
    rep.results.update(domain=dom.to_dict(), flask=out)


def cmd_symmetry(cfg, rep, args):
    spec, mass = cfg.energy(), cfg.mass()
    with stage(rep, "sequence"):
        seq = cfg.sequence(spec)
        seq.check_bounded(spec)
    fam = cfg.family(spec.N, seq.members[0].h0)
    test = cfg.word("symmetry", "test", ("compactness", "novanish"), default="compactness")
    if test == "compactness":
        sym = cfg.symmetry()
        tol = cfg.tolerance("norm_tol", 0.05)
        threshold = cfg.tolerance("separation_threshold", 8.0)
        with stage(rep, "symmetric compactness"):
            out = symmetric_compactness_test(seq, sym, spec, mass, fam, cfg.decomposition_options(),
                                             norm_tol=tol, threshold=threshold)
        rep.check(f"symmetric compactness ({sym.kind})", out["verdict"],
                  {"norm_tol": tol, "separation_threshold": threshold},
                  **{k: v for k, v in out.items() if k != "verdict"})
    else:
        lower = cfg.vector("symmetry", "box_lower")
        upper = cfg.vector("symmetry", "box_upper")
        hyp, tol = cfg.tolerance("hypothesis_tol", 1e-10), cfg.tolerance("norm_tol", 1e-3)
        with stage(rep, "novanish compactness"):
            out = novanish_compactness_test(seq, spec, mass, fam, (lower, upper), hyp, tol)
        rep.check("compactness on a confined subspace", out["verdict"],
                  {"hypothesis_tol": hyp, "norm_tol": tol},
                  **{k: v for k, v in out.items() if k != "verdict"})
    if cfg.has("conjugation"):
        ks = cfg.indices("conjugation")
        shifts = DislocationSequence(ks, tuple(Dislocation(cfg.vector("conjugation", "shift", {"k": k}), 0)
                                               for k in ks))
        threshold = cfg.tolerance("separation_threshold", 8.0)
        for c in [s.strip() for s in cfg.raw("conjugation", "elements").split(",") if s.strip()]:
            with stage(rep, f"conjugation {c}"):
                r = conjugation_divergence_check(c, shifts, threshold, fam.h0)
            rep.check(f"conjugates diverge ({c})", r["verdict"], threshold,
                      **{k: v for k, v in r.items() if k != "verdict"})
    if cfg.flag("symmetry", "lemma", False):
        for c in lemma_suite():
            rep.check(c["name"], c["verdict"], c["tolerance"],
                      **{k: v for k, v in c.items() if k not in ("name", "verdict", "tolerance")})


def cmd_cocompact(cfg, rep, args):
    spec, mass = cfg.energy(), cfg.mass()
    with stage(rep, "sequence"):
        seq = cfg.sequence(spec)
        seq.check_bounded(spec)
    fam = cfg.family(spec.N, seq.members[0].h0)
    dtol, ntol = cfg.tolerance("defect_tol", 0.05), cfg.tolerance("norm_tol", 0.2)
    with stage(rep, "cocompactness"):
        out = cocompactness_check(seq, spec, mass, fam, dtol, ntol)
    rep.check("cocompactness", out["verdict"], {"defect_tol": dtol, "norm_tol": ntol},
              **{k: v for k, v in out.items() if k not in ("verdict", "defect_tol", "norm_tol")})
    rep.trace("cocompactness.csv", ["k", "defect", "target_norm"],
              zip(out["indices"], out["defect"], out["target_norm"]))
    if cfg.has("problem"):
        prob = cfg.problem(t=cfg.number("problem", "t") if cfg.has("problem", "t")
                           else float(eval_G(seq.members[-1], mass)))
        with stage(rep, "classify"):
            dopts = cfg.decomposition_options() if cfg.has("decomposition") else None
            cls = classify_minimizing_sequence(seq, prob, fam, dopts)
        rep.results["classification"] = cls
        if cfg.has("expect", "label"):
            want = cfg.word("expect", "label")
            rep.check("minimizing-sequence label", "PASS" if cls["label"] == want else "FAIL", 0,
                      expected=want, found=cls["label"])
    rep.results["family"] = fam.to_dict()


HANDLERS = {
    "decompose": cmd_decompose,
    "minimize": cmd_minimize,
    "subadd": cmd_subadd,
    "verify-axioms": cmd_verify_axioms,
    "flask": cmd_flask,
    "symmetry": cmd_symmetry,
    "cocompact": cmd_cocompact,
}


# ---------------------------------------------------------------- entry point

def build_parser():
    ap = argparse.ArgumentParser(prog="cocompact", description="Concentration-compactness experiments on dyadic lattices.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=name != "verify-axioms",
                       help="INI file, or the name of a bundled fixture")
        p.add_argument("--out", default=os.path.join("out", name), help="output directory")
        p.add_argument("--seed", type=int, default=None, help="seed for randomized probes")
        p.add_argument("--workers", type=int, default=None, help="process count (default: $COCOMPACT_WORKERS or 1)")
        if name == "subadd":
            p.add_argument("--taus", help="comma-separated tau values in (0, t)")
        if name == "verify-axioms":
            p.add_argument("--suites", help=f"comma-separated subset of {','.join(SUITES)}")
    sub.add_parser("fixtures", help="list bundled fixtures")
    return ap


def run(command, cfg, args):
    """Dispatch one command; returns the finished (unwritten) report."""
    if cfg is not None and cfg.has("run", "command") and cfg.raw("run", "command").strip() != command:
        raise ConfigError("[run] command", f"config is for {cfg.raw('run', 'command').strip()!r}, not {command!r}")
    seed = args.seed if args.seed is not None else (cfg.seed if cfg is not None else 0)
    args.seed = seed
    rep = Report(command, cfg.echo() if cfg is not None else {}, seed, args.out)
    t0 = time.perf_counter()
    HANDLERS[command](cfg, rep, args)
    rep.timing["total"] = time.perf_counter() - t0
    return rep


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "fixtures":
        print("\n".join(fixture_names()))
        return 0
    if args.workers is not None:
        if args.workers < 1:
            print("error: --workers must be at least 1", file=sys.stderr)
            return 2
        os.environ["COCOMPACT_WORKERS"] = str(args.workers)
    try:
        cfg = RunConfig.load(args.config) if args.config else None
        if cfg is not None and args.workers is None and cfg.has("run", "workers"):
            os.environ["COCOMPACT_WORKERS"] = str(cfg.number("run", "workers", positive=True, integer=True))
        rep = run(args.command, cfg, args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except CheckError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    path = rep.write()
    for c in rep.checks:
        print(f"{c['verdict']:<12} {c['name']}")
    print(f"{rep.verdict}: report written to {path}")
    return rep.exit_code


if __name__ == "__main__":
    sys.exit(main())
