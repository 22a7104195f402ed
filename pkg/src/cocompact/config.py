"""INI run configurations and a small safe expression language for them.

Expressions are arithmetic over numbers, named constants and whitelisted
numpy functions; they are parsed with :mod:`ast` and never passed to eval.
User definitions go in a ``[define]`` section::

    [define]
    a = 1
    phi(x) = pos(1 - (x/2)**2)**3
"""
import ast
import configparser
import math
import operator
import os
import re
from importlib import resources

import numpy as np

from .decomposition import DecompositionOptions
from .group import Dislocation, DislocationSequence, apply
from .lattice import EnergySpec, GridFunction, LatticeError, MassSpec, trim
from .symmetry import LatticeDomain, SymmetrySpec
from .variational import IsoperimetricProblem, PerturbationPair, SolverOptions
from .weak import FunctionSequence, TestFunctionalFamily

COMMANDS = ("decompose", "minimize", "subadd", "verify-axioms", "flask", "symmetry", "cocompact")


class ConfigError(ValueError):
    """A config value failed validation; the message names the offending field."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


# ---------------------------------------------------------------- expressions

def _sech(x):
    return 1.0 / np.cosh(x)


def _pos(x):
    return np.maximum(x, 0.0)


FUNCTIONS = {
    "exp": np.exp, "log": np.log, "sqrt": np.sqrt, "abs": np.abs,
    "sin": np.sin, "cos": np.cos, "tanh": np.tanh, "cosh": np.cosh, "sinh": np.sinh,
    "sech": _sech, "pos": _pos, "min": np.minimum, "max": np.maximum,
    "where": np.where, "hypot": np.hypot,
}
CONSTANTS = {"pi": math.pi, "e": math.e}

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow, ast.Mod: operator.mod,
           ast.FloorDiv: operator.floordiv}
_UNOPS = {ast.USub: operator.neg, ast.UAdd: operator.pos}
_CMPOPS = {ast.Lt: operator.lt, ast.LtE: operator.le, ast.Gt: operator.gt, ast.GtE: operator.ge,
           ast.Eq: operator.eq, ast.NotEq: operator.ne}


class Expr:
    """A parsed expression; call with a dict of variable values."""

    def __init__(self, text, env=None):
        self.text = text.strip()
        self.env = dict(env or {})
        try:
            self.tree = ast.parse(self.text, mode="eval").body
        except SyntaxError as exc:
            raise ValueError(f"cannot parse {self.text!r}: {exc.msg}") from None
        self._check(self.tree)

    def _check(self, node):
        allowed = (ast.BinOp, ast.UnaryOp, ast.Compare, ast.Call, ast.Name, ast.Constant, ast.Tuple,
                   ast.Load, ast.operator, ast.unaryop, ast.cmpop)
        for sub in ast.walk(node):
            if not isinstance(sub, allowed):
                raise ValueError(f"{type(sub).__name__} is not allowed in {self.text!r}")
            if isinstance(sub, ast.BinOp) and type(sub.op) not in _BINOPS:
                raise ValueError(f"operator {type(sub.op).__name__} is not allowed")
            if isinstance(sub, ast.UnaryOp) and type(sub.op) not in _UNOPS:
                raise ValueError(f"operator {type(sub.op).__name__} is not allowed")
            if isinstance(sub, ast.Constant) and not isinstance(sub.value, (int, float)):
                raise ValueError(f"only numeric literals are allowed in {self.text!r}")
            if isinstance(sub, ast.Call) and (not isinstance(sub.func, ast.Name) or sub.keywords):
                raise ValueError(f"only plain calls of named functions are allowed in {self.text!r}")

    def __call__(self, **variables):
        scope = {**CONSTANTS, **FUNCTIONS, **self.env, **variables}
        return self._eval(self.tree, scope)

    def _eval(self, node, scope):
        if isinstance(node, ast.Constant):
            return node.value
        if isinstance(node, ast.Name):
            if node.id not in scope:
                raise ValueError(f"unknown name {node.id!r} in {self.text!r}")
            return scope[node.id]
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, scope), self._eval(node.right, scope))
        if isinstance(node, ast.UnaryOp):
            return _UNOPS[type(node.op)](self._eval(node.operand, scope))
        if isinstance(node, ast.Compare):
            left = self._eval(node.left, scope)
            result = True
            for op, comp in zip(node.ops, node.comparators):
                right = self._eval(comp, scope)
                result = result & _CMPOPS[type(op)](left, right)
                left = right
            return result
        if isinstance(node, ast.Tuple):
            return tuple(self._eval(e, scope) for e in node.elts)
        fn = scope.get(node.func.id)
        if not callable(fn):
            raise ValueError(f"{node.func.id!r} is not a function in {self.text!r}")
        return fn(*[self._eval(a, scope) for a in node.args])

    def names(self):
        return {n.id for n in ast.walk(self.tree) if isinstance(n, ast.Name)}


class _UserFunction:
    def __init__(self, params, expr):
        self.params = params
        self.expr = expr

    def __call__(self, *args):
        if len(args) != len(self.params):
            raise ValueError(f"{self.expr.text!r} takes {len(self.params)} argument(s)")
        return self.expr(**dict(zip(self.params, args)))


_DEF = re.compile(r"^([A-Za-z_]\w*)\s*\(([^)]*)\)$")


def parse_definitions(items):
    """Build an environment from ``name = expr`` and ``name(args) = expr`` pairs, in order."""
    env = {}
    for key, text in items:
        m = _DEF.match(key.strip())
        if m:
            params = [p.strip() for p in m.group(2).split(",") if p.strip()]
            env[m.group(1)] = _UserFunction(params, Expr(text, env))
        else:
            name = key.strip()
            if not name.isidentifier():
                raise ValueError(f"bad definition name {name!r}")
            env[name] = float(Expr(text, env)())
    return env


def parse_indices(text):
    """'1..12', '1..12:2' or a comma list such as '1, 2, 4, 8'."""
    out = []
    for part in text.split(","):
        part = part.strip()
        m = re.fullmatch(r"(-?\d+)\s*\.\.\s*(-?\d+)(?:\s*:\s*(\d+))?", part)
        if m:
            a, b, s = int(m.group(1)), int(m.group(2)), int(m.group(3) or 1)
            out.extend(range(a, b + 1, s))
        elif re.fullmatch(r"-?\d+", part):
            out.append(int(part))
        else:
            raise ValueError(f"bad index specification {part!r}")
    if not out or out != sorted(set(out)):
        raise ValueError("indices must be a non-empty strictly increasing list")
    return tuple(out)


# ---------------------------------------------------------------- config

def bundled(name):
    """Path of a fixture shipped with the package, by file name or stem."""
    base = resources.files("cocompact") / "fixtures"
    stem = name[:-4] if name.endswith(".ini") else name
    path = base / f"{stem}.ini"
    return str(path) if path.is_file() else None


def fixture_names():
    base = resources.files("cocompact") / "fixtures"
    return sorted(p.name[:-4] for p in base.iterdir() if p.name.endswith(".ini"))


class RunConfig:
    """A parsed INI file plus typed accessors for every section the commands use."""

    def __init__(self, text, base_dir=".", source=None):
        self.parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
        self.parser.optionxform = str
        try:
            self.parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError("config", str(exc).splitlines()[0]) from None
        self.base_dir = base_dir
        self.source = source
        try:
            self.env = parse_definitions(self.parser.items("define")) if self.parser.has_section("define") else {}
        except (ValueError, TypeError, ZeroDivisionError) as exc:
            raise ConfigError("[define]", str(exc)) from None

    @classmethod
    def load(cls, path):
        if not os.path.isfile(path):
            found = bundled(path)
            if found is None:
                raise ConfigError("--config", f"no such file or bundled fixture: {path}")
            path = found
        with open(path) as fh:
            return cls(fh.read(), os.path.dirname(os.path.abspath(path)), path)

    # -- raw access
    def has(self, section, key=None):
        if not self.parser.has_section(section):
            return False
        return key is None or self.parser.has_option(section, key)

    def raw(self, section, key, default=None):
        if self.has(section, key):
            return self.parser.get(section, key)
        if default is None:
            raise ConfigError(f"[{section}] {key}", "missing")
        return default

    def expr(self, section, key, variables=(), default=None):
        text = self.raw(section, key, default)
        try:
            e = Expr(str(text), {**self.env, "h0": self._h0_env()})
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key}", str(exc)) from None
        free = e.names() - set(FUNCTIONS) - set(CONSTANTS) - set(e.env) - set(variables)
        if free:
            raise ConfigError(f"[{section}] {key}", f"unknown name(s) {sorted(free)}")
        return e

    def _h0_env(self):
        if self.has("sequence", "h0"):
            return float(self.parser.get("sequence", "h0"))
        return 1.0

    def number(self, section, key, default=None, positive=False, integer=False):
        e = self.expr(section, key, default=None if default is None else str(default))
        try:
            val = e()
        except (ValueError, TypeError, ZeroDivisionError, OverflowError) as exc:
            raise ConfigError(f"[{section}] {key}", str(exc)) from None
        if isinstance(val, tuple):
            raise ConfigError(f"[{section}] {key}", "expected a single number")
        val = float(val)
        if not np.isfinite(val):
            raise ConfigError(f"[{section}] {key}", "must be finite")
        if positive and not val > 0:
            raise ConfigError(f"[{section}] {key}", f"must be positive, got {val:g}")
        if integer:
            if not val.is_integer():
                raise ConfigError(f"[{section}] {key}", f"must be an integer, got {val:g}")
            return int(val)
        return val

    def vector(self, section, key, variables=None, default=None):
        """Comma-separated expressions, evaluated with ``variables``."""
        e = self.expr(section, key, list(variables or {}), default)
        try:
            val = e(**(variables or {}))
        except (ValueError, TypeError, ZeroDivisionError) as exc:
            raise ConfigError(f"[{section}] {key}", str(exc)) from None
        return tuple(float(v) for v in (val if isinstance(val, tuple) else (val,)))

    def word(self, section, key, choices=None, default=None):
        val = self.raw(section, key, default).strip()
        if choices is not None and val not in choices:
            raise ConfigError(f"[{section}] {key}", f"must be one of {list(choices)}, got {val!r}")
        return val

    def flag(self, section, key, default):
        if not self.has(section, key):
            return default
        try:
            return self.parser.getboolean(section, key)
        except ValueError:
            raise ConfigError(f"[{section}] {key}", "must be true or false") from None

    def indices(self, section, key="indices"):
        try:
            return parse_indices(self.raw(section, key))
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key}", str(exc)) from None

    def path(self, section, key):
        p = self.raw(section, key).strip()
        full = p if os.path.isabs(p) else os.path.join(self.base_dir, p)
        if not os.path.exists(full):
            raise ConfigError(f"[{section}] {key}", f"referenced file does not exist: {p}")
        return full

    # -- run-level settings
    @property
    def seed(self):
        return self.number("run", "seed", 0, integer=True) if self.has("run", "seed") else 0

    def tolerance(self, key, default):
        if self.has("tolerances", key):
            return self.number("tolerances", key, positive=True)
        return default

    def echo(self):
        return {s: dict(self.parser.items(s)) for s in self.parser.sections()}

    # -- domain objects
    def energy(self):
        try:
            return EnergySpec(self.number("energy", "p"), self.number("energy", "N", integer=True),
                              self.word("energy", "mode", default="inhomogeneous"))
        except LatticeError as exc:
            raise ConfigError("[energy]", str(exc)) from None

    def mass(self):
        try:
            return MassSpec(self.number("mass", "q"))
        except LatticeError as exc:
            raise ConfigError("[mass] q", str(exc)) from None

    def family(self, dim, h0):
        s = "family"
        norm = self.number(s, "norm", positive=True) if self.has(s, "norm") else self.mass().q
        if not norm > 1:
            raise ConfigError("[family] norm", "must exceed 1")
        try:
            return TestFunctionalFamily(
                dim,
                radius=self.number(s, "radius", 4.0, positive=True),
                scales=self.number(s, "scales", 3, positive=True, integer=True),
                q=norm / (norm - 1.0),
                h0=h0,
                shift_radius=self.number(s, "shift_radius", positive=True) if self.has(s, "shift_radius") else None,
                dilation_range=self.number(s, "dilation_range", 0, integer=True),
            )
        except LatticeError as exc:
            raise ConfigError("[family]", str(exc)) from None

    def decomposition_options(self):
        s = "decomposition"
        base = DecompositionOptions()
        kw = {}
        for key, val in base.to_dict().items():
            if self.has(s, key):
                kw[key] = self.number(s, key, positive=True, integer=isinstance(val, int))
        return DecompositionOptions(**kw)

    def solver_options(self, seed=None):
        s = "solver"
        base = SolverOptions()
        kw = {"seed": self.seed if seed is None else seed}
        for key, val in base.to_dict().items():
            if key == "seed" or not self.has(s, key):
                continue
            if isinstance(val, bool):
                kw[key] = self.flag(s, key, val)
            else:
                kw[key] = self.number(s, key, positive=True, integer=isinstance(val, int))
        return SolverOptions(**kw)

    # -- sequences
    def _term(self, section, k, spec, h0):
        if self.has(section, "file"):
            return GridFunction.load(self.path(section, "file"))
        dim = spec.N
        names = ("x", "y", "z")[:dim]
        variables = {"k": k}
        level = int(self.number_k(section, "level", k, "0"))
        lower = self._axes(section, "lower", variables, dim)
        upper = self._axes(section, "upper", variables, dim)
        f = self.expr(section, "expr", list(names) + ["k"])

        def func(*xs):
            return f(k=k, **dict(zip(names, xs)))

        try:
            u = GridFunction.from_function(func, lower, upper, level, h0)
        except (ValueError, TypeError, ZeroDivisionError) as exc:
            raise ConfigError(f"[{section}] expr", str(exc)) from None
        if self.has(section, "shift") or self.has(section, "dilation"):
            y = self._axes(section, "shift", variables, dim, "0")
            j = int(self.number_k(section, "dilation", k, "0"))
            try:
                u = apply(Dislocation(y, j), u, spec)
            except LatticeError as exc:
                raise ConfigError(f"[{section}] dilation", str(exc)) from None
        return u

    def number_k(self, section, key, k, default):
        val = self.vector(section, key, {"k": k}, default)
        if len(val) != 1:
            raise ConfigError(f"[{section}] {key}", "expected a single number")
        return val[0]

    def _axes(self, section, key, variables, dim, default=None):
        val = self.vector(section, key, variables, default)
        if len(val) == 1:
            val = val * dim
        if len(val) != dim:
            raise ConfigError(f"[{section}] {key}", f"needs 1 or {dim} entries, got {len(val)}")
        return val

    def sequence(self, spec):
        s = "sequence"
        if self.has(s, "files"):
            paths = [p.strip() for p in self.raw(s, "files").split(",") if p.strip()]
            members = []
            for p in paths:
                full = p if os.path.isabs(p) else os.path.join(self.base_dir, p)
                if not os.path.exists(full):
                    raise ConfigError(f"[{s}] files", f"referenced file does not exist: {p}")
                members.append(GridFunction.load(full))
            indices = self.indices(s) if self.has(s, "indices") else tuple(range(1, len(members) + 1))
            if len(indices) != len(members):
                raise ConfigError(f"[{s}] indices", "one index per file is needed")
            return FunctionSequence(indices, members)
        indices = self.indices(s)
        h0 = self.number(s, "h0", 1.0, positive=True)
        terms = [t.strip() for t in self.raw(s, "terms", "").split(",") if t.strip()]
        sections = [f"term.{t}" for t in terms] if terms else [s]
        for sec in sections:
            if not self.has(sec):
                raise ConfigError(f"[{s}] terms", f"missing section [{sec}]")

        def member(k):
            u = None
            for sec in sections:
                v = self._term(sec, k, spec, h0)
                u = v if u is None else u + v
            return trim(u)

        return FunctionSequence.from_generator(member, indices)

    # -- variational
    def problem(self, t=None):
        s = "problem"
        spec, mass = self.energy(), self.mass()
        t = self.number(s, "t") if t is None else t
        if not t > 0:
            raise ConfigError("[problem] t", f"mass level must be positive, got {t:g}")
        win = self.vector(s, "window", default="-20, 20")
        if len(win) == 2:
            win = win * spec.N
        if len(win) != 2 * spec.N:
            raise ConfigError("[problem] window", f"needs 2 or {2 * spec.N} numbers")
        window = tuple((win[2 * i], win[2 * i + 1]) for i in range(spec.N))
        if any(b <= a for a, b in window):
            raise ConfigError("[problem] window", "each lower bound must be below its upper bound")
        pert = None
        if self.has("perturbation"):
            names = ["x", "y", "z"][:spec.N]
            pots = []
            for key in ("V", "W"):
                if self.has("perturbation", key):
                    e = self.expr("perturbation", key, names)
                    pots.append(lambda *xs, e=e: e(**dict(zip(names, xs))))
                else:
                    pots.append(None)
            pert = PerturbationPair(*pots)
        try:
            return IsoperimetricProblem(
                spec, mass, t, window,
                h=self.number(s, "h", 0.05, positive=True),
                restriction=self.word(s, "restriction", default="none"),
                perturbation=pert,
            )
        except LatticeError as exc:
            raise ConfigError("[problem]", str(exc)) from None

    # -- geometry
    def domain(self):
        s = "domain"
        kind = self.word(s, "kind", ("half-space", "balls", "periodic", "finite"))
        scan = self.number(s, "scan_radius", 10, positive=True, integer=True)
        if kind == "half-space":
            params = {"normal": self.vector(s, "normal"), "offset": self.number(s, "offset", 0.0)}
        elif kind == "balls":
            if self.has(s, "indices"):
                ks = self.indices(s)
                centers = [self.vector(s, "center", {"k": k}) for k in ks]
                radii = [self.number_k(s, "radius", k, None) for k in ks]
            else:
                centers = [self.vector(s, "center")]
                radii = [self.number(s, "radius", positive=True)]
            params = {"centers": np.array(centers), "radii": np.array(radii)}
        elif kind == "periodic":
            params = {"motif": self._points(s, "motif"), "periods": self.vector(s, "periods")}
        else:
            params = {"points": self._points(s, "points")}
        try:
            dom = LatticeDomain(kind, params, scan)
            dom.dim
        except (LatticeError, KeyError) as exc:
            raise ConfigError("[domain]", str(exc)) from None
        return dom

    def _points(self, section, key):
        rows = [r for r in self.raw(section, key).split(";") if r.strip()]
        try:
            return np.array([[float(Expr(v)()) for v in r.split(",")] for r in rows])
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key}", str(exc)) from None

    def shift_families(self, section="flask"):
        """Every ``shift*`` key of the section is one shift family over its ``indices``."""
        ks = self.indices(section)
        keys = sorted(k for k in self.parser.options(section) if k.startswith("shift"))
        if not keys:
            raise ConfigError(f"[{section}]", "needs at least one shift family (shift = ...)")
        fams = {}
        for key in keys:
            rows = tuple(Dislocation(self.vector(section, key, {"k": k}), 0) for k in ks)
            fams[key] = DislocationSequence(ks, rows)
        return fams

    def symmetry(self):
        try:
            return SymmetrySpec(self.word("symmetry", "kind"))
        except LatticeError as exc:
            raise ConfigError("[symmetry] kind", str(exc)) from None
