"""Evaluator for the Church subset.

Expressions are compiled once into Python closures of ``(env, world)`` and
then run many times, which matters because rejection sampling re-runs the
same small program hundreds of thousands of times.

Runtime values are plain Python objects: ``float`` (all numbers), ``bool``,
:class:`~gradsem.church.sexpr.Symbol`, ``str`` for string literals, ``tuple``
for lists, and the procedure classes defined here.
"""

from __future__ import annotations

import math
import random
from typing import Any, Callable

from .sexpr import Quote, SExpr, String, Symbol, sym, to_source

Value = Any
Code = Callable[["Environment", "World"], Value]


class EvalError(RuntimeError):
    """Evaluation failure; `form` is the printed offending expression."""

    def __init__(self, message: str, form: str | None = None):
        super().__init__(f"{message} in {form}" if form else message)
        self.form = form


class Rejected(Exception):
    """Raised by a failing `condition` to abandon the current world."""


class _Mismatch(Exception):
    # raised by builtins and `apply`; turned into EvalError at the call site
    pass


class Procedure:
    __slots__ = ("params", "rest", "body", "code", "env", "name")

    def __init__(self, params, rest, body, code, env, name=None):
        self.params = params
        self.rest = rest
        self.body = body
        self.code = code
        self.env = env
        self.name = name

    def __repr__(self) -> str:
        return f"#<procedure {self.name or 'lambda'}>"


class Builtin:
    __slots__ = ("name", "fn", "min_args", "max_args")

    def __init__(self, name, fn, min_args, max_args):
        self.name = name
        self.fn = fn
        self.min_args = min_args
        self.max_args = max_args

    def __repr__(self) -> str:
        return f"#<builtin {self.name}>"


class MemProc:
    """A memoized procedure. Its cache lives in the current :class:`World`."""

    __slots__ = ("proc",)

    def __init__(self, proc):
        self.proc = proc

    def __repr__(self) -> str:
        return f"#<mem {self.proc!r}>"


class World:
    """Per-sample state: the random stream and every `mem` cache."""

    __slots__ = ("rng", "caches")

    def __init__(self, rng: random.Random, caches: dict | None = None):
        self.rng = rng
        self.caches = {} if caches is None else caches

    def reset(self) -> None:
        self.caches = {}

    def snapshot(self) -> dict:
        return {proc: dict(cache) for proc, cache in self.caches.items()}


class Environment:
    __slots__ = ("vars", "parent")

    def __init__(self, bindings: dict | None = None, parent: "Environment | None" = None):
        self.vars = {} if bindings is None else bindings
        self.parent = parent

    def lookup(self, name: str) -> Value:
        env = self
        while env is not None:
            if name in env.vars:
                return env.vars[name]
            env = env.parent
        raise EvalError(f"unbound identifier '{name}'")

    def define(self, name: str, value: Value) -> None:
        self.vars[name] = value


# -- value helpers -------------------------------------------------------

def is_number(x: Value) -> bool:
    return type(x) is float


def datum_to_value(d: SExpr) -> Value:
    if isinstance(d, list):
        return tuple(datum_to_value(x) for x in d)
    if isinstance(d, Quote):
        return (sym("quote"), datum_to_value(d.inner))
    if isinstance(d, String):
        return str(d)
    return d


def values_equal(a: Value, b: Value) -> bool:
    if type(a) is not type(b):
        # str vs Symbol are different kinds; float/bool never compare equal
        return False
    if type(a) is tuple:
        return len(a) == len(b) and all(values_equal(x, y) for x, y in zip(a, b))
    return a == b if not callable_value(a) else a is b


def callable_value(x: Value) -> bool:
    return isinstance(x, (Procedure, Builtin, MemProc))


def format_value(v: Value) -> str:
    if v is True:
        return "#t"
    if v is False:
        return "#f"
    if type(v) is float:
        return repr(v)
    if type(v) is tuple:
        return "(" + " ".join(format_value(x) for x in v) + ")"
    if isinstance(v, Symbol):
        return str(v)
    if isinstance(v, str):
        return '"' + v + '"'
    return repr(v)


def _mem_key(args: list) -> tuple:
    # tag each argument with its class so that #t and 1 never share a slot
    return tuple([(a.__class__, a) for a in args])


# -- application ---------------------------------------------------------

def apply_procedure(f: Value, args: list, world: World) -> Value:
    cls = type(f)
    if cls is Procedure:
        params = f.params
        if f.rest is None:
            if len(args) != len(params):
                raise _Mismatch(f"arity mismatch: {f!r} expects {len(params)} "
                                f"argument(s), got {len(args)}")
            env = Environment(dict(zip(params, args)), f.env)
        else:
            if len(args) < len(params):
                raise _Mismatch(f"arity mismatch: {f!r} expects at least "
                                f"{len(params)} argument(s), got {len(args)}")
            bindings = dict(zip(params, args))
            bindings[f.rest] = tuple(args[len(params):])
            env = Environment(bindings, f.env)
        code = f.code
        if len(code) == 1:
            return code[0](env, world)
        for c in code[:-1]:
            c(env, world)
        return code[-1](env, world)
    if cls is Builtin:
        n = len(args)
        if n < f.min_args or (f.max_args is not None and n > f.max_args):
            raise _Mismatch(f"arity mismatch: {f.name} got {n} argument(s)")
        return f.fn(world, *args)
    if cls is MemProc:
        cache = world.caches.get(f)
        if cache is None:
            cache = world.caches[f] = {}
        key = _mem_key(args)
        if key in cache:
            return cache[key]
        value = apply_procedure(f.proc, args, world)
        cache[key] = value
        return value
    raise _Mismatch(f"not a procedure: {format_value(f)}")


# -- compiler ------------------------------------------------------------

_SPECIAL: dict[str, Callable[[list], Code]] = {}


def _special(name):
    def register(fn):
        _SPECIAL[name] = fn
        return fn
    return register


def analyze(x: SExpr) -> Code:
    """Compile an expression into a closure of ``(env, world)``."""
    if isinstance(x, Symbol):
        name = str(x)

        def lookup(env, world):
            e = env
            while e is not None:
                v = e.vars
                if name in v:
                    return v[name]
                e = e.parent
            raise EvalError(f"unbound identifier '{name}'", name)
        return lookup
    if isinstance(x, bool) or type(x) is float:
        return lambda env, world: x
    if isinstance(x, String):
        s = str(x)
        return lambda env, world: s
    if isinstance(x, Quote):
        datum = datum_to_value(x.inner)
        return lambda env, world: datum
    if isinstance(x, list):
        if not x:
            raise EvalError("empty application", "()")
        head = x[0]
        if isinstance(head, Symbol) and head in _SPECIAL:
            return _SPECIAL[head](x)
        return _analyze_application(x)
    raise EvalError(f"cannot evaluate {x!r}")


def _analyze_application(x: list) -> Code:
    fcode = analyze(x[0])
    acodes = [analyze(a) for a in x[1:]]

    def run(env, world):
        f = fcode(env, world)
        args = [a(env, world) for a in acodes]
        try:
            return apply_procedure(f, args, world)
        except _Mismatch as e:
            raise EvalError(str(e), to_source(x)) from None
    return run


def _body(forms: list, where: list) -> list[Code]:
    if not forms:
        raise EvalError("empty body", to_source(where))
    return [analyze(f) for f in forms]


def _params(spec: SExpr, where: list) -> tuple[tuple[str, ...], str | None]:
    if isinstance(spec, Symbol):
        return (), str(spec)
    if not isinstance(spec, list) or not all(isinstance(p, Symbol) for p in spec):
        raise EvalError("malformed parameter list", to_source(where))
    names = [str(p) for p in spec]
    if "." in names:
        i = names.index(".")
        if i != len(names) - 2:
            raise EvalError("malformed rest parameter", to_source(where))
        return tuple(names[:i]), names[-1]
    return tuple(names), None


def _make_lambda(spec, body_forms, where, name=None) -> Code:
    params, rest = _params(spec, where)
    code = _body(body_forms, where)

    def make(env, world):
        return Procedure(params, rest, body_forms, code, env, name)
    return make


@_special("quote")
def _quote(x):
    if len(x) != 2:
        raise EvalError("quote takes one datum", to_source(x))
    datum = datum_to_value(x[1])
    return lambda env, world: datum


@_special("lambda")
def _lambda(x):
    if len(x) < 3:
        raise EvalError("lambda needs parameters and a body", to_source(x))
    return _make_lambda(x[1], x[2:], x)


@_special("define")
def _define(x):
    if len(x) < 3:
        raise EvalError("define needs a name and a value", to_source(x))
    target = x[1]
    if isinstance(target, list):
        if not target or not isinstance(target[0], Symbol):
            raise EvalError("malformed define", to_source(x))
        name = str(target[0])
        vcode = _make_lambda(target[1:], x[2:], x, name)
    elif isinstance(target, Symbol):
        if len(x) != 3:
            raise EvalError("define takes exactly one value", to_source(x))
        name = str(target)
        vcode = analyze(x[2])
    else:
        raise EvalError("malformed define", to_source(x))

    def run(env, world):
        value = vcode(env, world)
        if type(value) is Procedure and value.name is None:
            value.name = name
        env.vars[name] = value
        return sym(name)
    return run


@_special("if")
def _if(x):
    if len(x) not in (3, 4):
        raise EvalError("if takes a test and one or two branches", to_source(x))
    test, then = analyze(x[1]), analyze(x[2])
    other = analyze(x[3]) if len(x) == 4 else (lambda env, world: False)

    def run(env, world):
        if test(env, world) is not False:
            return then(env, world)
        return other(env, world)
    return run


@_special("cond")
def _cond(x):
    clauses = []
    for clause in x[1:]:
        if not isinstance(clause, list) or not clause:
            raise EvalError("malformed cond clause", to_source(x))
        if isinstance(clause[0], Symbol) and clause[0] == "else":
            test = None
        else:
            test = analyze(clause[0])
        clauses.append((test, [analyze(e) for e in clause[1:]]))

    def run(env, world):
        for test, body in clauses:
            if test is None:
                value = True
            else:
                value = test(env, world)
            if value is not False:
                for c in body:
                    value = c(env, world)
                return value
        raise EvalError("no cond clause matched", to_source(x))
    return run


@_special("and")
def _and(x):
    codes = [analyze(e) for e in x[1:]]

    def run(env, world):
        value = True
        for c in codes:
            value = c(env, world)
            if value is False:
                return False
        return value
    return run


@_special("or")
def _or(x):
    codes = [analyze(e) for e in x[1:]]

    def run(env, world):
        for c in codes:
            value = c(env, world)
            if value is not False:
                return value
        return False
    return run


@_special("mem")
def _mem(x):
    if len(x) != 2:
        raise EvalError("mem takes one procedure", to_source(x))
    pcode = analyze(x[1])

    def run(env, world):
        proc = pcode(env, world)
        if not callable_value(proc):
            raise EvalError("mem of a non-procedure", to_source(x))
        return MemProc(proc)
    return run


@_special("condition")
def _condition(x):
    if len(x) != 2:
        raise EvalError("condition takes one expression", to_source(x))
    code = analyze(x[1])
    src = to_source(x)

    def run(env, world):
        value = code(env, world)
        if type(value) is not bool:
            raise EvalError("condition did not evaluate to a boolean", src)
        if not value:
            raise Rejected(src)
        return True
    return run


# -- builtins ------------------------------------------------------------

def _num(name: str, x: Value) -> float:
    if type(x) is not float:
        raise _Mismatch(f"type mismatch: {name} expects numbers, got {format_value(x)}")
    return x


def _list(name: str, x: Value) -> tuple:
    if type(x) is not tuple:
        raise _Mismatch(f"type mismatch: {name} expects a list, got {format_value(x)}")
    return x


def _add(world, *xs):
    total = 0.0
    for x in xs:
        total += _num("+", x)
    return total


def _mul(world, *xs):
    total = 1.0
    for x in xs:
        total *= _num("*", x)
    return total


def _sub(world, first, *rest):
    first = _num("-", first)
    if not rest:
        return -first
    for x in rest:
        first -= _num("-", x)
    return first


def _div(world, first, *rest):
    first = _num("/", first)
    if not rest:
        rest, first = (first,), 1.0
    for x in rest:
        if _num("/", x) == 0.0:
            raise _Mismatch("division by zero")
        first /= x
    return first


def _comparison(name, op):
    def compare(world, *xs):
        for x in xs:
            _num(name, x)
        return all(op(a, b) for a, b in zip(xs, xs[1:]))
    return compare


def _equal(world, a, b):
    return values_equal(a, b)


def _not(world, x):
    return x is False


def _make_list(world, *xs):
    return xs


def _length(world, xs):
    return float(len(_list("length", xs)))


def _sum(world, xs):
    total = 0.0
    for x in _list("sum", xs):
        total += _num("sum", x)
    return total


def _map(world, f, *lists):
    for xs in lists:
        _list("map", xs)
    return tuple(apply_procedure(f, list(args), world) for args in zip(*lists))


def _member(world, x, xs):
    return any(values_equal(x, y) for y in _list("member?", xs))


def _flip(world, p=0.5):
    p = _num("flip", p)
    if not 0.0 <= p <= 1.0:
        raise _Mismatch(f"flip probability {p} outside [0, 1]")
    return world.rng.random() < p


def _gaussian(world, mu, sigma):
    mu, sigma = _num("gaussian", mu), _num("gaussian", sigma)
    if not sigma > 0.0:
        raise _Mismatch(f"gaussian standard deviation must be positive, got {sigma}")
    return world.rng.normalvariate(mu, sigma)


def _uniform(world, a, b):
    a, b = _num("uniform", a), _num("uniform", b)
    return a + (b - a) * world.rng.random()


def _uniform_draw(world, xs):
    xs = _list("uniform-draw", xs)
    if not xs:
        raise _Mismatch("uniform-draw of an empty list")
    return xs[int(world.rng.random() * len(xs))]


BUILTINS = {
    "+": (_add, 0, None),
    "-": (_sub, 1, None),
    "*": (_mul, 0, None),
    "/": (_div, 1, None),
    ">": (_comparison(">", lambda a, b: a > b), 2, None),
    "<": (_comparison("<", lambda a, b: a < b), 2, None),
    ">=": (_comparison(">=", lambda a, b: a >= b), 2, None),
    "<=": (_comparison("<=", lambda a, b: a <= b), 2, None),
    "equal?": (_equal, 2, 2),
    "not": (_not, 1, 1),
    "list": (_make_list, 0, None),
    "length": (_length, 1, 1),
    "sum": (_sum, 1, 1),
    "map": (_map, 2, None),
    "member?": (_member, 2, 2),
    "flip": (_flip, 0, 1),
    "gaussian": (_gaussian, 2, 2),
    "uniform": (_uniform, 2, 2),
    "uniform-draw": (_uniform_draw, 1, 1),
}

# exact-distribution normal sampler; recorded next to the seed in outputs
GAUSSIAN_METHOD = "python-random-normalvariate"


def global_environment() -> Environment:
    env = Environment()
    for name, (fn, lo, hi) in BUILTINS.items():
        env.define(name, Builtin(name, fn, lo, hi))
    return env


def evaluate(expr: SExpr, env: Environment, world: World | random.Random) -> Value:
    """Evaluate one expression. `world` may be a bare seeded ``random.Random``."""
    if isinstance(world, random.Random):
        world = World(world)
    return analyze(expr)(env, world)


def run_program(forms: list[SExpr], env: Environment, world: World) -> Value:
    value = None
    for form in forms:
        value = analyze(form)(env, world)
    return value


def check_finite(value: Value, where: str) -> Value:
    if type(value) is float and not math.isfinite(value):
        raise EvalError("non-finite number", where)
    return value
