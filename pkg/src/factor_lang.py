"""
Contractivity factor expressions.

Factors are small arithmetic formulas in x (and y for surfaces):

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := '-'? atom ('^' INTEGER)?
    atom   := NUMBER | IDENT | IDENT '(' expr (',' expr)* ')' | '(' expr ')'

Multiplication is always explicit, so "2.9x" is rejected. Sup and Lipschitz
bounds are estimated by dense sampling unless the caller supplies them.
"""
import math
import re
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterator, List, Mapping, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from models import BoundsMode, ExprEvalError, ExprSyntaxError, MapSystemError


SAMPLES_1D = 10001
SAMPLES_2D = 257
SAFETY_FACTOR = 1.05

FACTOR_NAMES = ("s", "s_prime", "s_tilde", "s_tilde_prime")

FUNCTIONS: Dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "sin": np.sin,
    "cos": np.cos,
    "abs": np.abs,
    "exp": np.exp,
    "sqrt": np.sqrt,
}

VARIABLES = {1: ("x",), 2: ("x", "y")}


# --- AST ---

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Pow:
    base: "Node"
    exponent: int


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"


Node = Union[Num, Var, Neg, BinOp, Pow, Call]


@dataclass(frozen=True)
class Expr:
    """Parsed factor expression over the variables of its dimension"""
    root: Node
    dim: int
    text: str = field(default="", compare=False)

    def __call__(self, *point):
        return eval_expr(self, point[0] if len(point) == 1 else point)

    def __str__(self) -> str:
        return to_text(self.root)


# --- Tokenizer ---

class Token(NamedTuple):
    kind: str
    text: str
    pos: int


_TOKEN_RE = re.compile(
    r"(?P<ws>\s+)"
    r"|(?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),])"
)


def tokenize(text: str) -> List[Token]:
    tokens: List[Token] = []
    pos = 0
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        if match is None:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = match.lastgroup
        if kind != "ws":
            tokens.append(Token(kind, match.group(), pos))
        pos = match.end()
    tokens.append(Token("end", "", len(text)))
    return tokens


# --- Parser ---

class _Parser:
    def __init__(self, text: str, dim: int):
        self.text = text
        self.dim = dim
        self.tokens = tokenize(text)
        self.index = 0

    @property
    def current(self) -> Token:
        return self.tokens[self.index]

    def advance(self) -> Token:
        tok = self.tokens[self.index]
        self.index += 1
        return tok

    def accept(self, text: str) -> bool:
        if self.current.kind == "op" and self.current.text == text:
            self.index += 1
            return True
        return False

    def unexpected(self, expecting: str):
        tok = self.current
        if tok.kind == "end":
            raise ExprSyntaxError(f"unexpected end of expression, expected {expecting}", tok.pos)
        prev = self.tokens[self.index - 1] if self.index > 0 else None
        implicit = (
            prev is not None
            and (prev.kind in ("number", "ident") or prev.text == ")")
            and (tok.kind in ("number", "ident") or tok.text == "(")
        )
        if implicit:
            raise ExprSyntaxError(
                f"implicit multiplication is not supported, write '{prev.text}*{tok.text}'", tok.pos
            )
        raise ExprSyntaxError(f"unexpected {tok.text!r}, expected {expecting}", tok.pos)

    def parse(self) -> Node:
        node = self.expr()
        if self.current.kind != "end":
            self.unexpected("an operator or end of expression")
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.current.kind == "op" and self.current.text in "+-":
            op = self.advance().text
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.factor()
        while self.current.kind == "op" and self.current.text in "*/":
            op = self.advance().text
            node = BinOp(op, node, self.factor())
        return node

    def factor(self) -> Node:
        negate = self.accept("-")
        node = self.atom()
        if self.accept("^"):
            tok = self.current
            if tok.kind != "number" or not tok.text.isdigit():
                raise ExprSyntaxError("exponent must be a non-negative integer literal", tok.pos)
            self.advance()
            node = Pow(node, int(tok.text))
        return Neg(node) if negate else node

    def atom(self) -> Node:
        tok = self.current
        if tok.kind == "number":
            self.advance()
            value = float(tok.text)
            if not math.isfinite(value):
                raise ExprSyntaxError(f"literal {tok.text} is not finite", tok.pos)
            return Num(value)
        if tok.kind == "ident":
            self.advance()
            return self.identifier(tok)
        if self.accept("("):
            node = self.expr()
            if not self.accept(")"):
                self.unexpected("')'")
            return node
        self.unexpected("a number, variable, function or '('")

    def identifier(self, tok: Token) -> Node:
        name = tok.text
        if name in FUNCTIONS:
            if not self.accept("("):
                raise ExprSyntaxError(f"function {name!r} needs an argument list", tok.pos)
            args = [self.expr()]
            while self.accept(","):
                args.append(self.expr())
            if not self.accept(")"):
                self.unexpected("')'")
            if len(args) != 1:
                raise ExprSyntaxError(f"function {name!r} takes 1 argument, got {len(args)}", tok.pos)
            return Call(name, args[0])
        if name in VARIABLES[self.dim]:
            return Var(name)
        if name in VARIABLES[2]:
            raise ExprSyntaxError(f"variable {name!r} is not available in {self.dim}D factors", tok.pos)
        raise ExprSyntaxError(f"unknown identifier {name!r}", tok.pos)


def parse_expr(text: str, dim: int = 1) -> Expr:
    """
    Parse a factor formula.

    Args:
        text: expression source, e.g. "0.99-abs(sin(10*x))"
        dim: 1 allows only x, 2 allows x and y

    Returns:
        Expr

    Raises:
        ExprSyntaxError: grammar violation, unknown identifier or a variable outside dim
    """
    if dim not in VARIABLES:
        raise ValueError(f"dim must be 1 or 2, got {dim}")
    return Expr(root=_Parser(text, dim).parse(), dim=dim, text=text)


# --- Printer ---

def _atom_text(node: Node) -> str:
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Call):
        return f"{node.func}({to_text(node.arg)})"
    return f"({to_text(node)})"


def _factor_text(node: Node) -> str:
    if isinstance(node, Neg):
        return "-" + _factor_text(node.operand) if isinstance(node.operand, Pow) else "-" + _atom_text(node.operand)
    if isinstance(node, Pow):
        return f"{_atom_text(node.base)}^{node.exponent}"
    return _atom_text(node)


def _term_text(node: Node) -> str:
    if isinstance(node, BinOp) and node.op in "*/":
        return f"{_term_text(node.left)}{node.op}{_factor_text(node.right)}"
    return _factor_text(node)


def to_text(node: Node) -> str:
    """Canonical source text; parsing it back yields an equal tree"""
    if isinstance(node, Expr):
        node = node.root
    if isinstance(node, BinOp) and node.op in "+-":
        return f"{to_text(node.left)}{node.op}{_term_text(node.right)}"
    return _term_text(node)


# --- Evaluation ---

def _evaluate(node: Node, env: Mapping[str, np.ndarray]) -> np.ndarray:
    if isinstance(node, Num):
        return np.float64(node.value)
    if isinstance(node, Var):
        return env[node.name]
    if isinstance(node, Neg):
        return np.negative(_evaluate(node.operand, env))
    if isinstance(node, BinOp):
        left = _evaluate(node.left, env)
        right = _evaluate(node.right, env)
        if node.op == "+":
            return np.add(left, right)
        if node.op == "-":
            return np.subtract(left, right)
        if node.op == "*":
            return np.multiply(left, right)
        return np.divide(left, right)
    if isinstance(node, Pow):
        return np.power(_evaluate(node.base, env), node.exponent)
    if isinstance(node, Call):
        return FUNCTIONS[node.func](_evaluate(node.arg, env))
    raise TypeError(f"not an expression node: {node!r}")


def eval_expr(e: Expr, point) -> Any:
    """
    Evaluate e at a point (scalar or array x in 1D, an (x, y) pair in 2D).

    Array inputs broadcast; a scalar input returns a float.

    Raises:
        ExprEvalError: division by zero, sqrt of a negative, overflow
    """
    if e.dim == 1:
        coords = (np.asarray(point, dtype=float),)
    else:
        if len(point) != 2:
            raise ValueError("2D expressions are evaluated at an (x, y) pair")
        coords = tuple(np.asarray(c, dtype=float) for c in point)
    coords = np.broadcast_arrays(*coords)
    env = dict(zip(VARIABLES[e.dim], coords))
    try:
        with np.errstate(divide="raise", invalid="raise", over="raise"):
            result = _evaluate(e.root, env)
    except (FloatingPointError, ZeroDivisionError) as exc:
        raise ExprEvalError(f"cannot evaluate {to_text(e.root)!r}: {exc}")
    result = np.broadcast_to(result, coords[0].shape).astype(float)
    if result.ndim == 0:
        return float(result)
    return result


# --- Sampled bounds ---

def sample_points(region: Sequence[float], samples: Optional[int] = None) -> Tuple[np.ndarray, ...]:
    """Uniform sample of an interval (a, b) or rectangle (x0, x1, y0, y1)"""
    if len(region) == 2:
        a, b = region
        if not b > a:
            raise ValueError(f"empty interval {tuple(region)}")
        return (np.linspace(a, b, samples or SAMPLES_1D),)
    x0, x1, y0, y1 = region
    if not (x1 > x0 and y1 > y0):
        raise ValueError(f"empty rectangle {tuple(region)}")
    count = samples or SAMPLES_2D
    gx, gy = np.meshgrid(np.linspace(x0, x1, count), np.linspace(y0, y1, count), indexing="ij")
    return gx, gy


def _sample(e: Expr, region: Sequence[float], samples: Optional[int]) -> Tuple[Tuple[np.ndarray, ...], np.ndarray]:
    if (len(region) == 2) != (e.dim == 1):
        raise ValueError(f"region {tuple(region)} does not match a {e.dim}D expression")
    pts = sample_points(region, samples)
    values = eval_expr(e, pts[0] if e.dim == 1 else pts)
    return pts, np.broadcast_to(values, pts[0].shape)


def lipschitz_from_samples(pts: Tuple[np.ndarray, ...], values: np.ndarray) -> float:
    """
    Largest adjacent difference quotient of values sampled on a uniform
    grid; values may carry trailing component axes.
    """
    best = 0.0
    for axis, coord in enumerate(pts):
        dv = np.abs(np.diff(values, axis=axis))
        h = np.diff(coord, axis=axis)
        if dv.ndim > h.ndim:
            dv = dv.sum(axis=tuple(range(h.ndim, dv.ndim)))
        if dv.size:
            best = max(best, float(np.max(dv / h)))
    return best


def _as_expr(f) -> Expr:
    return f.expr if isinstance(f, FactorFn) else f


def sampled_sup(f, region: Sequence[float], samples: Optional[int] = None) -> float:
    """max |f| over the uniform sample, without padding"""
    _, values = _sample(_as_expr(f), region, samples)
    return float(np.max(np.abs(values)))


def sampled_lipschitz(f, region: Sequence[float], samples: Optional[int] = None) -> float:
    pts, values = _sample(_as_expr(f), region, samples)
    return lipschitz_from_samples(pts, values)


def estimate_sup(f, region: Sequence[float], samples: Optional[int] = None) -> float:
    return SAFETY_FACTOR * sampled_sup(f, region, samples)


def estimate_lipschitz(f, region: Sequence[float], samples: Optional[int] = None) -> float:
    return SAFETY_FACTOR * sampled_lipschitz(f, region, samples)


# --- Factors ---

@dataclass(frozen=True)
class FactorFn:
    """One contractivity factor with its bounds on the region it is evaluated over"""
    expr: Expr
    region: Tuple[float, ...]
    dim: int
    sup_sampled: float
    sup_est: float
    lip_est: float
    bounds_mode: BoundsMode

    def __call__(self, *point):
        return self.expr(*point)

    def __str__(self) -> str:
        return str(self.expr)


FactorSource = Union[str, float, int, Expr, Mapping[str, Any]]


def make_factor(source: FactorSource, dim: int, region: Sequence[float],
                sup: Optional[float] = None, lipschitz: Optional[float] = None,
                samples: Optional[int] = None) -> FactorFn:
    """
    Build a FactorFn from a formula, a constant, a parsed Expr or an
    {"expr", "sup", "lipschitz"} mapping.

    Supplied bounds replace the sampled ones; the factor counts as
    user-supplied only when both are given.
    """
    if isinstance(source, Mapping):
        if "expr" not in source:
            raise ValueError("factor mapping needs an 'expr' entry")
        sup = source.get("sup", sup)
        lipschitz = source.get("lipschitz", lipschitz)
        source = source["expr"]
    if isinstance(source, Expr):
        expr = source
    elif isinstance(source, (int, float)) and not isinstance(source, bool):
        expr = parse_expr(repr(float(source)), dim)
    elif isinstance(source, str):
        expr = parse_expr(source, dim)
    else:
        raise ValueError(f"factor must be a formula or a number, got {source!r}")
    region = tuple(float(v) for v in region)

    if sup is not None:
        if not (math.isfinite(sup) and sup >= 0):
            raise ValueError(f"supplied sup bound must be a finite non-negative number, got {sup}")
        sup_sampled = sup_est = float(sup)
    else:
        sup_sampled = sampled_sup(expr, region, samples)
        sup_est = SAFETY_FACTOR * sup_sampled
    if lipschitz is not None:
        if not (math.isfinite(lipschitz) and lipschitz >= 0):
            raise ValueError(f"supplied Lipschitz bound must be a finite non-negative number, got {lipschitz}")
        lip_est = float(lipschitz)
    else:
        lip_est = estimate_lipschitz(expr, region, samples)
    mode = BoundsMode.USER_SUPPLIED if sup is not None and lipschitz is not None else BoundsMode.ESTIMATED
    return FactorFn(
        expr=expr, region=region, dim=dim, sup_sampled=sup_sampled, sup_est=sup_est,
        lip_est=lip_est, bounds_mode=mode,
    )


@dataclass(frozen=True)
class FactorQuad:
    """
    Factor matrix of one region:

        | s        s_prime       |
        | s_tilde  s_tilde_prime |

    acting on (y - g, z - g~).
    """
    s: FactorFn
    s_prime: FactorFn
    s_tilde: FactorFn
    s_tilde_prime: FactorFn

    def factors(self) -> Tuple[FactorFn, FactorFn, FactorFn, FactorFn]:
        return self.s, self.s_prime, self.s_tilde, self.s_tilde_prime

    def column_sums(self, padded: bool = False) -> Tuple[float, float]:
        """(|s| + |s~|, |s'| + |s~'|) sup sums, the l1 operator-norm terms"""
        key = "sup_est" if padded else "sup_sampled"
        s, sp, st, stp = (getattr(f, key) for f in self.factors())
        return s + st, sp + stp

    def max_lipschitz(self) -> float:
        return max(self.s.lip_est + self.s_tilde.lip_est, self.s_prime.lip_est + self.s_tilde_prime.lip_est)

    def values(self, *point) -> Tuple[np.ndarray, ...]:
        return tuple(np.asarray(f(*point), dtype=float) for f in self.factors())

    def matrix(self, *point) -> np.ndarray:
        """Factor matrix at point(s), shape (..., 2, 2)"""
        s, sp, st, stp = np.broadcast_arrays(*self.values(*point))
        return np.stack([np.stack([s, sp], axis=-1), np.stack([st, stp], axis=-1)], axis=-2)


@dataclass(frozen=True)
class FactorSet:
    """One FactorQuad per region; 2D quads are stored by linear index i + j*n"""
    dim: int
    quads: Tuple[FactorQuad, ...]

    def __len__(self) -> int:
        return len(self.quads)

    def __getitem__(self, r: int) -> FactorQuad:
        return self.quads[r]

    def __iter__(self) -> Iterator[FactorQuad]:
        return iter(self.quads)

    def all_factors(self) -> Iterator[Tuple[int, str, FactorFn]]:
        for r, quad in enumerate(self.quads):
            for name, fn in zip(FACTOR_NAMES, quad.factors()):
                yield r, name, fn

    @property
    def bounds_mode(self) -> BoundsMode:
        if all(fn.bounds_mode == BoundsMode.USER_SUPPLIED for _, _, fn in self.all_factors()):
            return BoundsMode.USER_SUPPLIED
        return BoundsMode.ESTIMATED

    def offending(self) -> List[Tuple[int, str, float]]:
        """Factors whose padded sup estimate is not below 1"""
        return [(r, name, fn.sup_est) for r, name, fn in self.all_factors() if fn.sup_est >= 1.0]


def _check_names(factors: Mapping[str, Any]):
    missing = [name for name in FACTOR_NAMES if name not in factors]
    extra = [name for name in factors if name not in FACTOR_NAMES]
    if missing or extra:
        raise MapSystemError(f"factor lists must be exactly {FACTOR_NAMES}; missing {missing}, unexpected {extra}")


def build_factor_set_1d(xs: Sequence[float], factors: Mapping[str, Sequence[FactorSource]],
                        samples: Optional[int] = None) -> FactorSet:
    """
    Args:
        xs: knots; factor i is sampled over region [x_i, x_{i+1}]
        factors: the four lists keyed by FACTOR_NAMES, one entry per region
        samples: sample count per region (default SAMPLES_1D)
    """
    _check_names(factors)
    n = len(xs) - 1
    for name in FACTOR_NAMES:
        if len(factors[name]) != n:
            raise MapSystemError(f"factor list {name!r} has {len(factors[name])} entries for {n} regions")
    quads = []
    for i in range(n):
        region = (xs[i], xs[i + 1])
        fns = [make_factor(factors[name][i], 1, region, samples=samples) for name in FACTOR_NAMES]
        quads.append(FactorQuad(*fns))
    return FactorSet(dim=1, quads=tuple(quads))


def build_factor_set_2d(xs: Sequence[float], ys: Sequence[float],
                        factors: Mapping[str, Sequence[Sequence[FactorSource]]],
                        samples: Optional[int] = None) -> FactorSet:
    """Tables are indexed [i][j] (rows follow x regions); factor (i, j) is sampled over E_ij"""
    _check_names(factors)
    n, m = len(xs) - 1, len(ys) - 1
    for name in FACTOR_NAMES:
        table = factors[name]
        if len(table) != n or any(len(row) != m for row in table):
            raise MapSystemError(f"factor table {name!r} must be {n} x {m}")
    quads: List[Optional[FactorQuad]] = [None] * (n * m)
    for j in range(m):
        for i in range(n):
            region = (xs[i], xs[i + 1], ys[j], ys[j + 1])
            fns = [make_factor(factors[name][i][j], 2, region, samples=samples) for name in FACTOR_NAMES]
            quads[i + j * n] = FactorQuad(*fns)
    return FactorSet(dim=2, quads=tuple(quads))


def zero_factors_1d(n: int) -> Dict[str, List[float]]:
    return {name: [0.0] * n for name in FACTOR_NAMES}


def constant_factors_2d(n: int, m: int, values: Mapping[str, float]) -> Dict[str, List[List[float]]]:
    return {name: [[values.get(name, 0.0)] * m for _ in range(n)] for name in FACTOR_NAMES}
