"""Model-file and formula frontend.

Concrete syntax (keyword blocks, `//` or `#` comments):

    vars p, q;
    agent A { observes: p; protocol: rand(p); { q := p; p := !q }; skip; }
    env { q := p & q; }
    init: !q;
    horizon: 3;
    spec: Knows A p @ 2;

Program expressions use `! & ^ | => <=>` plus the constants `0/1` and
`true/false`.  Formulas use `! & | => <=>`, atoms optionally timed with
`@t`, and the prefix operator `Knows <agent> <formula>`; or, implication
and equivalence are desugared into the not/and/knows core at parse time.
An atom without an explicit time is stamped later with the evaluation
time of the query.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import ParseError

# -- program expressions ------------------------------------------------------

BIN_OPS = ("and", "or", "xor", "implies", "iff")


@dataclass(frozen=True)
class Expr:
    pass


@dataclass(frozen=True)
class EVar(Expr):
    name: str


@dataclass(frozen=True)
class EConst(Expr):
    value: int


@dataclass(frozen=True)
class ENot(Expr):
    arg: Expr


@dataclass(frozen=True)
class EBin(Expr):
    op: str
    left: Expr
    right: Expr

    def __post_init__(self):
        if self.op not in BIN_OPS:
            raise ValueError(f"unknown operator {self.op!r}")


def expr_vars(e: Expr) -> frozenset[str]:
    if isinstance(e, EVar):
        return frozenset({e.name})
    if isinstance(e, EConst):
        return frozenset()
    if isinstance(e, ENot):
        return expr_vars(e.arg)
    return expr_vars(e.left) | expr_vars(e.right)


def eval_expr(e: Expr, env) -> int:
    """Evaluate over an environment mapping names to 0/1 (or numpy arrays)."""
    if isinstance(e, EVar):
        return env[e.name]
    if isinstance(e, EConst):
        return e.value
    if isinstance(e, ENot):
        return 1 - eval_expr(e.arg, env)
    a = eval_expr(e.left, env)
    b = eval_expr(e.right, env)
    if e.op == "and":
        return a & b
    if e.op == "or":
        return a | b
    if e.op == "xor":
        return a ^ b
    if e.op == "implies":
        return (1 - a) | b
    return 1 - (a ^ b)


def substitute(e: Expr, env: dict[str, Expr]) -> Expr:
    """Replace every variable by its expression in env (missing ids stay)."""
    if isinstance(e, EVar):
        return env.get(e.name, e)
    if isinstance(e, EConst):
        return e
    if isinstance(e, ENot):
        return ENot(substitute(e.arg, env))
    return EBin(e.op, substitute(e.left, env), substitute(e.right, env))


_EXPR_OP_TEXT = {"and": "&", "or": "|", "xor": "^", "implies": "=>", "iff": "<=>"}
_EXPR_PREC = {"iff": 0, "implies": 1, "or": 2, "xor": 3, "and": 4}


def expr_to_str(e: Expr, _prec: int = 0) -> str:
    if isinstance(e, EVar):
        return e.name
    if isinstance(e, EConst):
        return str(e.value)
    if isinstance(e, ENot):
        return "!" + expr_to_str(e.arg, 5)
    p = _EXPR_PREC[e.op]
    if e.op == "implies":  # right associative
        text = f"{expr_to_str(e.left, p + 1)} => {expr_to_str(e.right, p)}"
    else:
        text = f"{expr_to_str(e.left, p)} {_EXPR_OP_TEXT[e.op]} {expr_to_str(e.right, p + 1)}"
    return f"({text})" if p < _prec else text


# -- statements, protocols, systems ---------------------------------------------


@dataclass(frozen=True)
class SAssign:
    var: str
    expr: Expr


@dataclass(frozen=True)
class SRand:
    var: str


Stmt = SAssign | SRand
Code = tuple  # tuple[Stmt, ...]


@dataclass(frozen=True)
class ASkip:
    pass


@dataclass(frozen=True)
class AAtomic:
    code: Code


Action = ASkip | AAtomic


@dataclass(frozen=True)
class AgentProtocol:
    agent: str
    observes: tuple[str, ...]
    actions: tuple[Action, ...]


@dataclass(frozen=True)
class SystemSpec:
    variables: tuple[str, ...]
    agents: tuple[AgentProtocol, ...]
    env: Code
    init: Expr
    horizon: int
    formula: "Formula | None"
    eval_time: int | None

    def agent_names(self) -> tuple[str, ...]:
        return tuple(a.agent for a in self.agents)

    def stamped_formula(self, eval_time: int | None = None) -> "Formula":
        if self.formula is None:
            raise ParseError("model declares no spec formula")
        t = self.eval_time if eval_time is None else eval_time
        if t is None:
            t = self.horizon
        f = stamp_formula(self.formula, t)
        validate_formula(f, self.horizon, self.agent_names())
        return f


# -- formulas ----------------------------------------------------------------------


@dataclass(frozen=True)
class Formula:
    pass


@dataclass(frozen=True)
class FAtom(Formula):
    name: str
    time: int | None = None


@dataclass(frozen=True)
class FNot(Formula):
    arg: Formula


@dataclass(frozen=True)
class FAnd(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class FKnows(Formula):
    agent: str
    arg: Formula


def f_or(a: Formula, b: Formula) -> Formula:
    return FNot(FAnd(FNot(a), FNot(b)))


def f_implies(a: Formula, b: Formula) -> Formula:
    return FNot(FAnd(a, FNot(b)))


def f_iff(a: Formula, b: Formula) -> Formula:
    return FAnd(f_implies(a, b), f_implies(b, a))


def stamp_formula(f: Formula, default_time: int) -> Formula:
    if isinstance(f, FAtom):
        return FAtom(f.name, default_time if f.time is None else f.time)
    if isinstance(f, FNot):
        return FNot(stamp_formula(f.arg, default_time))
    if isinstance(f, FAnd):
        return FAnd(stamp_formula(f.left, default_time), stamp_formula(f.right, default_time))
    return FKnows(f.agent, stamp_formula(f.arg, default_time))


def formula_atoms(f: Formula) -> frozenset[tuple[str, int | None]]:
    if isinstance(f, FAtom):
        return frozenset({(f.name, f.time)})
    if isinstance(f, FNot):
        return formula_atoms(f.arg)
    if isinstance(f, FAnd):
        return formula_atoms(f.left) | formula_atoms(f.right)
    return formula_atoms(f.arg)


def formula_agents(f: Formula) -> frozenset[str]:
    if isinstance(f, FAtom):
        return frozenset()
    if isinstance(f, FNot):
        return formula_agents(f.arg)
    if isinstance(f, FAnd):
        return formula_agents(f.left) | formula_agents(f.right)
    return frozenset({f.agent}) | formula_agents(f.arg)


def formula_to_str(f: Formula) -> str:
    """Canonical core form: round trips through parse_formula."""
    if isinstance(f, FAtom):
        return f.name if f.time is None else f"{f.name}@{f.time}"
    if isinstance(f, FNot):
        return "!" + _wrap_unary(f.arg)
    if isinstance(f, FAnd):
        return f"{_wrap_and(f.left)} & {_wrap_unary(f.right)}"
    return f"Knows {f.agent} {_wrap_unary(f.arg)}"


def _wrap_and(f: Formula) -> str:
    return formula_to_str(f) if isinstance(f, (FAtom, FNot, FAnd)) else f"({formula_to_str(f)})"


def _wrap_unary(f: Formula) -> str:
    return formula_to_str(f) if isinstance(f, FAtom) else f"({formula_to_str(f)})"


def validate_formula(f: Formula, horizon: int, agents: Sequence[str]) -> None:
    for name, t in formula_atoms(f):
        if t is not None and not (0 <= t <= horizon):
            raise ParseError(f"atom {name}@{t} is outside the time range 0..{horizon}")
    for a in formula_agents(f):
        if a not in agents:
            raise ParseError(f"unknown agent {a!r} in formula")


# -- tokenizer -----------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<comment>//[^\n]*|\#[^\n]*)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<nat>\d+)
  | (?P<op><=>|=>|:=|\.\.|[!&|^@;:,{}()])
    """,
    re.VERBOSE,
)

KEYWORDS = {"vars", "agent", "env", "init", "spec", "horizon", "observes", "protocol",
            "skip", "rand", "Knows", "true", "false"}


@dataclass(frozen=True)
class Token:
    kind: str  # name | nat | op | eof
    text: str
    line: int
    col: int


def tokenize(text: str, filename: str) -> list[Token]:
    tokens = []
    line, col, pos = 1, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", filename, line, col)
        kind = m.lastgroup
        chunk = m.group()
        if kind not in ("ws", "comment"):
            tokens.append(Token(kind, chunk, line, col))
        newlines = chunk.count("\n")
        if newlines:
            line += newlines
            col = len(chunk) - chunk.rfind("\n")
        else:
            col += len(chunk)
        pos = m.end()
    tokens.append(Token("eof", "", line, col))
    return tokens


# -- parser ---------------------------------------------------------------------------


class _Parser:
    def __init__(self, text: str, filename: str):
        self.filename = filename
        self.tokens = tokenize(text, filename)
        self.pos = 0

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def error(self, message: str, tok: Token | None = None):
        tok = tok or self.peek()
        raise ParseError(message, self.filename, tok.line, tok.col)

    def expect(self, text: str) -> Token:
        tok = self.peek()
        if tok.text != text:
            self.error(f"expected {text!r}, found {tok.text or 'end of input'!r}")
        return self.advance()

    def expect_name(self, what: str = "name") -> Token:
        tok = self.peek()
        if tok.kind != "name" or tok.text in KEYWORDS:
            self.error(f"expected {what}, found {tok.text or 'end of input'!r}")
        return self.advance()

    def expect_nat(self) -> int:
        tok = self.peek()
        if tok.kind != "nat":
            self.error(f"expected a number, found {tok.text or 'end of input'!r}")
        self.advance()
        return int(tok.text)

    def at(self, text: str) -> bool:
        return self.peek().text == text

    # expressions: <=> , => , | , ^ , & , unary

    def parse_expr(self) -> Expr:
        return self._expr_iff()

    def _expr_iff(self) -> Expr:
        left = self._expr_implies()
        while self.at("<=>"):
            self.advance()
            left = EBin("iff", left, self._expr_implies())
        return left

    def _expr_implies(self) -> Expr:
        left = self._expr_or()
        if self.at("=>"):
            self.advance()
            return EBin("implies", left, self._expr_implies())
        return left

    def _expr_or(self) -> Expr:
        left = self._expr_xor()
        while self.at("|"):
            self.advance()
            left = EBin("or", left, self._expr_xor())
        return left

    def _expr_xor(self) -> Expr:
        left = self._expr_and()
        while self.at("^"):
            self.advance()
            left = EBin("xor", left, self._expr_and())
        return left

    def _expr_and(self) -> Expr:
        left = self._expr_unary()
        while self.at("&"):
            self.advance()
            left = EBin("and", left, self._expr_unary())
        return left

    def _expr_unary(self) -> Expr:
        tok = self.peek()
        if tok.text == "!":
            self.advance()
            return ENot(self._expr_unary())
        if tok.text == "(":
            self.advance()
            inner = self.parse_expr()
            self.expect(")")
            return inner
        if tok.kind == "nat" and tok.text in ("0", "1"):
            self.advance()
            return EConst(int(tok.text))
        if tok.text in ("true", "false"):
            self.advance()
            return EConst(1 if tok.text == "true" else 0)
        if tok.kind == "name" and tok.text not in KEYWORDS:
            self.advance()
            return EVar(tok.text)
        self.error(f"expected an expression, found {tok.text or 'end of input'!r}")

    # formulas: <=> , => , | , & , unary(! Knows atom)

    def parse_formula(self) -> Formula:
        return self._f_iff()

    def _f_iff(self) -> Formula:
        left = self._f_implies()
        while self.at("<=>"):
            self.advance()
            left = f_iff(left, self._f_implies())
        return left

    def _f_implies(self) -> Formula:
        left = self._f_or()
        if self.at("=>"):
            self.advance()
            return f_implies(left, self._f_implies())
        return left

    def _f_or(self) -> Formula:
        left = self._f_and()
        while self.at("|"):
            self.advance()
            left = f_or(left, self._f_and())
        return left

    def _f_and(self) -> Formula:
        left = self._f_unary()
        while self.at("&"):
            self.advance()
            left = FAnd(left, self._f_unary())
        return left

    def _f_unary(self) -> Formula:
        tok = self.peek()
        if tok.text == "!":
            self.advance()
            return FNot(self._f_unary())
        if tok.text == "Knows":
            self.advance()
            agent = self.expect_name("agent id").text
            return FKnows(agent, self._f_unary())
        if tok.text == "(":
            self.advance()
            inner = self.parse_formula()
            self.expect(")")
            return inner
        if tok.kind == "name" and tok.text not in KEYWORDS:
            self.advance()
            t = None
            if self.at("@"):
                self.advance()
                t = self.expect_nat()
            return FAtom(tok.text, t)
        self.error(f"expected a formula, found {tok.text or 'end of input'!r}")

    # statements and actions

    def parse_stmt(self) -> Stmt:
        tok = self.peek()
        if tok.text == "rand":
            self.advance()
            self.expect("(")
            var = self.expect_name("variable").text
            self.expect(")")
            return SRand(var)
        var = self.expect_name("variable").text
        self.expect(":=")
        return SAssign(var, self.parse_expr())

    def parse_code(self, stop: str) -> Code:
        stmts = []
        while not self.at(stop):
            stmts.append(self.parse_stmt())
            if self.at(";"):
                self.advance()
            else:
                break
        return tuple(stmts)

    def parse_action(self) -> Action:
        if self.at("skip"):
            self.advance()
            return ASkip()
        if self.at("{"):
            self.advance()
            code = self.parse_code("}")
            self.expect("}")
            return AAtomic(code)
        return AAtomic((self.parse_stmt(),))


def _namelist(p: _Parser) -> list[str]:
    names = [p.expect_name().text]
    while p.at(","):
        p.advance()
        names.append(p.expect_name().text)
    return names


def parse_system(text: str, filename: str = "<model>") -> SystemSpec:
    """Parse and validate a full model file."""
    p = _Parser(text, filename)
    variables: list[str] = []
    agents: list[AgentProtocol] = []
    env: Code = ()
    init: Expr | None = None
    horizon: int | None = None
    formula: Formula | None = None
    eval_time: int | None = None
    seen_env = False

    while p.peek().kind != "eof":
        tok = p.peek()
        if tok.text == "vars":
            p.advance()
            for name in _namelist(p):
                if name in variables:
                    p.error(f"variable {name!r} declared twice", tok)
                variables.append(name)
            p.expect(";")
        elif tok.text == "agent":
            p.advance()
            name_tok = p.peek()
            name = p.expect_name("agent id").text
            if any(a.agent == name for a in agents):
                p.error(f"duplicate agent id {name!r}", name_tok)
            p.expect("{")
            p.expect("observes")
            p.expect(":")
            observes = tuple(_namelist(p))
            p.expect(";")
            p.expect("protocol")
            p.expect(":")
            actions = []
            while not p.at("}"):
                actions.append(p.parse_action())
                if p.at(";"):
                    p.advance()
                else:
                    break
            p.expect("}")
            agents.append(AgentProtocol(name, observes, tuple(actions)))
        elif tok.text == "env":
            if seen_env:
                p.error("duplicate env block", tok)
            seen_env = True
            p.advance()
            p.expect("{")
            env = p.parse_code("}")
            p.expect("}")
        elif tok.text == "init":
            if init is not None:
                p.error("duplicate init declaration", tok)
            p.advance()
            p.expect(":")
            init = p.parse_expr()
            p.expect(";")
        elif tok.text == "horizon":
            p.advance()
            p.expect(":")
            horizon = p.expect_nat()
            p.expect(";")
        elif tok.text == "spec":
            if formula is not None:
                p.error("duplicate spec declaration", tok)
            p.advance()
            p.expect(":")
            formula = p.parse_formula()
            if p.at("@"):
                p.advance()
                eval_time = p.expect_nat()
            p.expect(";")
        else:
            p.error(f"expected a declaration, found {tok.text!r}")

    if not agents:
        raise ParseError("no agents declared", filename, 1, 1)
    if init is None:
        init = EConst(1)

    declared = set(variables)

    def check_var(name: str, what: str):
        if name not in declared:
            raise ParseError(f"undeclared variable {name!r} in {what}", filename, 1, 1)

    longest = max((len(a.actions) for a in agents), default=0)
    if horizon is None:
        horizon = longest
    if horizon < longest:
        raise ParseError(
            f"horizon {horizon} is shorter than the longest protocol ({longest})",
            filename, 1, 1,
        )

    for a in agents:
        for v in a.observes:
            check_var(v, f"observes of agent {a.agent}")
        for act in a.actions:
            if isinstance(act, AAtomic):
                for stmt in act.code:
                    check_var(stmt.var, f"protocol of agent {a.agent}")
                    if isinstance(stmt, SAssign):
                        for v in expr_vars(stmt.expr):
                            check_var(v, f"protocol of agent {a.agent}")
    for stmt in env:
        check_var(stmt.var, "env code")
        if isinstance(stmt, SAssign):
            for v in expr_vars(stmt.expr):
                check_var(v, "env code")
    for v in expr_vars(init):
        check_var(v, "init condition")

    spec = SystemSpec(tuple(variables), tuple(agents), env, init, horizon, formula, eval_time)
    if formula is not None:
        for name, _ in formula_atoms(formula):
            check_var(name, "spec formula")
        t = eval_time if eval_time is not None else horizon
        if not (0 <= t <= horizon):
            raise ParseError(f"evaluation time {t} outside 0..{horizon}", filename, 1, 1)
        validate_formula(stamp_formula(formula, t), horizon, spec.agent_names())
    return spec


def parse_formula(
    text: str,
    default_time: int,
    horizon: int | None = None,
    agents: Iterable[str] | None = None,
    filename: str = "<formula>",
) -> Formula:
    """Parse a standalone formula; untimed atoms are stamped with default_time."""
    p = _Parser(text, filename)
    f = p.parse_formula()
    if p.peek().kind != "eof":
        p.error(f"unexpected trailing input {p.peek().text!r}")
    f = stamp_formula(f, default_time)
    if horizon is not None and default_time > horizon:
        raise ParseError(f"evaluation time {default_time} outside 0..{horizon}", filename, 1, 1)
    for name, t in formula_atoms(f):
        if t is not None and t < 0:
            raise ParseError(f"negative time on atom {name}", filename, 1, 1)
        if horizon is not None and t is not None and t > horizon:
            raise ParseError(f"atom {name}@{t} is outside the time range 0..{horizon}", filename, 1, 1)
    if agents is not None:
        allowed = tuple(agents)
        for a in formula_agents(f):
            if a not in allowed:
                raise ParseError(f"unknown agent {a!r} in formula", filename, 1, 1)
    return f
