"""Model-formula parsing.

Grammar (whitespace-insensitive)::

    formula := NAME "~" term ("+" term)*
    term    := "gp(" NAME ")"
             | "gp_ns(" NAME ")"
             | "zs(" NAME ")" ["*" "gp(" NAME ")"]
             | vm
             | "unc(" vm ")"
    vm      := "gp_vm(" NAME ")" | "het(" NAME ")*gp_vm(" NAME ")"
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace

SHARED_EQ = "SharedEQ"
CATEGORICAL_OFFSET = "CategoricalOffset"
CATEGORICAL_INTERACTION = "CategoricalInteraction"
NONSTATIONARY = "Nonstationary"
VARIANCE_MASKED = "VarianceMasked"
HETEROGENEOUS_VM = "HeterogeneousVarianceMasked"

KINDS = (SHARED_EQ, CATEGORICAL_OFFSET, CATEGORICAL_INTERACTION, NONSTATIONARY,
         VARIANCE_MASKED, HETEROGENEOUS_VM)
LIKELIHOODS = ("gaussian", "poisson", "nb", "binomial", "betabinomial")

# kinds whose continuous input goes through the input warp
WARPED_KINDS = (NONSTATIONARY, VARIANCE_MASKED, HETEROGENEOUS_VM)
VM_KINDS = (VARIANCE_MASKED, HETEROGENEOUS_VM)


class FormulaError(ValueError):
    """Syntax or constraint error in a model formula."""

    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at character {offset})"
        super().__init__(message)


@dataclass(frozen=True)
class ComponentSpec:
    index: int
    kind: str
    continuous_covariate: str | None = None
    categorical_covariate: str | None = None
    uncertain_effect_time: bool = False

    @property
    def has_lengthscale(self) -> bool:
        return self.continuous_covariate is not None

    @property
    def is_warped(self) -> bool:
        return self.kind in WARPED_KINDS

    @property
    def is_heterogeneous(self) -> bool:
        return self.kind == HETEROGENEOUS_VM

    @property
    def covariates(self) -> tuple:
        return tuple(c for c in (self.categorical_covariate, self.continuous_covariate) if c)

    def term(self) -> str:
        """Canonical formula text for this component."""
        x, z = self.continuous_covariate, self.categorical_covariate
        if self.kind == SHARED_EQ:
            t = f"gp({x})"
        elif self.kind == CATEGORICAL_OFFSET:
            t = f"zs({z})"
        elif self.kind == CATEGORICAL_INTERACTION:
            t = f"zs({z})*gp({x})"
        elif self.kind == NONSTATIONARY:
            t = f"gp_ns({x})"
        elif self.kind == VARIANCE_MASKED:
            t = f"gp_vm({x})"
        else:
            t = f"het({z})*gp_vm({x})"
        return f"unc({t})" if self.uncertain_effect_time else t


@dataclass(frozen=True)
class ModelSpec:
    components: tuple
    response: str
    likelihood: str = "gaussian"

    def __post_init__(self):
        if not self.components:
            raise FormulaError("a model needs at least one component")
        if self.likelihood not in LIKELIHOODS:
            raise FormulaError(f"unknown likelihood '{self.likelihood}'")

    @property
    def num_components(self) -> int:
        return len(self.components)

    def with_likelihood(self, likelihood: str) -> "ModelSpec":
        return replace(self, likelihood=likelihood)

    def formula(self) -> str:
        return format_formula(self)


_TOKEN = re.compile(r"\s*(?:(?P<name>[A-Za-z_.][A-Za-z0-9_.]*)|(?P<op>[~+*()]))")


def _tokenize(text: str):
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m:
            bad = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise FormulaError(f"unexpected character '{text[bad]}'", bad)
        start = m.start("name") if m.group("name") else m.start("op")
        tokens.append((m.group("name") or m.group("op"), start, bool(m.group("name"))))
        pos = m.end()
    tokens.append(("<end>", len(text), False))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self, expected=None, name=False):
        tok, off, is_name = self.tokens[self.i]
        if name and not is_name:
            raise FormulaError(f"expected a name, found '{tok}'", off)
        if expected is not None and tok != expected:
            raise FormulaError(f"expected '{expected}', found '{tok}'", off)
        self.i += 1
        return tok, off

    def call(self, fn):
        """Parse ``fn(NAME)`` where ``fn`` was already consumed."""
        self.take("(")
        arg, _ = self.take(name=True)
        self.take(")")
        return arg

    def vm_term(self):
        tok, off = self.take(name=True)
        if tok == "gp_vm":
            return VARIANCE_MASKED, self.call(tok), None
        if tok == "het":
            z = self.call(tok)
            self.take("*")
            self.take("gp_vm")
            return HETEROGENEOUS_VM, self.call("gp_vm"), z
        raise FormulaError(f"expected 'gp_vm' or 'het' inside unc(), found '{tok}'", off)

    def term(self):
        tok, off, is_name = self.peek()
        if not is_name:
            raise FormulaError(f"expected a term, found '{tok}'", off)
        if tok == "gp":
            self.take()
            return SHARED_EQ, self.call(tok), None, False, off
        if tok == "gp_ns":
            self.take()
            return NONSTATIONARY, self.call(tok), None, False, off
        if tok == "zs":
            self.take()
            z = self.call(tok)
            if self.peek()[0] == "*":
                self.take("*")
                self.take("gp")
                return CATEGORICAL_INTERACTION, self.call("gp"), z, False, off
            return CATEGORICAL_OFFSET, None, z, False, off
        if tok in ("gp_vm", "het"):
            kind, x, z = self.vm_term()
            return kind, x, z, False, off
        if tok == "unc":
            self.take()
            self.take("(")
            kind, x, z = self.vm_term()
            self.take(")")
            return kind, x, z, True, off
        raise FormulaError(f"unknown term '{tok}'", off)

    def formula(self):
        response, _ = self.take(name=True)
        self.take("~")
        terms = [self.term()]
        while self.peek()[0] == "+":
            self.take("+")
            terms.append(self.term())
        tok, off, _ = self.peek()
        if tok != "<end>":
            raise FormulaError(f"unexpected '{tok}'", off)
        return response, terms


def parse_formula(text: str, likelihood: str = "gaussian") -> ModelSpec:
    """Parse ``text`` into a :class:`ModelSpec`.

    Raises
    ------
    FormulaError
        On syntax errors (with the character offset) or when a continuous
        covariate has two shared terms or a categorical covariate appears in
        two terms.
    """
    if not isinstance(text, str):
        raise FormulaError("formula must be a string")
    response, terms = _Parser(text).formula()
    shared = {}
    categorical = {}
    comps = []
    for j, (kind, x, z, unc, off) in enumerate(terms, start=1):
        if kind == SHARED_EQ:
            if x in shared:
                raise FormulaError(f"duplicate shared term for covariate '{x}'", off)
            shared[x] = j
        if z is not None and kind != HETEROGENEOUS_VM:
            if z in categorical:
                raise FormulaError(f"categorical covariate '{z}' appears in more than one term", off)
            categorical[z] = j
        comps.append(ComponentSpec(j, kind, x, z, unc))
    return ModelSpec(tuple(comps), response, likelihood)


def format_formula(spec: ModelSpec) -> str:
    """Canonical text form; ``parse_formula(format_formula(s)) == s``."""
    return f"{spec.response} ~ " + " + ".join(c.term() for c in spec.components)
