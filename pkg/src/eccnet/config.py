"""Parser for network-configuration strings.

Grammar (EBNF), tokens joined by ``-``::

    config  = token , { "-" , token } ;
    token   = conv | pool | "GAP" | "GMP" | fc | drop ;
    conv    = "C(" , int , ")" ;
    pool    = "MP" , [ "(" , number , "," , number , ")" ] ;
    fc      = "FC(" , int , ")" ;
    drop    = "D(" , number , ")" ;
    number  = float , [ "/" , float ] ;

``MP(r, rho)`` pools a point-cloud pyramid to grid resolution r with
neighborhood radius rho; bare ``MP`` steps down one level of a general-graph
pyramid. The two forms cannot be mixed. Numbers may use fraction notation
(``7.5/32``). Parsing is total: every input yields a spec or a positioned
error.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigurationError

VARIANTS = ("plain", "resnet", "z")


@dataclass(frozen=True)
class Conv:
    channels: int


@dataclass(frozen=True)
class MaxPoolGrid:
    resolution: float
    radius: float


@dataclass(frozen=True)
class MaxPoolLevel:
    pass


@dataclass(frozen=True)
class GlobalAvgPool:
    pass


@dataclass(frozen=True)
class GlobalMaxPool:
    pass


@dataclass(frozen=True)
class FullyConnected:
    channels: int


@dataclass(frozen=True)
class Dropout:
    p: float


Descriptor = Conv | MaxPoolGrid | MaxPoolLevel | GlobalAvgPool | GlobalMaxPool | FullyConnected | Dropout


@dataclass(frozen=True)
class NetSpec:
    """Validated layer sequence plus convolution variant and filter-net widths.

    ``filter_hidden=None`` defers to the data-kind default at build time
    (hidden widths (16, 32) for continuous labels, (64,) for categorical).
    """

    layers: tuple[Descriptor, ...]
    variant: str = "plain"
    filter_hidden: tuple[int, ...] | None = None

    def num_pools(self) -> int:
        return sum(isinstance(d, (MaxPoolGrid, MaxPoolLevel)) for d in self.layers)

    def pool_params(self) -> list[tuple[float, float]]:
        return [(d.resolution, d.radius) for d in self.layers if isinstance(d, MaxPoolGrid)]

    def uses_grid_pooling(self) -> bool:
        return any(isinstance(d, MaxPoolGrid) for d in self.layers)


class _Scanner:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def fail(self, expected: str):
        raise ConfigurationError(
            f"config error at byte {self.pos}: expected {expected} "
            f"(near {self.text[self.pos:self.pos + 12]!r})")

    def eat(self, literal: str) -> bool:
        if self.text.startswith(literal, self.pos):
            self.pos += len(literal)
            return True
        return False

    def expect(self, literal: str):
        if not self.eat(literal):
            self.fail(repr(literal))

    def integer(self) -> int:
        start = self.pos
        while self.pos < len(self.text) and self.text[self.pos].isdigit():
            self.pos += 1
        if self.pos == start:
            self.fail("an integer")
        return int(self.text[start:self.pos])

    def _float(self) -> float:
        start = self.pos
        while self.pos < len(self.text) and (self.text[self.pos].isdigit()
                                             or self.text[self.pos] == "."):
            self.pos += 1
        # optional exponent, so rendered floats always re-parse
        if self.pos < len(self.text) and self.text[self.pos] in "eE":
            mark = self.pos
            self.pos += 1
            if self.pos < len(self.text) and self.text[self.pos] in "+-":
                self.pos += 1
            digits = self.pos
            while self.pos < len(self.text) and self.text[self.pos].isdigit():
                self.pos += 1
            if self.pos == digits:
                self.pos = mark
        if self.pos == start:
            self.fail("a number")
        try:
            return float(self.text[start:self.pos])
        except ValueError:
            self.pos = start
            self.fail("a number")

    def number(self) -> float:
        value = self._float()
        if self.eat("/"):
            denom = self._float()
            if denom == 0.0:
                self.fail("a nonzero denominator")
            value /= denom
        return value


_EXPECTED = "one of C(c), MP, MP(r,rho), GAP, GMP, FC(c), D(p)"


def parse(config: str, variant: str = "plain",
          filter_hidden: tuple[int, ...] | None = None) -> NetSpec:
    """Parse and structurally validate a configuration string."""
    sc = _Scanner(config)
    layers: list[Descriptor] = []
    while True:
        layers.append(_token(sc))
        if sc.pos >= len(sc.text):
            break
        sc.expect("-")
    spec = NetSpec(tuple(layers), variant=variant,
                   filter_hidden=tuple(filter_hidden) if filter_hidden is not None else None)
    validate(spec)
    return spec


def _token(sc: _Scanner) -> Descriptor:
    if sc.eat("GAP"):
        return GlobalAvgPool()
    if sc.eat("GMP"):
        return GlobalMaxPool()
    if sc.eat("MP"):
        if sc.eat("("):
            r = sc.number()
            sc.expect(",")
            rho = sc.number()
            sc.expect(")")
            return MaxPoolGrid(r, rho)
        return MaxPoolLevel()
    if sc.eat("FC"):
        sc.expect("(")
        c = sc.integer()
        sc.expect(")")
        return FullyConnected(c)
    if sc.eat("C"):
        sc.expect("(")
        c = sc.integer()
        sc.expect(")")
        return Conv(c)
    if sc.eat("D"):
        sc.expect("(")
        p = sc.number()
        sc.expect(")")
        return Dropout(p)
    sc.fail(_EXPECTED)


def validate(spec: NetSpec) -> None:
    """Structural rules: a single optional global pooling splits the net into
    a graph stage (C/MP) and a classifier stage (FC/D); pooling forms must
    not be mixed; all sizes positive."""
    if spec.variant not in VARIANTS:
        raise ConfigurationError(f"unknown variant {spec.variant!r}")
    if not spec.layers:
        raise ConfigurationError("empty configuration")
    seen_global = False
    seen_fc = False
    has_grid_mp = any(isinstance(d, MaxPoolGrid) for d in spec.layers)
    has_level_mp = any(isinstance(d, MaxPoolLevel) for d in spec.layers)
    if has_grid_mp and has_level_mp:
        raise ConfigurationError("cannot mix MP(r,rho) and bare MP in one config")
    for d in spec.layers:
        if isinstance(d, (GlobalAvgPool, GlobalMaxPool)):
            if seen_global:
                raise ConfigurationError("more than one global pooling layer")
            if seen_fc:
                raise ConfigurationError("global pooling after a fully-connected layer")
            seen_global = True
        elif isinstance(d, Conv):
            if seen_global or seen_fc:
                raise ConfigurationError("convolution after the classifier stage")
            if d.channels < 1:
                raise ConfigurationError(f"conv channels must be positive, got {d.channels}")
        elif isinstance(d, (MaxPoolGrid, MaxPoolLevel)):
            if seen_global or seen_fc:
                raise ConfigurationError("graph pooling after the classifier stage")
            if isinstance(d, MaxPoolGrid) and (d.resolution <= 0 or d.radius <= 0):
                raise ConfigurationError("MP resolution and radius must be positive")
        elif isinstance(d, FullyConnected):
            if d.channels < 1:
                raise ConfigurationError(f"FC channels must be positive, got {d.channels}")
            seen_fc = True
        elif isinstance(d, Dropout):
            if not 0.0 <= d.p < 1.0:
                raise ConfigurationError(f"dropout probability must be in [0, 1), got {d.p}")


def render(spec: NetSpec) -> str:
    """Inverse of parse up to number formatting: parse(render(s)) == s."""
    parts = []
    for d in spec.layers:
        if isinstance(d, Conv):
            parts.append(f"C({d.channels})")
        elif isinstance(d, MaxPoolGrid):
            parts.append(f"MP({_fmt(d.resolution)},{_fmt(d.radius)})")
        elif isinstance(d, MaxPoolLevel):
            parts.append("MP")
        elif isinstance(d, GlobalAvgPool):
            parts.append("GAP")
        elif isinstance(d, GlobalMaxPool):
            parts.append("GMP")
        elif isinstance(d, FullyConnected):
            parts.append(f"FC({d.channels})")
        elif isinstance(d, Dropout):
            parts.append(f"D({_fmt(d.p)})")
    return "-".join(parts)


def _fmt(v: float) -> str:
    return repr(float(v))
