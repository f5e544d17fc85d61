"""Model files: a plain nested block format with expression strings.

A model file is line-oriented; ``#`` starts a comment, blank lines are
ignored, blocks open with ``name {`` and close with ``}``.  Entries are
``key [indices...] [= expression]``.  Variables are fixed by the model:
base coordinates x1..xm, fiber coordinates y1..yn.  Bracket tables accept
only the lower index pair in increasing order (alpha < beta); the
antisymmetric mirror is generated.  Structure functions, connection
coefficients and dual sections may depend on x only.

Blocks: ``algebroid`` (kind tangent | lie_algebra | atiyah | custom),
``sode`` (Gamma1..), ``multiplier`` (F1..), ``lagrangian`` (L), ``section``
(theta1.., for exactness checks), ``sampling`` (box lo hi / count / seed /
explicit point lines), and for morphism models ``source``/``target``
(nested model blocks) plus ``morphism`` (f j = expr, Psi a' a = expr).
Top-level scalar: ``tolerance``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .algebroid import (
    AtiyahData,
    LieAlgebroid,
    OneSection,
    atiyah_algebroid,
    lie_algebra,
    tangent_bundle,
)
from .exprlang import Expr, Num, ParseError, free_vars, parse
from .morphism import AlgebroidMorphism
from .sampling import sample_box, sample_points
from .sode import MultiplierMap, SodeSection
from .variational import Lagrangian

__all__ = ["ModelError", "ModelFile", "SamplingConfig", "load", "loads"]


class ModelError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{message}{where}")


@dataclass
class _Entry:
    line: int
    key: str
    args: list[str]
    expr: str | None


@dataclass
class _Block:
    name: str
    entries: list[_Entry] = field(default_factory=list)
    children: list["_Block"] = field(default_factory=list)

    def child(self, name: str) -> "_Block | None":
        for blk in self.children:
            if blk.name == name:
                return blk
        return None


def _parse_blocks(text: str) -> _Block:
    root = _Block("")
    stack = [root]
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line == "}":
            if len(stack) == 1:
                raise ModelError("unmatched '}'", lineno)
            stack.pop()
            continue
        if line.endswith("{"):
            name = line[:-1].strip()
            if not name.isidentifier():
                raise ModelError(f"bad block name '{name}'", lineno)
            blk = _Block(name)
            stack[-1].children.append(blk)
            stack.append(blk)
            continue
        if "=" in line:
            head, expr = line.split("=", 1)
            parts = head.split()
            if not parts:
                raise ModelError("entry without a key", lineno)
            stack[-1].entries.append(_Entry(lineno, parts[0], parts[1:], expr.strip()))
        else:
            parts = line.split()
            stack[-1].entries.append(_Entry(lineno, parts[0], parts[1:], None))
    if len(stack) != 1:
        raise ModelError(f"unclosed block '{stack[-1].name}'")
    return root


def _parse_expr(entry: _Entry, allowed: set[str], what: str) -> Expr:
    if entry.expr is None:
        raise ModelError(f"{what} entry needs '= expression'", entry.line)
    try:
        tree = parse(entry.expr)
    except ParseError as exc:
        raise ModelError(f"{what}: {exc}", entry.line) from None
    stray = free_vars(tree) - allowed
    if stray:
        raise ModelError(
            f"{what} uses undeclared variable(s) {sorted(stray)}", entry.line
        )
    return tree


def _int_args(entry: _Entry, count: int, bounds: list[int]) -> tuple[int, ...]:
    if len(entry.args) != count:
        raise ModelError(
            f"'{entry.key}' expects {count} indices", entry.line
        )
    out = []
    for raw, bound in zip(entry.args, bounds):
        try:
            idx = int(raw)
        except ValueError:
            raise ModelError(f"bad index '{raw}'", entry.line) from None
        if not 1 <= idx <= bound:
            raise ModelError(
                f"index {idx} out of range 1..{bound}", entry.line
            )
        out.append(idx - 1)
    return tuple(out)


def _scalar(block: _Block, key: str, conv, default=None, required=False):
    for entry in block.entries:
        if entry.key == key:
            raw = entry.expr if entry.expr is not None else " ".join(entry.args)
            try:
                return conv(raw)
            except ValueError:
                raise ModelError(f"bad value for '{key}': {raw}", entry.line) from None
    if required:
        raise ModelError(f"block '{block.name}' is missing '{key}'")
    return default


_NAMED = re.compile(r"^([A-Za-z]+?)(\d+)$")


def _component_table(block: _Block, prefix: str, n: int, allowed: set[str]) -> tuple[Expr, ...]:
    comps: dict[int, Expr] = {}
    for entry in block.entries:
        m = _NAMED.match(entry.key)
        if not m or m.group(1) != prefix:
            raise ModelError(
                f"unexpected entry '{entry.key}' in block '{block.name}'", entry.line
            )
        idx = int(m.group(2))
        if not 1 <= idx <= n:
            raise ModelError(f"component index {idx} out of range 1..{n}", entry.line)
        if idx - 1 in comps:
            raise ModelError(f"duplicate component {entry.key}", entry.line)
        comps[idx - 1] = _parse_expr(entry, allowed, entry.key)
    missing = [f"{prefix}{k + 1}" for k in range(n) if k not in comps]
    if missing:
        raise ModelError(f"block '{block.name}' is missing {', '.join(missing)}")
    return tuple(comps[k] for k in range(n))


def _reject_stray(block: _Block, allowed: set[str]) -> None:
    for entry in block.entries:
        if entry.key not in allowed:
            raise ModelError(
                f"unexpected entry '{entry.key}' in block '{block.name}'", entry.line
            )


def _build_algebroid(block: _Block) -> LieAlgebroid:
    kind = _scalar(block, "kind", str, required=True)
    if kind == "tangent":
        _reject_stray(block, {"kind", "m"})
        m = _scalar(block, "m", int, required=True)
        return tangent_bundle(m)
    if kind == "lie_algebra":
        _reject_stray(block, {"kind", "n", "c"})
        n = _scalar(block, "n", int, required=True)
        c = _constants_table(block, "c", n)
        return lie_algebra(c)
    if kind == "atiyah":
        _reject_stray(block, {"kind", "m", "ng", "c", "A"})
        m = _scalar(block, "m", int, required=True)
        ng = _scalar(block, "ng", int, required=True)
        c = _constants_table(block, "c", ng)
        xvars = {f"x{i + 1}" for i in range(m)}
        A = [[Num(0.0)] * m for _ in range(ng)]
        for entry in block.entries:
            if entry.key != "A":
                continue
            a, i = _int_args(entry, 2, [ng, m])
            A[a][i] = _parse_expr(entry, xvars, "A")
        data = AtiyahData(m, ng, tuple(tuple(row) for row in A), c)
        return atiyah_algebroid(data)
    if kind == "custom":
        m = _scalar(block, "m", int, required=True)
        n = _scalar(block, "n", int, required=True)
        xvars = {f"x{i + 1}" for i in range(m)}
        zero = Num(0.0)
        rho = [[zero] * n for _ in range(m)]
        C = [[[zero] * n for _ in range(n)] for _ in range(n)]
        kernel = None
        for entry in block.entries:
            if entry.key == "rho":
                i, a = _int_args(entry, 2, [m, n])
                rho[i][a] = _parse_expr(entry, xvars, "rho")
            elif entry.key == "C":
                g, a, b = _int_args(entry, 3, [n, n, n])
                if a >= b:
                    raise ModelError(
                        "bracket entries accept only alpha < beta; the antisymmetric "
                        "mirror is generated",
                        entry.line,
                    )
                tree = _parse_expr(entry, xvars, "C")
                C[g][a][b] = tree
                C[g][b][a] = _neg(tree)
            elif entry.key == "kernel_indices":
                try:
                    raw = [int(a) for a in entry.args]
                except ValueError:
                    raise ModelError("kernel_indices must be integers", entry.line) from None
                bad = [k for k in raw if not 1 <= k <= n]
                if bad:
                    raise ModelError(f"kernel indices out of range 1..{n}: {bad}", entry.line)
                kernel = tuple(sorted(k - 1 for k in raw))
            elif entry.key in ("kind", "m", "n"):
                continue
            else:
                raise ModelError(f"unexpected entry '{entry.key}'", entry.line)
        return LieAlgebroid(
            m,
            n,
            tuple(tuple(row) for row in rho),
            tuple(tuple(tuple(r) for r in blk) for blk in C),
            kernel_indices=kernel,
        )
    raise ModelError(f"unknown algebroid kind '{kind}'")


def _neg(tree: Expr) -> Expr:
    from .exprlang import eneg

    return eneg(tree)


def _constants_table(block: _Block, key: str, n: int) -> np.ndarray:
    c = np.zeros((n, n, n))
    for entry in block.entries:
        if entry.key != key:
            continue
        g, a, b = _int_args(entry, 3, [n, n, n])
        if a >= b:
            raise ModelError(
                "structure-constant entries accept only alpha < beta; the "
                "antisymmetric mirror is generated",
                entry.line,
            )
        if entry.expr is None:
            raise ModelError("structure constant needs '= value'", entry.line)
        try:
            val = float(entry.expr)
        except ValueError:
            raise ModelError(
                f"structure constants must be literal numbers, got '{entry.expr}'",
                entry.line,
            ) from None
        c[g, a, b] = val
        c[g, b, a] = -val
    return c


@dataclass
class SamplingConfig:
    lo: float = -1.0
    hi: float = 1.0
    count: int = 64
    seed: int = 0
    points: np.ndarray | None = None  # explicit full E-points, shape (k, m+n)

    def full_points(self, E: LieAlgebroid, exclude_y_ball: float = 0.0) -> np.ndarray:
        if self.points is not None:
            return self.points
        return sample_points(
            E.m, E.n, self.count, self.lo, self.hi, self.seed, exclude_y_ball
        )

    def base_points(self, E: LieAlgebroid) -> np.ndarray:
        if self.points is not None:
            return self.points[:, : E.m]
        return sample_box(E.m, self.count, self.lo, self.hi, self.seed)


def _build_sampling(block: _Block | None, dim: int) -> SamplingConfig:
    cfg = SamplingConfig()
    if block is None:
        return cfg
    explicit: list[list[float]] = []
    for entry in block.entries:
        if entry.key == "box":
            if len(entry.args) != 2:
                raise ModelError("box expects two bounds", entry.line)
            cfg.lo, cfg.hi = float(entry.args[0]), float(entry.args[1])
        elif entry.key == "count":
            cfg.count = int(entry.args[0])
        elif entry.key == "seed":
            cfg.seed = int(entry.args[0])
        elif entry.key == "point":
            try:
                vals = [float(v) for v in entry.args]
            except ValueError:
                raise ModelError("bad point coordinates", entry.line) from None
            if len(vals) != dim:
                raise ModelError(
                    f"explicit points must have m+n = {dim} coordinates", entry.line
                )
            explicit.append(vals)
        else:
            raise ModelError(f"unexpected entry '{entry.key}' in sampling", entry.line)
    if explicit:
        cfg.points = np.array(explicit, dtype=float)
    return cfg


@dataclass
class ModelFile:
    name: str
    E: LieAlgebroid | None = None
    sode: SodeSection | None = None
    multiplier: MultiplierMap | None = None
    lagrangian: Lagrangian | None = None
    section: OneSection | None = None
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    tolerance: float = 1e-8
    source: "ModelFile | None" = None
    target: "ModelFile | None" = None
    morphism: AlgebroidMorphism | None = None

    def require(self, attr: str):
        value = getattr(self, attr)
        if value is None:
            raise ModelError(f"model '{self.name}' has no '{attr}' block")
        return value


def _build_model(root: _Block, name: str) -> ModelFile:
    model = ModelFile(name)
    alg = root.child("algebroid")
    if alg is not None:
        model.E = _build_algebroid(alg)
    src = root.child("source")
    tgt = root.child("target")
    if (src is None) != (tgt is None):
        raise ModelError("morphism models need both 'source' and 'target' blocks")
    if src is not None:
        model.source = _build_model(src, f"{name}:source")
        model.target = _build_model(tgt, f"{name}:target")
    here = model.E or (model.source.E if model.source else None)
    if here is None:
        raise ModelError(f"model '{name}' declares no algebroid")
    xy = set(here.x_names) | set(here.y_names)
    xonly = set(here.x_names)
    blk = root.child("sode")
    if blk is not None:
        model.sode = SodeSection(_component_table(blk, "Gamma", here.n, xy))
    blk = root.child("multiplier")
    if blk is not None:
        model.multiplier = MultiplierMap(_component_table(blk, "F", here.n, xy))
    blk = root.child("lagrangian")
    if blk is not None:
        tree = None
        for entry in blk.entries:
            if entry.key != "L":
                raise ModelError(f"unexpected entry '{entry.key}' in lagrangian", entry.line)
            if tree is not None:
                raise ModelError("duplicate L entry", entry.line)
            tree = _parse_expr(entry, xy, "L")
        if tree is None:
            raise ModelError("lagrangian block is missing 'L = expression'")
        model.lagrangian = Lagrangian(tree)
    blk = root.child("section")
    if blk is not None:
        model.section = OneSection(_component_table(blk, "theta", here.n, xonly))
    model.sampling = _build_sampling(root.child("sampling"), here.m + here.n)
    model.tolerance = _scalar(root, "tolerance", float, default=1e-8)
    mor = root.child("morphism")
    if mor is not None:
        if model.source is None:
            raise ModelError("a 'morphism' block needs 'source' and 'target' blocks")
        Es, Et = model.source.E, model.target.E
        sx = set(Es.x_names)
        f = [Num(0.0)] * Et.m
        psi = [[Num(0.0)] * Es.n for _ in range(Et.n)]
        for entry in mor.entries:
            if entry.key == "f":
                (j,) = _int_args(entry, 1, [Et.m])
                f[j] = _parse_expr(entry, sx, "f")
            elif entry.key == "Psi":
                ap, a = _int_args(entry, 2, [Et.n, Es.n])
                psi[ap][a] = _parse_expr(entry, sx, "Psi")
            else:
                raise ModelError(f"unexpected entry '{entry.key}' in morphism", entry.line)
        model.morphism = AlgebroidMorphism(
            Es, Et, tuple(f), tuple(tuple(row) for row in psi)
        )
    return model


def loads(text: str, name: str = "<string>") -> ModelFile:
    """Parse and validate model text; raises :class:`ModelError` with a line
    number on any malformed or inconsistent input."""
    root = _parse_blocks(text)
    known = {
        "algebroid", "sode", "multiplier", "lagrangian", "section",
        "sampling", "source", "target", "morphism",
    }
    for blk in root.children:
        if blk.name not in known:
            raise ModelError(f"unknown block '{blk.name}'")
    for entry in root.entries:
        if entry.key != "tolerance":
            raise ModelError(f"unexpected top-level entry '{entry.key}'", entry.line)
    return _build_model(root, name)


def load(path) -> ModelFile:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    return loads(text, name=str(path))
