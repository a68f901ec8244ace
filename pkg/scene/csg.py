"""
CSG tree types for specimen modelling.

Nodes are immutable pydantic models, so a tree is always finite and acyclic.
`to_scad` renders a tree in OpenSCAD text form for inspection.
"""
from enum import Enum
from typing import List, Literal, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator

from scene.transform import Transform


class BooleanOp(str, Enum):
    UNION = "union"
    DIFFERENCE = "difference"
    INTERSECTION = "intersection"


class Sphere(BaseModel):
    model_config = ConfigDict(frozen=True)
    kind: Literal["sphere"] = "sphere"
    radius: float = Field(gt=0)
    segments: int = Field(default=20, ge=6)


class Box(BaseModel):
    model_config = ConfigDict(frozen=True)
    kind: Literal["box"] = "box"
    size: Tuple[float, float, float]
    centered: bool = True

    @field_validator("size")
    @classmethod
    def _positive(cls, v):
        if any(s <= 0 for s in v):
            raise ValueError(f"box sizes must be > 0, got {v}")
        return v


class Transformed(BaseModel):
    model_config = ConfigDict(frozen=True)
    kind: Literal["transformed"] = "transformed"
    transform: Transform
    child: "CsgNode"


class Boolean(BaseModel):
    model_config = ConfigDict(frozen=True)
    kind: Literal["boolean"] = "boolean"
    op: BooleanOp
    children: List["CsgNode"] = Field(default_factory=list)


CsgNode = Union[Sphere, Box, Transformed, Boolean]
Primitive = (Sphere, Box)

Transformed.model_rebuild()
Boolean.model_rebuild()


# ── builders ──────────────────────────────────────────────────────────

def sphere(radius: float, segments: int = 20) -> Sphere:
    return Sphere(radius=radius, segments=segments)


def cube(size, centered: bool = True) -> Box:
    return Box(size=tuple(size), centered=centered)


def translate(v, node: CsgNode) -> Transformed:
    return Transformed(transform=Transform(translation=tuple(v)), child=node)


def rotate(angles, node: CsgNode) -> Transformed:
    return Transformed(transform=Transform(rotation=tuple(angles)), child=node)


def scale(s, node: CsgNode) -> Transformed:
    return Transformed(transform=Transform(scale=tuple(s)), child=node)


def union(*children: CsgNode) -> Boolean:
    return Boolean(op=BooleanOp.UNION, children=list(children))


def difference(*children: CsgNode) -> Boolean:
    return Boolean(op=BooleanOp.DIFFERENCE, children=list(children))


def intersection(*children: CsgNode) -> Boolean:
    return Boolean(op=BooleanOp.INTERSECTION, children=list(children))


def has_boolean(node: CsgNode) -> bool:
    if isinstance(node, Boolean):
        return True
    if isinstance(node, Transformed):
        return has_boolean(node.child)
    return False


# ── OpenSCAD text ─────────────────────────────────────────────────────

def _fmt(v) -> str:
    return "[" + ", ".join(f"{x:.6g}" for x in v) + "]"


def to_scad(node: CsgNode, indent: int = 0) -> str:
    pad = "  " * indent
    if isinstance(node, Sphere):
        return f"{pad}sphere(r={node.radius:.6g}, $fn={node.segments});"
    if isinstance(node, Box):
        return f"{pad}cube({_fmt(node.size)}, {'true' if node.centered else 'false'});"
    if isinstance(node, Transformed):
        t = node.transform
        # OpenSCAD nests outermost-first: translate(rotate(scale(child)))
        wrappers = []
        if t.translation != (0.0, 0.0, 0.0):
            wrappers.append(f"translate({_fmt(t.translation)})")
        if t.rotation != (0.0, 0.0, 0.0):
            wrappers.append(f"rotate({_fmt(t.rotation)})")
        if t.scale != (1.0, 1.0, 1.0):
            wrappers.append(f"scale({_fmt(t.scale)})")
        head = " ".join(wrappers)
        body = to_scad(node.child, indent).lstrip()
        return f"{pad}{head} {body}" if head else f"{pad}{body}"
    lines = [f"{pad}{node.op.value}() {{"]
    lines += [to_scad(c, indent + 1) for c in node.children]
    lines.append(f"{pad}}}")
    return "\n".join(lines)
