"""Typed XML outcome schemas (a deliberately small subset).

A schema is a tree of elements. Leaf kinds carry typed text (string, integer,
decimal, boolean, date, datetime); complex elements carry ordered children
with occurrence bounds. No namespaces, no declared attributes, no mixed
content. Instance attributes are ignored by validation.
"""

from __future__ import annotations

import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Optional

from .. import errors
from ..timeutil import parse_instant

UNBOUNDED = -1

LEAF_KINDS = ("string", "integer", "decimal", "boolean", "date", "datetime")
KINDS = LEAF_KINDS + ("complex",)

_INTEGER_RE = re.compile(r"[+-]?[0-9]+\Z")
_DECIMAL_RE = re.compile(r"[+-]?[0-9]+(\.[0-9]+)?\Z")
_DATE_RE = re.compile(r"[0-9]{4}-[0-9]{2}-[0-9]{2}\Z")


@dataclass
class SchemaElement:
    name: str
    kind: str = "string"
    min_occurs: int = 1
    max_occurs: int = 1  # UNBOUNDED for unbounded
    children: list["SchemaElement"] = field(default_factory=list)

    def validate_structure(self, path: str = "") -> list[tuple[str, str]]:
        """Check the schema tree's own invariants; returns violations."""
        here = f"{path}/{self.name}"
        out = []
        if self.kind not in KINDS:
            out.append((here, f"unknown kind '{self.kind}'"))
        if self.kind == "complex" and not self.children:
            out.append((here, "complex element must declare children"))
        if self.kind != "complex" and self.children:
            out.append((here, "leaf element must not declare children"))
        if self.min_occurs < 0:
            out.append((here, "minOccurs must be >= 0"))
        if self.max_occurs != UNBOUNDED and self.max_occurs < self.min_occurs:
            out.append((here, "maxOccurs must be >= minOccurs or unbounded"))
        for c in self.children:
            out.extend(c.validate_structure(here))
        return out


@dataclass
class SchemaDescription:
    name: str
    version: int
    root: SchemaElement


def _leaf_ok(kind: str, text: str) -> bool:
    if kind == "string":
        return True
    if kind == "integer":
        return bool(_INTEGER_RE.match(text))
    if kind == "decimal":
        return bool(_DECIMAL_RE.match(text))
    if kind == "boolean":
        return text in ("true", "false")
    if kind == "date":
        if not _DATE_RE.match(text):
            return False
        y, m, d = (int(x) for x in text.split("-"))
        try:
            import datetime

            datetime.date(y, m, d)
            return True
        except ValueError:
            return False
    if kind == "datetime":
        try:
            parse_instant(text)
            return True
        except ValueError:
            return False
    return False


def _validate_element(el: ET.Element, decl: SchemaElement, path: str) -> list[tuple[str, str]]:
    violations: list[tuple[str, str]] = []
    if decl.kind != "complex":
        if len(el) > 0:
            violations.append((path, f"leaf element '{decl.name}' must not contain children"))
            return violations
        text = (el.text or "").strip()
        if not _leaf_ok(decl.kind, text):
            violations.append((path, f"not a {decl.kind}"))
        return violations

    if el.text and el.text.strip():
        violations.append((path, "mixed content is not allowed"))

    children = list(el)
    idx = 0
    for child_decl in decl.children:
        count = 0
        first_index = idx
        while idx < len(children) and children[idx].tag == child_decl.name:
            count += 1
            child_path = f"{path}/{child_decl.name}" + (f"[{count}]" if count > 1 else "")
            violations.extend(_validate_element(children[idx], child_decl, child_path))
            idx += 1
        if count < child_decl.min_occurs:
            violations.append(
                (
                    f"{path}/{child_decl.name}",
                    f"expected at least {child_decl.min_occurs} occurrence(s), found {count}",
                )
            )
        if child_decl.max_occurs != UNBOUNDED and count > child_decl.max_occurs:
            violations.append(
                (
                    f"{path}/{child_decl.name}",
                    f"at most {child_decl.max_occurs} occurrence(s) allowed, found {count}",
                )
            )
        del first_index
    for extra in children[idx:]:
        violations.append((f"{path}/{extra.tag}", "unexpected element"))
    return violations


def parse_xml(document: str) -> ET.Element:
    try:
        return ET.fromstring(document)
    except ET.ParseError as exc:
        raise errors.NotWellFormed(str(exc)) from exc


def validate_outcome(document: str, schema: SchemaDescription) -> list[tuple[str, str]]:
    """ok iff the returned list is empty. Raises NotWellFormed on broken XML."""
    root = parse_xml(document)
    if root.tag != schema.root.name:
        return [("/", f"root element '{root.tag}' does not match schema root '{schema.root.name}'")]
    return _validate_element(root, schema.root, f"/{schema.root.name}")


# -- serialization (descriptions are stored as XML outcome documents) ----------


def _element_to_xml(decl: SchemaElement, parent: ET.Element) -> None:
    node = ET.SubElement(parent, "element")
    ET.SubElement(node, "name").text = decl.name
    ET.SubElement(node, "kind").text = decl.kind
    ET.SubElement(node, "minOccurs").text = str(decl.min_occurs)
    ET.SubElement(node, "maxOccurs").text = (
        "unbounded" if decl.max_occurs == UNBOUNDED else str(decl.max_occurs)
    )
    if decl.children:
        kids = ET.SubElement(node, "children")
        for c in decl.children:
            _element_to_xml(c, kids)


def schema_to_xml(schema: SchemaDescription) -> str:
    root = ET.Element("schemaDescription")
    ET.SubElement(root, "name").text = schema.name
    ET.SubElement(root, "version").text = str(schema.version)
    holder = ET.SubElement(root, "root")
    _element_to_xml(schema.root, holder)
    return ET.tostring(root, encoding="unicode")


def _element_from_xml(node: ET.Element) -> SchemaElement:
    max_text = node.findtext("maxOccurs", "1")
    children_node = node.find("children")
    return SchemaElement(
        name=node.findtext("name", ""),
        kind=node.findtext("kind", "string"),
        min_occurs=int(node.findtext("minOccurs", "1")),
        max_occurs=UNBOUNDED if max_text == "unbounded" else int(max_text),
        children=[_element_from_xml(c) for c in children_node] if children_node is not None else [],
    )


def schema_from_xml(document: str) -> SchemaDescription:
    root = parse_xml(document)
    if root.tag != "schemaDescription":
        raise errors.MalformedDocument(f"expected schemaDescription, got {root.tag}")
    holder = root.find("root")
    if holder is None or len(holder) != 1:
        raise errors.MalformedDocument("schemaDescription must carry exactly one root element")
    return SchemaDescription(
        name=root.findtext("name", ""),
        version=int(root.findtext("version", "0")),
        root=_element_from_xml(holder[0]),
    )
