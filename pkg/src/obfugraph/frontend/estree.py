"""ESTree JSON interchange: ingest external parser output, export our trees."""
from __future__ import annotations

import hashlib
import json
from typing import Any

from .nodes import FIELDS, LIST, OPT, Ast, AstNode, fields_of
from .parser import number_text

_SKIP_KEYS = frozenset({"type", "loc", "range", "start", "end", "comments", "tokens"})
_VALUE_KEYS = {
    "Identifier": "name",
    "UnaryExpression": "operator",
    "UpdateExpression": "operator",
    "BinaryExpression": "operator",
    "LogicalExpression": "operator",
    "AssignmentExpression": "operator",
    "VariableDeclaration": "kind",
    "Property": "kind",
}
_FLAG_KEYS = {
    "MemberExpression": ("computed",),
    "Property": ("computed",),
    "UpdateExpression": ("prefix",),
    "UnaryExpression": ("prefix",),
    "ArrowFunctionExpression": ("expression",),
}


class FormatError(ValueError):
    pass


def _position(obj: dict, parent: tuple[int, int]) -> tuple[int, int]:
    loc = obj.get("loc")
    if isinstance(loc, dict) and isinstance(loc.get("start"), dict):
        start = loc["start"]
        try:
            return int(start.get("line", parent[0])), int(start.get("column", parent[1]))
        except (TypeError, ValueError):
            pass
    return parent


def _literal(obj: dict, line: int, col: int) -> AstNode:
    raw = obj.get("raw")
    if isinstance(obj.get("regex"), dict):
        rx = obj["regex"]
        text = f"/{rx.get('pattern', '')}/{rx.get('flags', '')}"
        return AstNode("Literal", text, line, col, attrs={"ltype": "regex"}, raw=text)
    value = obj.get("value")
    if isinstance(value, bool):
        text, ltype = ("true" if value else "false"), "boolean"
    elif value is None:
        if obj.get("bigint") is not None:
            text, ltype = str(obj["bigint"]), "number"
        else:
            text, ltype = "null", "null"
    elif isinstance(value, (int, float)):
        text, ltype = number_text(value), "number"
    else:
        text, ltype = str(value), "string"
    return AstNode("Literal", text, line, col, attrs={"ltype": ltype},
                   raw=raw if isinstance(raw, str) else None)


def _convert(obj: Any, parent_pos: tuple[int, int]) -> AstNode:
    if not isinstance(obj, dict) or not isinstance(obj.get("type"), str):
        raise FormatError("node without a string 'type' field")
    kind = obj["type"]
    line, col = _position(obj, parent_pos)
    pos = (line, col)
    if kind == "Literal":
        return _literal(obj, line, col)
    if kind == "TemplateElement":
        val = obj.get("value") or {}
        return AstNode("TemplateElement", val.get("cooked"), line, col, raw=val.get("raw"))
    if kind == "TemplateLiteral":
        quasis = obj.get("quasis") or []
        exprs = obj.get("expressions") or []
        kids: list[AstNode] = []
        for i, q in enumerate(quasis):
            kids.append(_convert(q, pos))
            if i < len(exprs):
                kids.append(_convert(exprs[i], pos))
        return AstNode("TemplateLiteral", None, line, col, kids)
    if kind in FIELDS and kind != "Unknown":
        node = AstNode(kind, None, line, col)
        if kind in _VALUE_KEYS and obj.get(_VALUE_KEYS[kind]) is not None:
            node.value = str(obj[_VALUE_KEYS[kind]])
        for flag in _FLAG_KEYS.get(kind, ()):
            node.attrs[flag] = bool(obj.get(flag, False))
        for name, arity in FIELDS[kind]:
            item = obj.get(name)
            if arity == LIST:
                for x in item or []:
                    if x is None:
                        raise FormatError(f"{kind}.{name}: null element unsupported")
                    node.children.append(_convert(x, pos))
            elif item is None:
                if arity != OPT:
                    raise FormatError(f"{kind}.{name} missing")
            else:
                if arity == OPT:
                    node.attrs[name] = True
                node.children.append(_convert(item, pos))
        return node
    # Unknown kind: keep the original type name, preserve nested nodes in key order.
    node = AstNode("Unknown", kind, line, col)
    for key, val in obj.items():
        if key in _SKIP_KEYS:
            continue
        if isinstance(val, dict) and "type" in val:
            node.children.append(_convert(val, pos))
        elif isinstance(val, list):
            for x in val:
                if isinstance(x, dict) and "type" in x:
                    node.children.append(_convert(x, pos))
    return node


def ingest_estree(data: bytes | str | dict) -> Ast:
    """Map an ESTree JSON document onto the in-repo node vocabulary."""
    if isinstance(data, dict):
        doc = data
        raw = json.dumps(data, sort_keys=True).encode()
    else:
        raw = data.encode() if isinstance(data, str) else data
        try:
            doc = json.loads(raw)
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise FormatError(f"not JSON: {exc}") from None
    if not isinstance(doc, dict) or "type" not in doc:
        raise FormatError("root must be an object with a 'type' field")
    root = _convert(doc, (1, 0))
    return Ast(root, sum(1 for _ in root.walk()), hashlib.sha256(raw).hexdigest())


def _literal_json(node: AstNode) -> dict:
    ltype = node.attrs.get("ltype")
    out: dict[str, Any] = {"type": "Literal"}
    text = node.value
    if ltype == "regex":
        body, _, flags = text[1:].rpartition("/")
        out["value"] = None
        out["regex"] = {"pattern": body, "flags": flags}
    elif ltype == "boolean":
        out["value"] = text == "true"
    elif ltype == "null":
        out["value"] = None
    elif ltype == "number":
        f = float(text)
        out["value"] = int(f) if f.is_integer() and abs(f) <= 2 ** 53 else f
    else:
        out["value"] = text
    if node.raw is not None:
        out["raw"] = node.raw
    return out


def export_estree(node: AstNode | Ast) -> dict:
    """Serialize a tree to ESTree-shaped JSON (with ``loc.start`` positions)."""
    if isinstance(node, Ast):
        node = node.root
    loc = {"start": {"line": node.line, "column": node.column}}
    kind = node.kind
    if kind == "Literal":
        out = _literal_json(node)
    elif kind == "TemplateElement":
        out = {"type": kind, "value": {"cooked": node.value,
                                        "raw": node.raw if node.raw is not None else node.value}}
    elif kind == "TemplateLiteral":
        out = {"type": kind,
               "quasis": [export_estree(c) for c in node.children if c.kind == "TemplateElement"],
               "expressions": [export_estree(c) for c in node.children
                               if c.kind != "TemplateElement"]}
    elif kind == "Unknown":
        out = {"type": node.value or "Unknown",
               "children": [export_estree(c) for c in node.children]}
    else:
        out = {"type": kind}
        if kind in _VALUE_KEYS and node.value is not None:
            out[_VALUE_KEYS[kind]] = node.value
        for flag in _FLAG_KEYS.get(kind, ()):
            if flag in node.attrs:
                out[flag] = node.attrs[flag]
        for name, item in fields_of(node).items():
            if isinstance(item, list):
                out[name] = [export_estree(c) for c in item]
            else:
                out[name] = export_estree(item) if item is not None else None
    out["loc"] = loc
    return out
