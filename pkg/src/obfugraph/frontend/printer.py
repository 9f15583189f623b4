"""Canonical JavaScript code generation from an AST.

Output is deterministic and minimal-parenthesis, so ``print -> parse ->
print`` is a fixed point.  Strings are re-quoted with double quotes and only
non-printable characters escaped.
"""
from __future__ import annotations

import re

from .nodes import Ast, AstNode, fields_of
from .parser import BINARY_PRECEDENCE

INDENT = "  "

# expression precedence levels (higher binds tighter)
P_SEQ, P_ASSIGN, P_COND = 0, 1, 2
P_BINARY_BASE = 2          # binary op precedence p maps to P_BINARY_BASE + p
P_UNARY, P_POSTFIX, P_CALL, P_MEMBER, P_PRIMARY = 16, 17, 18, 19, 20

_STMT_START_RE = re.compile(r"^(function(?![\w$])|\{|let\s*\[)")
_IDENT_RE = re.compile(r"^[A-Za-z_$][\w$]*$")

_ESCAPES = {"\\": "\\\\", '"': '\\"', "\n": "\\n", "\r": "\\r", "\t": "\\t",
            "\b": "\\b", "\f": "\\f", "\v": "\\v",
            "\u2028": "\\u2028", "\u2029": "\\u2029"}


def quote_string(s: str) -> str:
    out = ['"']
    for ch in s:
        if ch in _ESCAPES:
            out.append(_ESCAPES[ch])
        elif ch.isprintable() and not (0xD800 <= ord(ch) <= 0xDFFF):
            out.append(ch)
        elif ord(ch) <= 0xFF:
            out.append(f"\\x{ord(ch):02x}")
        elif ord(ch) <= 0xFFFF:
            out.append(f"\\u{ord(ch):04x}")
        else:
            v = ord(ch) - 0x10000
            out.append(f"\\u{0xD800 + (v >> 10):04x}\\u{0xDC00 + (v & 0x3FF):04x}")
    out.append('"')
    return "".join(out)


def precedence(node: AstNode) -> int:
    k = node.kind
    if k == "SequenceExpression":
        return P_SEQ
    if k in ("AssignmentExpression", "ArrowFunctionExpression"):
        return P_ASSIGN
    if k == "ConditionalExpression":
        return P_COND
    if k in ("BinaryExpression", "LogicalExpression"):
        return P_BINARY_BASE + BINARY_PRECEDENCE[node.value]
    if k == "UnaryExpression":
        return P_UNARY
    if k == "UpdateExpression":
        return P_UNARY if node.attrs.get("prefix") else P_POSTFIX
    if k == "CallExpression":
        return P_CALL
    if k in ("MemberExpression", "NewExpression"):
        return P_MEMBER
    return P_PRIMARY


def _contains_call(node: AstNode) -> bool:
    while True:
        if node.kind == "CallExpression":
            return True
        if node.kind == "MemberExpression":
            node = node.children[0]
            continue
        return False


class Printer:
    def __init__(self):
        self.lines: list[str] = []

    # -- statements ------------------------------------------------------------
    def stmt(self, node: AstNode, level: int) -> None:
        pad = INDENT * level
        k = node.kind
        f = fields_of(node)
        emit = self.lines.append
        if k == "ExpressionStatement":
            text = self.expr(node.children[0], P_SEQ)
            if _STMT_START_RE.match(text):
                text = f"({text})"
            emit(f"{pad}{text};")
        elif k == "VariableDeclaration":
            emit(f"{pad}{self.var_decl(node)};")
        elif k == "FunctionDeclaration":
            self.function(node, level, pad)
        elif k == "BlockStatement":
            emit(pad + "{")
            self.body(node.children, level + 1)
            emit(pad + "}")
        elif k == "EmptyStatement":
            emit(pad + ";")
        elif k == "DebuggerStatement":
            emit(pad + "debugger;")
        elif k == "ReturnStatement":
            arg = f["argument"]
            emit(pad + ("return;" if arg is None else f"return {self.expr(arg, P_SEQ)};"))
        elif k == "ThrowStatement":
            emit(f"{pad}throw {self.expr(f['argument'], P_SEQ)};")
        elif k in ("BreakStatement", "ContinueStatement"):
            word = "break" if k == "BreakStatement" else "continue"
            label = f["label"]
            emit(pad + (f"{word} {label.value};" if label is not None else f"{word};"))
        elif k == "IfStatement":
            self.if_stmt(node, level, pad)
        elif k == "WhileStatement":
            self.head_body(f"{pad}while ({self.expr(f['test'], P_SEQ)})", f["body"], level)
        elif k == "DoWhileStatement":
            self.head_body(f"{pad}do", f["body"], level)
            emit(f"{pad}while ({self.expr(f['test'], P_SEQ)});")
        elif k == "ForStatement":
            init = f["init"]
            if init is None:
                init_s = ""
            elif init.kind == "VariableDeclaration":
                init_s = self.var_decl(init)
            else:
                init_s = self.expr(init, P_SEQ)
                if " in " in init_s:
                    init_s = f"({init_s})"
            test_s = self.expr(f["test"], P_SEQ) if f["test"] is not None else ""
            upd_s = self.expr(f["update"], P_SEQ) if f["update"] is not None else ""
            head = f"{pad}for ({init_s}; {test_s}; {upd_s})"
            self.head_body(head, f["body"], level)
        elif k in ("ForInStatement", "ForOfStatement"):
            left = f["left"]
            left_s = self.var_decl(left) if left.kind == "VariableDeclaration" \
                else self.expr(left, P_CALL)
            word = "in" if k == "ForInStatement" else "of"
            right_s = self.expr(f["right"], P_SEQ if word == "in" else P_ASSIGN)
            self.head_body(f"{pad}for ({left_s} {word} {right_s})", f["body"], level)
        elif k == "LabeledStatement":
            emit(f"{pad}{f['label'].value}:")
            self.stmt(f["body"], level)
        elif k == "WithStatement":
            self.head_body(f"{pad}with ({self.expr(f['object'], P_SEQ)})", f["body"], level)
        elif k == "TryStatement":
            emit(pad + "try {")
            self.body(f["block"].children, level + 1)
            h = f["handler"]
            if h is not None:
                hf = fields_of(h)
                param = f" ({hf['param'].value})" if hf["param"] is not None else ""
                emit(f"{pad}}} catch{param} {{")
                self.body(hf["body"].children, level + 1)
            if f["finalizer"] is not None:
                emit(pad + "} finally {")
                self.body(f["finalizer"].children, level + 1)
            emit(pad + "}")
        elif k == "SwitchStatement":
            emit(f"{pad}switch ({self.expr(f['discriminant'], P_SEQ)}) {{")
            for case in f["cases"]:
                cf = fields_of(case)
                if cf["test"] is None:
                    emit(f"{pad}{INDENT}default:")
                else:
                    emit(f"{pad}{INDENT}case {self.expr(cf['test'], P_SEQ)}:")
                self.body(cf["consequent"], level + 2)
            emit(pad + "}")
        elif k == "Program":
            self.body(node.children, level)
        else:
            raise ValueError(f"cannot print statement of kind {k}")

    def body(self, stmts: list[AstNode], level: int) -> None:
        for s in stmts:
            self.stmt(s, level)

    def head_body(self, head: str, body: AstNode, level: int) -> None:
        if body.kind == "BlockStatement":
            self.lines.append(head + " {")
            self.body(body.children, level + 1)
            self.lines.append(INDENT * level + "}")
        else:
            self.lines.append(head)
            self.stmt(body, level + 1)

    def if_stmt(self, node: AstNode, level: int, pad: str) -> None:
        f = fields_of(node)
        head = f"{pad}if ({self.expr(f['test'], P_SEQ)})"
        alt = f["alternate"]
        cons = f["consequent"]
        if alt is None:
            self.head_body(head, cons, level)
            return
        if cons.kind == "BlockStatement":
            self.lines.append(head + " {")
            self.body(cons.children, level + 1)
            self.lines.append(pad + ("} else {" if alt.kind == "BlockStatement" else "} else"))
        else:
            self.lines.append(head)
            self.stmt(cons, level + 1)
            self.lines.append(pad + ("else {" if alt.kind == "BlockStatement" else "else"))
        if alt.kind == "BlockStatement":
            self.body(alt.children, level + 1)
            self.lines.append(pad + "}")
        else:
            self.stmt(alt, level + 1)

    def var_decl(self, node: AstNode) -> str:
        parts = []
        for d in node.children:
            df = fields_of(d)
            s = df["id"].value
            if df["init"] is not None:
                s += " = " + self.expr(df["init"], P_ASSIGN)
            parts.append(s)
        return f"{node.value} " + ", ".join(parts)

    def function(self, node: AstNode, level: int, pad: str) -> None:
        self.lines.append(pad + self.function_head(node) + " {")
        self.body(fields_of(node)["body"].children, level + 1)
        self.lines.append(pad + "}")

    def function_head(self, node: AstNode) -> str:
        f = fields_of(node)
        name = f" {f['id'].value}" if f["id"] is not None else ""
        params = ", ".join(p.value for p in f["params"])
        return f"function{name}({params})"

    # -- expressions ---------------------------------------------------------------
    def expr(self, node: AstNode, min_prec: int) -> str:
        text = self._expr(node)
        if precedence(node) < min_prec:
            return f"({text})"
        return text

    def inline_block(self, block: AstNode) -> str:
        sub = type(self)()
        sub.body(block.children, 0)
        if not sub.lines:
            return "{}"
        return "{ " + " ".join(sub.lines) + " }"

    def string_literal(self, node: AstNode) -> str:
        return quote_string(node.value)

    def _expr(self, node: AstNode) -> str:
        k = node.kind
        if k == "Identifier":
            return node.value
        if k == "Literal":
            lt = node.attrs.get("ltype")
            if lt == "string":
                return self.string_literal(node)
            return node.value
        if k == "ThisExpression":
            return "this"
        if k == "TemplateLiteral":
            out = ["`"]
            for c in node.children:
                if c.kind == "TemplateElement":
                    out.append(c.raw if c.raw is not None else _template_escape(c.value))
                else:
                    out.append("${" + self.expr(c, P_SEQ) + "}")
            out.append("`")
            return "".join(out)
        if k == "ArrayExpression":
            return "[" + ", ".join(self.expr(c, P_ASSIGN) for c in node.children) + "]"
        if k == "ObjectExpression":
            if not node.children:
                return "{}"
            return "{ " + ", ".join(self.prop(p) for p in node.children) + " }"
        if k == "FunctionExpression":
            return self.function_head(node) + " " + self.inline_block(node.children[-1])
        if k == "ArrowFunctionExpression":
            params = node.children[:-1]
            body = node.children[-1]
            ps = "(" + ", ".join(p.value for p in params) + ")"
            if node.attrs.get("expression"):
                b = self.expr(body, P_ASSIGN)
                if b.startswith("{"):
                    b = f"({b})"
            else:
                b = self.inline_block(body)
            return f"{ps} => {b}"
        if k == "SequenceExpression":
            return ", ".join(self.expr(c, P_ASSIGN) for c in node.children)
        if k == "AssignmentExpression":
            left, right = node.children
            return f"{self.expr(left, P_CALL)} {node.value} {self.expr(right, P_ASSIGN)}"
        if k == "ConditionalExpression":
            t, c, a = node.children
            return f"{self.expr(t, P_COND + 1)} ? {self.expr(c, P_ASSIGN)} : {self.expr(a, P_ASSIGN)}"
        if k in ("BinaryExpression", "LogicalExpression"):
            left, right = node.children
            p = precedence(node)
            if node.value == "**":
                ls = self.expr(left, p + 1)
                if left.kind == "UnaryExpression" or (left.kind == "UpdateExpression"
                                                      and left.attrs.get("prefix")):
                    ls = f"({self._expr(left)})"
                rs = self.expr(right, p)
            else:
                ls = self.expr(left, p)
                rs = self.expr(right, p + 1)
            # keep ?? from mixing with ||/&& unparenthesized
            if node.value == "??" or node.value in ("||", "&&"):
                if left.kind == "LogicalExpression" and (left.value == "??") != (node.value == "??"):
                    ls = f"({self._expr(left)})"
                if right.kind == "LogicalExpression" and (right.value == "??") != (node.value == "??"):
                    rs = f"({self._expr(right)})"
            return f"{ls} {node.value} {rs}"
        if k == "UnaryExpression":
            arg = self.expr(node.children[0], P_UNARY)
            op = node.value
            if op.isalpha():
                return f"{op} {arg}"
            if arg.startswith(op[-1]) and op in ("+", "-"):
                return f"{op} {arg}"
            return f"{op}{arg}"
        if k == "UpdateExpression":
            arg = self.expr(node.children[0], P_POSTFIX)
            return f"{node.value}{arg}" if node.attrs.get("prefix") else f"{arg}{node.value}"
        if k == "CallExpression":
            callee = node.children[0]
            cs = self.expr(callee, P_CALL)
            if callee.kind in ("FunctionExpression", "ArrowFunctionExpression"):
                cs = f"({self._expr(callee)})"
            args = ", ".join(self.expr(a, P_ASSIGN) for a in node.children[1:])
            return f"{cs}({args})"
        if k == "NewExpression":
            callee = node.children[0]
            cs = self.expr(callee, P_MEMBER)
            if _contains_call(callee) and not cs.startswith("("):
                cs = f"({cs})"
            args = ", ".join(self.expr(a, P_ASSIGN) for a in node.children[1:])
            return f"new {cs}({args})"
        if k == "MemberExpression":
            obj, prop = node.children
            os_ = self.expr(obj, P_CALL)
            if obj.kind == "Literal" and obj.attrs.get("ltype") == "number":
                os_ = f"({os_})"
            if obj.kind in ("FunctionExpression", "ObjectExpression"):
                os_ = f"({os_})"
            if node.attrs.get("computed"):
                return f"{os_}[{self.expr(prop, P_SEQ)}]"
            return f"{os_}.{prop.value}"
        raise ValueError(f"cannot print expression of kind {k}")

    def prop(self, p: AstNode) -> str:
        key, value = p.children
        ks = self._expr(key)
        if p.value in ("get", "set"):
            params = ", ".join(x.value for x in fields_of(value)["params"])
            return f"{p.value} {ks}({params}) {self.inline_block(value.children[-1])}"
        return f"{ks}: {self.expr(value, P_ASSIGN)}"


def _template_escape(s: str) -> str:
    return s.replace("\\", "\\\\").replace("`", "\\`").replace("${", "\\${")


def print_code(node: AstNode | Ast, printer: type[Printer] = Printer) -> str:
    """Render a tree as canonical JavaScript source."""
    if isinstance(node, Ast):
        node = node.root
    p = printer()
    if node.kind == "Program":
        p.body(node.children, 0)
    else:
        p.stmt(node, 0)
    return "\n".join(p.lines) + ("\n" if p.lines else "")
