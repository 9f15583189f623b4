"""Recursive-descent parser for an ES5 + common ES2015 subset.

Supported beyond ES5: ``let``/``const``, arrow functions with plain
identifier parameters, template literals, ``for...of``.  Destructuring,
default/rest parameters, spread, classes, generators and async functions
are rejected with ``ParseError``; feed such corpora through the ESTree
ingestion path instead.

Automatic semicolon insertion follows the three core rules only: before a
``}``, at end of input, after a line break (including the restricted
productions ``return``/``break``/``continue``/``throw`` and postfix
``++``/``--``).
"""
from __future__ import annotations

import sys

import math

from .lexer import (COMMENT, EOF, IDENTIFIER, KEYWORD, NUMERIC, PUNCTUATOR, REGEX,
                    STRING, TEMPLATE, Lexer, SourceFile, Token)
from .nodes import Ast, AstNode, make

MAX_DEPTH = 400

BINARY_PRECEDENCE = {
    "??": 1,
    "||": 2, "&&": 3, "|": 4, "^": 5, "&": 6,
    "==": 7, "!=": 7, "===": 7, "!==": 7,
    "<": 8, ">": 8, "<=": 8, ">=": 8, "in": 8, "instanceof": 8,
    "<<": 9, ">>": 9, ">>>": 9,
    "+": 10, "-": 10,
    "*": 11, "/": 11, "%": 11,
    "**": 12,
}
LOGICAL_OPS = frozenset({"||", "&&", "??"})
ASSIGN_OPS = frozenset({"=", "+=", "-=", "*=", "/=", "%=", "<<=", ">>=", ">>>=",
                        "&=", "|=", "^=", "**=", "&&=", "||=", "??="})
UNARY_OPS = frozenset({"!", "~", "+", "-", "typeof", "void", "delete"})
UNSUPPORTED_KEYWORDS = frozenset({"class", "import", "export", "yield", "super"})


class ParseError(Exception):
    def __init__(self, line: int, column: int, expected: str, found: str):
        super().__init__(f"expected {expected}, found {found!r} at {line}:{column}")
        self.line = line
        self.column = column
        self.expected = expected
        self.found = found


def number_text(value) -> str:
    """Canonical decimal rendering of a numeric literal value."""
    if isinstance(value, int) and abs(value) <= 2 ** 53:
        return str(value)
    f = float(value)
    if math.isinf(f):
        return "Infinity"
    if f.is_integer() and abs(f) < 1e21:
        return str(int(f))
    r = repr(f)
    if "e" in r:
        mant, exp = r.split("e")
        sign = "-" if exp.startswith("-") else "+"
        r = f"{mant}e{sign}{exp.lstrip('+-').lstrip('0') or '0'}"
    return r


class Parser:
    def __init__(self, tokens: list[Token], eof_line: int = 1, eof_col: int = 0):
        self.toks = [t for t in tokens if t.kind != COMMENT]
        last = self.toks[-1] if self.toks else None
        eof = Token(EOF, "", last.line if last else eof_line,
                    (last.column + len(last.lexeme)) if last else eof_col)
        eof.newline_before = True
        self.toks.append(eof)
        self.i = 0
        self.depth = 0

    # -- token helpers -------------------------------------------------------
    @property
    def cur(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def advance(self) -> Token:
        tok = self.toks[self.i]
        if tok.kind != EOF:
            self.i += 1
        return tok

    def at(self, lexeme: str) -> bool:
        t = self.cur
        return t.lexeme == lexeme and t.kind in (PUNCTUATOR, KEYWORD)

    def at_ident(self, name: str | None = None) -> bool:
        t = self.cur
        return t.kind == IDENTIFIER and (name is None or t.lexeme == name)

    def eat(self, lexeme: str) -> bool:
        if self.at(lexeme):
            self.advance()
            return True
        return False

    def error(self, expected: str, tok: Token | None = None) -> ParseError:
        tok = tok or self.cur
        return ParseError(tok.line, tok.column, expected, tok.lexeme or "<eof>")

    def expect(self, lexeme: str) -> Token:
        if not self.at(lexeme):
            raise self.error(repr(lexeme))
        return self.advance()

    def consume_semicolon(self) -> None:
        if self.eat(";"):
            return
        if self.at("}") or self.cur.kind == EOF or self.cur.newline_before:
            return
        raise self.error("';'")

    def enter(self) -> None:
        self.depth += 1
        if self.depth > MAX_DEPTH:
            raise self.error("shallower nesting")

    # -- program / statements --------------------------------------------------
    def parse_program(self) -> AstNode:
        body = []
        while self.cur.kind != EOF:
            body.append(self.parse_statement())
        return make("Program", 1, 0, body=body)

    def parse_statement(self) -> AstNode:
        self.enter()
        try:
            return self._statement()
        finally:
            self.depth -= 1

    def _statement(self) -> AstNode:
        t = self.cur
        if t.kind == PUNCTUATOR:
            if t.lexeme == "{":
                return self.parse_block()
            if t.lexeme == ";":
                self.advance()
                return make("EmptyStatement", t.line, t.column)
        elif t.kind == KEYWORD:
            kw = t.lexeme
            if kw in ("var", "let", "const"):
                node = self.parse_var_declaration()
                self.consume_semicolon()
                return node
            handler = getattr(self, f"parse_{kw}_statement", None)
            if handler is not None:
                return handler()
            if kw in UNSUPPORTED_KEYWORDS:
                raise self.error("supported statement")
        elif t.kind == IDENTIFIER and self.peek().lexeme == ":" and self.peek().kind == PUNCTUATOR:
            label = self.parse_identifier()
            self.advance()
            body = self.parse_statement()
            return make("LabeledStatement", t.line, t.column, label=label, body=body)
        expr = self.parse_expression()
        self.consume_semicolon()
        return make("ExpressionStatement", t.line, t.column, expression=expr)

    def parse_block(self) -> AstNode:
        t = self.expect("{")
        body = []
        while not self.at("}"):
            if self.cur.kind == EOF:
                raise self.error("'}'")
            body.append(self.parse_statement())
        self.advance()
        return make("BlockStatement", t.line, t.column, body=body)

    def parse_var_declaration(self, no_in: bool = False) -> AstNode:
        t = self.advance()
        decls = []
        while True:
            d = self.cur
            ident = self.parse_identifier()
            init = None
            if self.eat("="):
                init = self.parse_assignment(no_in)
            decls.append(make("VariableDeclarator", d.line, d.column, id=ident, init=init))
            if not self.eat(","):
                break
        return make("VariableDeclaration", t.line, t.column, value=t.lexeme, declarations=decls)

    def parse_function_statement(self) -> AstNode:
        return self.parse_function("FunctionDeclaration", require_name=True)

    def parse_function(self, kind: str, require_name: bool = False) -> AstNode:
        t = self.expect("function")
        if self.at("*"):
            raise self.error("'(' (generators unsupported)")
        ident = None
        if self.cur.kind == IDENTIFIER:
            ident = self.parse_identifier()
        elif require_name:
            raise self.error("function name")
        params = self.parse_params()
        body = self.parse_function_body()
        return make(kind, t.line, t.column, id=ident, params=params, body=body)

    def parse_params(self) -> list[AstNode]:
        self.expect("(")
        params = []
        while not self.at(")"):
            params.append(self.parse_identifier())
            if not self.at(")"):
                self.expect(",")
        self.advance()
        return params

    def parse_function_body(self) -> AstNode:
        return self.parse_block()

    def parse_if_statement(self) -> AstNode:
        t = self.advance()
        self.expect("(")
        test = self.parse_expression()
        self.expect(")")
        cons = self.parse_statement()
        alt = self.parse_statement() if self.eat("else") else None
        return make("IfStatement", t.line, t.column, test=test, consequent=cons, alternate=alt)

    def parse_while_statement(self) -> AstNode:
        t = self.advance()
        self.expect("(")
        test = self.parse_expression()
        self.expect(")")
        body = self.parse_statement()
        return make("WhileStatement", t.line, t.column, test=test, body=body)

    def parse_do_statement(self) -> AstNode:
        t = self.advance()
        body = self.parse_statement()
        self.expect("while")
        self.expect("(")
        test = self.parse_expression()
        self.expect(")")
        self.eat(";")
        return make("DoWhileStatement", t.line, t.column, body=body, test=test)

    def parse_for_statement(self) -> AstNode:
        t = self.advance()
        self.expect("(")
        init = None
        if self.at(";"):
            pass
        elif self.cur.kind == KEYWORD and self.cur.lexeme in ("var", "let", "const"):
            init = self.parse_var_declaration(no_in=True)
            decls = init.children
            if len(decls) == 1 and len(decls[0].children) == 1:
                loop = self._for_in_of(t, init)
                if loop is not None:
                    return loop
        else:
            init = self.parse_expression(no_in=True)
            if init.kind in ("Identifier", "MemberExpression"):
                loop = self._for_in_of(t, init)
                if loop is not None:
                    return loop
        self.expect(";")
        test = None if self.at(";") else self.parse_expression()
        self.expect(";")
        update = None if self.at(")") else self.parse_expression()
        self.expect(")")
        body = self.parse_statement()
        return make("ForStatement", t.line, t.column, init=init, test=test,
                    update=update, body=body)

    def _for_in_of(self, t: Token, left: AstNode) -> AstNode | None:
        if self.at("in"):
            kind = "ForInStatement"
            self.advance()
            right = self.parse_expression()
        elif self.at_ident("of"):
            kind = "ForOfStatement"
            self.advance()
            right = self.parse_assignment()
        else:
            return None
        self.expect(")")
        body = self.parse_statement()
        return make(kind, t.line, t.column, left=left, right=right, body=body)

    def _jump(self, kind: str) -> AstNode:
        t = self.advance()
        label = None
        if self.cur.kind == IDENTIFIER and not self.cur.newline_before:
            label = self.parse_identifier()
        self.consume_semicolon()
        return make(kind, t.line, t.column, label=label)

    def parse_break_statement(self) -> AstNode:
        return self._jump("BreakStatement")

    def parse_continue_statement(self) -> AstNode:
        return self._jump("ContinueStatement")

    def parse_return_statement(self) -> AstNode:
        t = self.advance()
        arg = None
        if not (self.at(";") or self.at("}") or self.cur.kind == EOF or self.cur.newline_before):
            arg = self.parse_expression()
        self.consume_semicolon()
        return make("ReturnStatement", t.line, t.column, argument=arg)

    def parse_throw_statement(self) -> AstNode:
        t = self.advance()
        if self.cur.newline_before:
            raise self.error("expression on the same line as 'throw'")
        arg = self.parse_expression()
        self.consume_semicolon()
        return make("ThrowStatement", t.line, t.column, argument=arg)

    def parse_try_statement(self) -> AstNode:
        t = self.advance()
        block = self.parse_block()
        handler = finalizer = None
        if self.at("catch"):
            c = self.advance()
            param = None
            if self.eat("("):
                param = self.parse_identifier()
                self.expect(")")
            body = self.parse_block()
            handler = make("CatchClause", c.line, c.column, param=param, body=body)
        if self.eat("finally"):
            finalizer = self.parse_block()
        if handler is None and finalizer is None:
            raise self.error("'catch' or 'finally'")
        return make("TryStatement", t.line, t.column, block=block, handler=handler,
                    finalizer=finalizer)

    def parse_switch_statement(self) -> AstNode:
        t = self.advance()
        self.expect("(")
        disc = self.parse_expression()
        self.expect(")")
        self.expect("{")
        cases = []
        while not self.eat("}"):
            c = self.cur
            if self.eat("case"):
                test = self.parse_expression()
            elif self.eat("default"):
                test = None
            else:
                raise self.error("'case' or 'default'")
            self.expect(":")
            cons = []
            while not (self.at("case") or self.at("default") or self.at("}")):
                if self.cur.kind == EOF:
                    raise self.error("'}'")
                cons.append(self.parse_statement())
            cases.append(make("SwitchCase", c.line, c.column, test=test, consequent=cons))
        return make("SwitchStatement", t.line, t.column, discriminant=disc, cases=cases)

    def parse_with_statement(self) -> AstNode:
        t = self.advance()
        self.expect("(")
        obj = self.parse_expression()
        self.expect(")")
        body = self.parse_statement()
        return make("WithStatement", t.line, t.column, object=obj, body=body)

    def parse_debugger_statement(self) -> AstNode:
        t = self.advance()
        self.consume_semicolon()
        return make("DebuggerStatement", t.line, t.column)

    # -- expressions -------------------------------------------------------------
    def parse_expression(self, no_in: bool = False) -> AstNode:
        t = self.cur
        expr = self.parse_assignment(no_in)
        if not self.at(","):
            return expr
        exprs = [expr]
        while self.eat(","):
            exprs.append(self.parse_assignment(no_in))
        return make("SequenceExpression", t.line, t.column, expressions=exprs)

    def _arrow_ahead(self) -> bool:
        t = self.cur
        if t.kind == IDENTIFIER:
            nxt = self.peek()
            return nxt.lexeme == "=>" and nxt.kind == PUNCTUATOR and not nxt.newline_before
        if not self.at("("):
            return False
        depth = 0
        j = self.i
        while j < len(self.toks):
            tok = self.toks[j]
            if tok.kind == EOF:
                return False
            if tok.kind == PUNCTUATOR and tok.lexeme in "([{":
                depth += 1
            elif tok.kind == PUNCTUATOR and tok.lexeme in ")]}":
                depth -= 1
                if depth == 0:
                    after = self.toks[j + 1]
                    return after.kind == PUNCTUATOR and after.lexeme == "=>" \
                        and not after.newline_before
            j += 1
        return False

    def parse_arrow(self) -> AstNode:
        t = self.cur
        if t.kind == IDENTIFIER:
            params = [self.parse_identifier()]
        else:
            params = self.parse_params()
        self.expect("=>")
        if self.at("{"):
            body = self.parse_function_body()
            expression = False
        else:
            body = self.parse_assignment()
            expression = True
        return make("ArrowFunctionExpression", t.line, t.column,
                    attrs={"expression": expression}, params=params, body=body)

    def parse_assignment(self, no_in: bool = False) -> AstNode:
        self.enter()
        try:
            if self._arrow_ahead():
                return self.parse_arrow()
            t = self.cur
            left = self.parse_conditional(no_in)
            op = self.cur
            if op.kind == PUNCTUATOR and op.lexeme in ASSIGN_OPS:
                if left.kind not in ("Identifier", "MemberExpression"):
                    raise self.error("assignable left-hand side", t)
                self.advance()
                right = self.parse_assignment(no_in)
                return make("AssignmentExpression", t.line, t.column, value=op.lexeme,
                            left=left, right=right)
            return left
        finally:
            self.depth -= 1

    def parse_conditional(self, no_in: bool = False) -> AstNode:
        t = self.cur
        test = self.parse_binary(0, no_in)
        if not self.eat("?"):
            return test
        cons = self.parse_assignment()
        self.expect(":")
        alt = self.parse_assignment(no_in)
        return make("ConditionalExpression", t.line, t.column, test=test,
                    consequent=cons, alternate=alt)

    def _binary_op(self, no_in: bool) -> str | None:
        t = self.cur
        if t.kind == PUNCTUATOR and t.lexeme in BINARY_PRECEDENCE:
            return t.lexeme
        if t.kind == KEYWORD and t.lexeme in ("instanceof", "in"):
            if t.lexeme == "in" and no_in:
                return None
            return t.lexeme
        return None

    def parse_binary(self, min_prec: int, no_in: bool = False) -> AstNode:
        t = self.cur
        left = self.parse_unary()
        while True:
            op = self._binary_op(no_in)
            if op is None:
                return left
            prec = BINARY_PRECEDENCE[op]
            if prec <= min_prec:
                return left
            self.advance()
            # '**' is right associative
            right = self.parse_binary(prec - 1 if op == "**" else prec, no_in)
            kind = "LogicalExpression" if op in LOGICAL_OPS else "BinaryExpression"
            left = make(kind, t.line, t.column, value=op, left=left, right=right)

    def parse_unary(self) -> AstNode:
        t = self.cur
        if (t.kind == PUNCTUATOR or t.kind == KEYWORD) and t.lexeme in UNARY_OPS:
            self.advance()
            self.enter()
            try:
                arg = self.parse_unary()
            finally:
                self.depth -= 1
            if self.at("**"):
                raise self.error("parenthesized unary operand before '**'")
            return make("UnaryExpression", t.line, t.column, value=t.lexeme,
                        attrs={"prefix": True}, argument=arg)
        if t.kind == PUNCTUATOR and t.lexeme in ("++", "--"):
            self.advance()
            arg = self.parse_unary()
            if arg.kind not in ("Identifier", "MemberExpression"):
                raise self.error("assignable operand", t)
            return make("UpdateExpression", t.line, t.column, value=t.lexeme,
                        attrs={"prefix": True}, argument=arg)
        expr = self.parse_lhs()
        op = self.cur
        if op.kind == PUNCTUATOR and op.lexeme in ("++", "--") and not op.newline_before:
            if expr.kind not in ("Identifier", "MemberExpression"):
                raise self.error("assignable operand", t)
            self.advance()
            return make("UpdateExpression", t.line, t.column, value=op.lexeme,
                        attrs={"prefix": False}, argument=expr)
        return expr

    def parse_arguments(self) -> list[AstNode]:
        self.expect("(")
        args = []
        while not self.at(")"):
            if self.at("..."):
                raise self.error("argument (spread unsupported)")
            args.append(self.parse_assignment())
            if not self.at(")"):
                self.expect(",")
        self.advance()
        return args

    def parse_lhs(self) -> AstNode:
        t = self.cur
        if self.at("new"):
            self.advance()
            if self.at("."):
                raise self.error("constructor (new.target unsupported)")
            self.enter()
            try:
                callee = self._member_only(self.parse_new_callee())
            finally:
                self.depth -= 1
            args = self.parse_arguments() if self.at("(") else []
            expr = make("NewExpression", t.line, t.column, callee=callee, arguments=args)
        else:
            expr = self.parse_primary()
        return self._call_tail(expr, t)

    def parse_new_callee(self) -> AstNode:
        if self.at("new"):
            return self.parse_lhs_new_only()
        return self.parse_primary()

    def parse_lhs_new_only(self) -> AstNode:
        t = self.advance()
        callee = self._member_only(self.parse_new_callee())
        args = self.parse_arguments() if self.at("(") else []
        return make("NewExpression", t.line, t.column, callee=callee, arguments=args)

    def _member_only(self, expr: AstNode) -> AstNode:
        while True:
            if self.at("."):
                self.advance()
                prop = self.parse_property_name_ident()
                expr = make("MemberExpression", expr.line, expr.column,
                            attrs={"computed": False}, object=expr, property=prop)
            elif self.at("["):
                self.advance()
                prop = self.parse_expression()
                self.expect("]")
                expr = make("MemberExpression", expr.line, expr.column,
                            attrs={"computed": True}, object=expr, property=prop)
            elif self.cur.kind == TEMPLATE:
                raise self.error("member access (tagged templates unsupported)")
            else:
                return expr

    def _call_tail(self, expr: AstNode, t: Token) -> AstNode:
        while True:
            expr = self._member_only(expr)
            if self.at("("):
                args = self.parse_arguments()
                expr = make("CallExpression", t.line, t.column, callee=expr, arguments=args)
            elif self.at("?."):
                raise self.error("member access (optional chaining unsupported)")
            else:
                return expr

    def parse_property_name_ident(self) -> AstNode:
        t = self.cur
        if t.kind in (IDENTIFIER, KEYWORD):
            self.advance()
            return AstNode("Identifier", t.value if t.kind == IDENTIFIER else t.lexeme,
                           t.line, t.column)
        raise self.error("property name")

    def parse_identifier(self) -> AstNode:
        t = self.cur
        if t.kind != IDENTIFIER:
            raise self.error("identifier")
        self.advance()
        return AstNode("Identifier", t.value, t.line, t.column)

    def parse_primary(self) -> AstNode:
        t = self.cur
        k = t.kind
        if k == IDENTIFIER:
            return self.parse_identifier()
        if k == NUMERIC:
            self.advance()
            return AstNode("Literal", number_text(t.value), t.line, t.column,
                           attrs={"ltype": "number"}, raw=t.lexeme)
        if k == STRING:
            self.advance()
            return AstNode("Literal", t.value, t.line, t.column,
                           attrs={"ltype": "string"}, raw=t.lexeme)
        if k == REGEX:
            self.advance()
            return AstNode("Literal", t.lexeme, t.line, t.column,
                           attrs={"ltype": "regex"}, raw=t.lexeme)
        if k == TEMPLATE:
            self.advance()
            return self.parse_template(t)
        if k == KEYWORD:
            kw = t.lexeme
            if kw in ("true", "false"):
                self.advance()
                return AstNode("Literal", kw, t.line, t.column,
                               attrs={"ltype": "boolean"}, raw=kw)
            if kw == "null":
                self.advance()
                return AstNode("Literal", "null", t.line, t.column,
                               attrs={"ltype": "null"}, raw="null")
            if kw == "this":
                self.advance()
                return make("ThisExpression", t.line, t.column)
            if kw == "function":
                return self.parse_function("FunctionExpression")
        if k == PUNCTUATOR:
            if t.lexeme == "(":
                self.advance()
                expr = self.parse_expression()
                self.expect(")")
                return expr
            if t.lexeme == "[":
                return self.parse_array()
            if t.lexeme == "{":
                return self.parse_object()
        raise self.error("expression")

    def parse_array(self) -> AstNode:
        t = self.advance()
        elems = []
        while not self.at("]"):
            if self.at(","):
                raise self.error("array element (holes unsupported)")
            if self.at("..."):
                raise self.error("array element (spread unsupported)")
            elems.append(self.parse_assignment())
            if not self.at("]"):
                self.expect(",")
        self.advance()
        return make("ArrayExpression", t.line, t.column, elements=elems)

    def parse_object(self) -> AstNode:
        t = self.advance()
        props = []
        while not self.at("}"):
            props.append(self.parse_property())
            if not self.at("}"):
                self.expect(",")
        self.advance()
        return make("ObjectExpression", t.line, t.column, properties=props)

    def _property_key(self) -> AstNode:
        t = self.cur
        if t.kind == STRING:
            self.advance()
            return AstNode("Literal", t.value, t.line, t.column,
                           attrs={"ltype": "string"}, raw=t.lexeme)
        if t.kind == NUMERIC:
            self.advance()
            return AstNode("Literal", number_text(t.value), t.line, t.column,
                           attrs={"ltype": "number"}, raw=t.lexeme)
        if t.kind in (IDENTIFIER, KEYWORD):
            return self.parse_property_name_ident()
        raise self.error("property key")

    def parse_property(self) -> AstNode:
        t = self.cur
        if (t.kind == IDENTIFIER and t.lexeme in ("get", "set")
                and self.peek().kind in (IDENTIFIER, KEYWORD, STRING, NUMERIC)):
            self.advance()
            key = self._property_key()
            f = self.cur
            params = self.parse_params()
            body = self.parse_function_body()
            fn = make("FunctionExpression", f.line, f.column, params=params, body=body)
            return self._prop(t, t.lexeme, key, fn)
        key = self._property_key()
        self.expect(":")
        value = self.parse_assignment()
        return self._prop(t, "init", key, value)

    @staticmethod
    def _prop(t: Token, kind: str, key: AstNode, value: AstNode) -> AstNode:
        return AstNode("Property", kind, t.line, t.column, [key, value], {"computed": False})

    def parse_template(self, t: Token) -> AstNode:
        children = []
        line, col = t.line, t.column + 1
        for part in t.parts:
            if part[0] == "quasi":
                _, raw, cooked = part
                children.append(AstNode("TemplateElement", cooked, line, col, raw=raw))
            else:
                _, src, _offset, e_line, e_col = part
                toks = Lexer(src, e_line, e_col).tokenize()
                sub = Parser(toks, e_line, e_col)
                if sub.cur.kind == EOF:
                    raise ParseError(e_line, e_col, "expression", "}")
                sub.depth = self.depth
                expr = sub.parse_expression()
                if sub.cur.kind != EOF:
                    raise sub.error("'}'")
                children.append(expr)
                line, col = e_line, e_col
        return AstNode("TemplateLiteral", None, t.line, t.column, children)


def parse_text(text: str) -> AstNode:
    tokens = Lexer(text).tokenize()
    # each nesting level costs ~12 interpreter frames in the descent
    if sys.getrecursionlimit() < 12 * MAX_DEPTH + 2000:
        sys.setrecursionlimit(12 * MAX_DEPTH + 2000)
    try:
        return Parser(tokens).parse_program()
    except RecursionError:
        t = tokens[0] if tokens else None
        raise ParseError(t.line if t else 1, t.column if t else 0,
                         "shallower nesting", "recursion limit") from None


def parse(source: SourceFile | str) -> Ast:
    """Parse JavaScript source into an ``Ast``.

    Raises ``LexError`` or ``ParseError``; never returns a partial tree.
    """
    if isinstance(source, str):
        source = SourceFile.from_text(source)
    root = parse_text(source.text)
    return Ast.from_root(root, source.data or source.text)
