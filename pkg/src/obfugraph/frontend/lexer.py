"""JavaScript tokenizer.

Produces the full token stream, comments included.  Regex-vs-division is
decided from the previous significant token.  Template literals come out as
a single ``TemplateLiteral`` token whose ``parts`` list splits the raw text
into quasis and substitution sources (with their offsets) for the parser.
"""
from __future__ import annotations

import unicodedata
from dataclasses import dataclass, field
from pathlib import Path

IDENTIFIER = "Identifier"
KEYWORD = "Keyword"
NUMERIC = "NumericLiteral"
STRING = "StringLiteral"
REGEX = "RegexLiteral"
TEMPLATE = "TemplateLiteral"
PUNCTUATOR = "Punctuator"
COMMENT = "Comment"
EOF = "EOF"

KEYWORDS = frozenset("""
break case catch class const continue debugger default delete do else export
extends finally for function if import in instanceof let new return super
switch this throw try typeof var void while with yield true false null
""".split())

PUNCTUATORS = sorted("""
>>>= ... === !== **= <<= >>= >>> => == != <= >= && || ?? ++ -- += -= *= /= %=
&= |= ^= << >> ** &&= ||= ??= { } ( ) [ ] ; , < > + - * / % & | ^ ! ~ ? : = . @
""".split(), key=len, reverse=True)
_PUNCT_BY_CHAR: dict[str, list[str]] = {}
for _p in PUNCTUATORS:
    _PUNCT_BY_CHAR.setdefault(_p[0], []).append(_p)

LINE_TERMINATORS = "\n\r\u2028\u2029"

# Tokens after which a '/' starts a division rather than a regex.
_DIV_PRECEDERS_PUNCT = frozenset({")", "]", "}"})
_DIV_PRECEDERS_KW = frozenset({"this", "super", "true", "false", "null"})


class LexError(Exception):
    def __init__(self, line: int, column: int, reason: str):
        super().__init__(f"{reason} at {line}:{column}")
        self.line = line
        self.column = column
        self.reason = reason


@dataclass
class SourceFile:
    path: str
    text: str
    data: bytes = b""

    @classmethod
    def from_path(cls, path: str | Path) -> "SourceFile":
        data = Path(path).read_bytes()
        return cls.from_bytes(data, str(path))

    @classmethod
    def from_bytes(cls, data: bytes, path: str = "<bytes>") -> "SourceFile":
        text = data.decode("utf-8", errors="replace")
        if not text:
            raise ValueError(f"{path}: empty source")
        return cls(path, text, data)

    @classmethod
    def from_text(cls, text: str, path: str = "<string>") -> "SourceFile":
        return cls(path, text, text.encode("utf-8", "surrogatepass"))


@dataclass
class Token:
    kind: str
    lexeme: str
    line: int
    column: int
    start: int = 0
    end: int = 0
    newline_before: bool = False
    value: object = None  # decoded string / numeric value
    parts: list = field(default_factory=list)  # template pieces

    def __repr__(self) -> str:
        return f"{self.kind}({self.lexeme!r}@{self.line}:{self.column})"


def _isdec(ch: str) -> bool:
    return len(ch) == 1 and "0" <= ch <= "9"


def _is_id_start(ch: str) -> bool:
    return ch.isalpha() or ch in "$_" or unicodedata.category(ch) in ("Nl",)


def _is_id_part(ch: str) -> bool:
    return (ch.isalnum() or ch in "$_\u200c\u200d"
            or unicodedata.category(ch) in ("Mn", "Mc", "Nd", "Pc", "Nl"))


def _combine_surrogates(s: str) -> str:
    try:
        return s.encode("utf-16", "surrogatepass").decode("utf-16")
    except UnicodeDecodeError:
        return s


class Lexer:
    def __init__(self, text: str, line: int = 1, column: int = 0, offset: int = 0):
        self.src = text
        self.pos = offset
        self.line = line
        self.col = column
        self.tokens: list[Token] = []
        self._last_sig: Token | None = None

    # -- low-level helpers -------------------------------------------------
    def _error(self, reason: str, line: int | None = None, col: int | None = None):
        return LexError(self.line if line is None else line,
                        self.col if col is None else col, reason)

    def _peek(self, k: int = 0) -> str:
        i = self.pos + k
        return self.src[i] if i < len(self.src) else ""

    def _advance(self, n: int = 1) -> None:
        for _ in range(n):
            ch = self.src[self.pos]
            self.pos += 1
            if ch in LINE_TERMINATORS:
                if ch == "\r" and self._peek() == "\n":
                    self.pos += 1
                self.line += 1
                self.col = 0
            else:
                self.col += 1

    def _skip_whitespace(self) -> bool:
        saw_newline = False
        while self.pos < len(self.src):
            ch = self.src[self.pos]
            if ch in LINE_TERMINATORS:
                saw_newline = True
                self._advance()
            elif ch in " \t\v\f\u00a0\ufeff" or (ch.isspace() and ch not in LINE_TERMINATORS):
                self._advance()
            else:
                break
        return saw_newline

    # -- driver --------------------------------------------------------------
    def tokenize(self) -> list[Token]:
        newline = False
        while True:
            newline |= self._skip_whitespace()
            if self.pos >= len(self.src):
                break
            tok = self._next_token()
            if tok.kind == COMMENT:
                newline |= any(c in LINE_TERMINATORS for c in tok.lexeme)
                self.tokens.append(tok)
                continue
            tok.newline_before = newline
            newline = False
            self.tokens.append(tok)
            self._last_sig = tok
        return self.tokens

    def _regex_allowed(self) -> bool:
        t = self._last_sig
        if t is None:
            return True
        if t.kind in (IDENTIFIER, NUMERIC, STRING, REGEX, TEMPLATE):
            return False
        if t.kind == KEYWORD:
            return t.lexeme not in _DIV_PRECEDERS_KW
        return t.lexeme not in _DIV_PRECEDERS_PUNCT

    def _next_token(self) -> Token:
        ch = self.src[self.pos]
        nxt = self._peek(1)
        line, col, start = self.line, self.col, self.pos
        if ch == "/" and nxt == "/":
            while self.pos < len(self.src) and self.src[self.pos] not in LINE_TERMINATORS:
                self._advance()
            kind = COMMENT
        elif ch == "/" and nxt == "*":
            end = self.src.find("*/", self.pos + 2)
            if end < 0:
                raise self._error("unterminated comment")
            self._advance(end + 2 - self.pos)
            kind = COMMENT
        elif ch in "'\"":
            value = self._scan_string(ch)
            return self._make(STRING, start, line, col, value)
        elif ch == "`":
            parts = self._scan_template()
            tok = self._make(TEMPLATE, start, line, col)
            tok.parts = parts
            return tok
        elif _isdec(ch) or (ch == "." and _isdec(nxt)):
            value = self._scan_number()
            return self._make(NUMERIC, start, line, col, value)
        elif _is_id_start(ch) or ch == "\\":
            name = self._scan_identifier()
            kind = KEYWORD if name in KEYWORDS else IDENTIFIER
            return self._make(kind, start, line, col, name)
        elif ch == "/" and self._regex_allowed():
            self._scan_regex()
            kind = REGEX
        elif ch == "#" and start == 0 and nxt == "!":
            while self.pos < len(self.src) and self.src[self.pos] not in LINE_TERMINATORS:
                self._advance()
            kind = COMMENT
        else:
            for p in _PUNCT_BY_CHAR.get(ch, ()):
                if self.src.startswith(p, self.pos):
                    self._advance(len(p))
                    break
            else:
                raise self._error(f"unexpected character {ch!r}")
            kind = PUNCTUATOR
        return self._make(kind, start, line, col)

    def _make(self, kind, start, line, col, value=None) -> Token:
        return Token(kind, self.src[start:self.pos], line, col, start, self.pos, value=value)

    # -- scanners --------------------------------------------------------------
    def _scan_identifier(self) -> str:
        out = []
        while self.pos < len(self.src):
            ch = self.src[self.pos]
            if ch == "\\":
                if self._peek(1) != "u":
                    raise self._error("invalid escape in identifier")
                self._advance(2)
                out.append(chr(self._scan_unicode_digits()))
            elif _is_id_part(ch) or (not out and _is_id_start(ch)):
                out.append(ch)
                self._advance()
            else:
                break
        return "".join(out)

    def _scan_number(self) -> float | int:
        s = self.src
        start = self.pos
        if s[start] == "0" and self._peek(1) in "xXoObB" and self._peek(1):
            base = {"x": 16, "o": 8, "b": 2}[self._peek(1).lower()]
            self._advance(2)
            digits_start = self.pos
            while self.pos < len(s) and (s[self.pos].isalnum() or s[self.pos] == "_"):
                self._advance()
            digits = s[digits_start:self.pos].replace("_", "")
            try:
                return int(digits, base)
            except ValueError:
                raise self._error("malformed numeric literal") from None
        if s[start] == "0" and _isdec(self._peek(1)):
            # legacy octal (or decimal when an 8/9 appears)
            while self.pos < len(s) and _isdec(s[self.pos]):
                self._advance()
            digits = s[start:self.pos]
            if all(c in "01234567" for c in digits):
                return int(digits, 8)
            return int(digits)
        while self.pos < len(s) and (_isdec(s[self.pos]) or s[self.pos] == "_"):
            self._advance()
        if self._peek() == ".":
            self._advance()
            while self.pos < len(s) and (_isdec(s[self.pos]) or s[self.pos] == "_"):
                self._advance()
        if self._peek() in ("e", "E") and self._peek():
            save = (self.pos, self.line, self.col)
            self._advance()
            if self._peek() in ("+", "-") and self._peek():
                self._advance()
            if not _isdec(self._peek()):
                self.pos, self.line, self.col = save
                raise self._error("malformed exponent")
            while self.pos < len(s) and _isdec(s[self.pos]):
                self._advance()
        if self._peek() == "n":  # BigInt suffix
            text = s[start:self.pos].replace("_", "")
            self._advance()
            return int(text)
        if self.pos < len(s) and _is_id_start(s[self.pos]):
            raise self._error("identifier directly after number")
        text = s[start:self.pos].replace("_", "")
        f = float(text)
        return int(text) if text.isascii() and text.isdigit() else f

    def _scan_unicode_digits(self) -> int:
        if self._peek() == "{":
            end = self.src.find("}", self.pos)
            if end < 0:
                raise self._error("unterminated unicode escape")
            digits = self.src[self.pos + 1:end]
            self._advance(end + 1 - self.pos)
        else:
            digits = self.src[self.pos:self.pos + 4]
            if len(digits) < 4:
                raise self._error("malformed unicode escape")
            self._advance(4)
        try:
            return int(digits, 16)
        except ValueError:
            raise self._error("malformed unicode escape") from None

    def _scan_escape(self, out: list[str], template: bool = False) -> None:
        # positioned just after the backslash
        ch = self._peek()
        if not ch:
            raise self._error("unterminated escape")
        simple = {"n": "\n", "t": "\t", "r": "\r", "b": "\b", "f": "\f", "v": "\v"}
        if ch in simple:
            out.append(simple[ch])
            self._advance()
        elif ch == "x":
            digits = self.src[self.pos + 1:self.pos + 3]
            try:
                out.append(chr(int(digits, 16)))
            except ValueError:
                raise self._error("malformed hex escape") from None
            if len(digits) < 2:
                raise self._error("malformed hex escape")
            self._advance(3)
        elif ch == "u":
            self._advance()
            out.append(chr(self._scan_unicode_digits()))
        elif ch in LINE_TERMINATORS:
            self._advance()  # line continuation
        elif ch in "01234567" and not template:
            digits = ch
            self._advance()
            limit = 3 if ch in "0123" else 2
            while len(digits) < limit and self._peek() and self._peek() in "01234567":
                digits += self._peek()
                self._advance()
            out.append(chr(int(digits, 8)))
        else:
            out.append(ch)
            self._advance()

    def _scan_string(self, quote: str) -> str:
        line, col = self.line, self.col
        self._advance()
        out: list[str] = []
        while True:
            ch = self._peek()
            if not ch or ch in "\n\r":
                raise self._error("unterminated string literal", line, col)
            if ch == quote:
                self._advance()
                return _combine_surrogates("".join(out))
            if ch == "\\":
                self._advance()
                self._scan_escape(out)
            else:
                out.append(ch)
                self._advance()

    def _scan_template(self) -> list:
        """Return [("quasi", raw, cooked), ("expr", source, offset, line, col), ...]."""
        line, col = self.line, self.col
        self._advance()
        parts: list = []
        raw_start = self.pos
        cooked: list[str] = []
        while True:
            ch = self._peek()
            if not ch:
                raise self._error("unterminated template literal", line, col)
            if ch == "`":
                parts.append(("quasi", self.src[raw_start:self.pos],
                              _combine_surrogates("".join(cooked))))
                self._advance()
                return parts
            if ch == "\\":
                self._advance()
                self._scan_escape(cooked, template=True)
            elif ch == "$" and self._peek(1) == "{":
                parts.append(("quasi", self.src[raw_start:self.pos],
                              _combine_surrogates("".join(cooked))))
                self._advance(2)
                e_start, e_line, e_col = self.pos, self.line, self.col
                self._scan_substitution(line, col)
                parts.append(("expr", self.src[e_start:self.pos - 1], e_start, e_line, e_col))
                raw_start = self.pos
                cooked = []
            else:
                cooked.append(ch)
                self._advance()

    def _scan_substitution(self, line: int, col: int) -> None:
        # consumes up to and including the closing '}'
        depth = 0
        saved_last = self._last_sig
        self._last_sig = None
        while True:
            self._skip_whitespace()
            if self.pos >= len(self.src):
                raise self._error("unterminated template literal", line, col)
            tok = self._next_token()
            if tok.kind == COMMENT:
                continue
            if tok.kind == PUNCTUATOR:
                if tok.lexeme == "{":
                    depth += 1
                elif tok.lexeme == "}":
                    if depth == 0:
                        break
                    depth -= 1
            self._last_sig = tok
        self._last_sig = saved_last

    def _scan_regex(self) -> None:
        line, col = self.line, self.col
        self._advance()
        in_class = False
        while True:
            ch = self._peek()
            if not ch or ch in LINE_TERMINATORS:
                raise self._error("unterminated regular expression", line, col)
            if ch == "\\":
                self._advance()
                if not self._peek() or self._peek() in LINE_TERMINATORS:
                    raise self._error("unterminated regular expression", line, col)
                self._advance()
                continue
            if ch == "[":
                in_class = True
            elif ch == "]":
                in_class = False
            elif ch == "/" and not in_class:
                self._advance()
                break
            self._advance()
        while self.pos < len(self.src) and _is_id_part(self.src[self.pos]):
            self._advance()


def tokenize(source: SourceFile | str) -> list[Token]:
    """Tokenize source text, comments included (``kind == "Comment"``)."""
    text = source.text if isinstance(source, SourceFile) else source
    return Lexer(text).tokenize()


def code_tokens(tokens: list[Token]) -> list[Token]:
    return [t for t in tokens if t.kind != COMMENT]
