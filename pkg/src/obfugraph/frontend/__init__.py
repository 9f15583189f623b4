from .estree import FormatError, export_estree, ingest_estree
from .lexer import LexError, SourceFile, Token, code_tokens, tokenize
from .nodes import Ast, AstNode, KIND_INDEX, NODE_KINDS, VOCAB_VERSION, fields_of, make, structure
from .parser import ParseError, parse
from .printer import print_code
from .stats import AstStats, ast_stats

__all__ = [
    "Ast", "AstNode", "AstStats", "FormatError", "KIND_INDEX", "LexError",
    "NODE_KINDS", "ParseError", "SourceFile", "Token", "VOCAB_VERSION",
    "ast_stats", "code_tokens", "export_estree", "fields_of", "ingest_estree",
    "make", "parse", "print_code", "structure", "tokenize",
]
