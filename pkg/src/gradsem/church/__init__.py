"""Church-subset interpreter: lexer, parser, evaluator and rejection queries."""

from .evaluator import Environment, EvalError, World, evaluate, global_environment
from .inference import (
    ConditionTooRestrictive,
    PosteriorSamples,
    WorldModel,
    asset_text,
    recheck_conditions,
    rejection_query,
    run_match_query,
)
from .lexer import LexError, Token, tokenize
from .sexpr import ParseError, Quote, String, Symbol, parse, parse_one, parse_text, to_source

__all__ = [
    "ConditionTooRestrictive", "Environment", "EvalError", "LexError", "ParseError",
    "PosteriorSamples", "Quote", "String", "Symbol", "Token", "World", "WorldModel",
    "asset_text", "evaluate", "global_environment", "parse", "parse_one", "parse_text",
    "recheck_conditions", "rejection_query", "run_match_query", "to_source", "tokenize",
]
