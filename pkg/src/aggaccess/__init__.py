"""Direct access to the answers of aggregate and semiring-annotated conjunctive queries."""

from .access import LexIndex, MonotonePair, build_count_product, build_lex
from .errors import AggAccessError
from .model import (AnnotatedDatabase, Query, annotate_database, database_from,
                    parse_query, pretty_print)
from .oracle import brute_force
from .planner import Certificate, Engine, Profile, classify, prepare, profile_of
from .semiring import (AvgPair, Counting, MaxTropical, MinTropical, Numeric,
                       SetSemiring, instantiate)

__all__ = [
    "AggAccessError", "AnnotatedDatabase", "AvgPair", "Certificate", "Counting",
    "Engine", "LexIndex", "MaxTropical", "MinTropical", "MonotonePair", "Numeric",
    "Profile", "Query", "SetSemiring", "annotate_database", "brute_force",
    "build_count_product", "build_lex", "classify", "database_from", "instantiate",
    "parse_query", "prepare", "pretty_print", "profile_of",
]
