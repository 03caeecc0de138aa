from .harness import SENTINEL, execute_candidate, main, parse_objective

__all__ = ["SENTINEL", "execute_candidate", "main", "parse_objective"]
