"""Threshold-semantics pipeline for gradable adjectives.

Candidate Church parses are scored by a language-model backend, tempered
into distributions over the threshold grid, and compared with human
responses; an interpreter and an RSA model provide independent references.
"""

__version__ = "0.1.0"
