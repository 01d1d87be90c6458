"""Health-risk prediction from users' social-media text.

Stages: ``ingest`` (exports to per-user corpora), ``labels`` (survey answers
to binary outcomes), ``lexfeat`` and ``embed`` (feature families),
``select`` (Fisher ranking, K search, leave-one-out) and ``model``.
"""

from .errors import ConfigError, DomainError, InputFileError, ProviderError, RiskTextError, ValidationError

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DomainError",
    "InputFileError",
    "ProviderError",
    "RiskTextError",
    "ValidationError",
    "__version__",
]
