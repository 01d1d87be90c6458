from .cache import CachedProvider
from .features import (
    daily_embedding_features,
    gpt_features,
    gpt_riskm_features,
    gpt_riskw_features,
    join_strings_list,
)
from .providers import API_KEY_ENV, EmbeddingProvider, MockProvider, RateLimiter, RegexTokenizer, RemoteProvider, make_provider

__all__ = [
    "API_KEY_ENV",
    "CachedProvider",
    "EmbeddingProvider",
    "MockProvider",
    "RateLimiter",
    "RegexTokenizer",
    "RemoteProvider",
    "daily_embedding_features",
    "gpt_features",
    "gpt_riskm_features",
    "gpt_riskw_features",
    "join_strings_list",
    "make_provider",
]
