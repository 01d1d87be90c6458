"""Embedding feature families built on any provider.

``gpt``        mean embedding of token-budgeted, newline-joined message batches
``gpt_riskm``  same over risk messages only, scaled by the risk-message ratio
``gpt_riskw``  embedding of the space-joined stream of matched risk phrases
``daily_embed`` per-day embedding, averaged over days
"""

from __future__ import annotations

import numpy as np

from ..errors import DomainError, ProviderError
from ..ingest import UserCorpus
from ..lexfeat import RiskLexicon, risk_message_partition


def join_strings_list(texts, provider) -> list[list[str]]:
    """Greedily pack ``texts`` into batches whose token total fits the provider limit.

    A new batch starts exactly when adding the next text would exceed the
    limit. A text longer than the limit is first split into maximal chunks,
    which are packed like ordinary texts.
    """
    limit = provider.token_limit
    batches: list[list[str]] = []
    current: list[str] = []
    used = 0
    for text in texts:
        count = provider.count_tokens(text)
        pieces = [(text, count)] if count <= limit else [
            (p, provider.count_tokens(p)) for p in provider.split_text(text, limit)
        ]
        for piece, c in pieces:
            if current and used + c > limit:
                batches.append(current)
                current, used = [], 0
            current.append(piece)
            used += c
    if current:
        batches.append(current)
    return batches


def _mean_embedding(provider, requests: list[str], user_id) -> np.ndarray:
    vectors = []
    for b, text in enumerate(requests):
        try:
            (vec,) = provider.embed([text])
        except ProviderError as exc:
            raise ProviderError(str(exc), user_id=user_id, batch_index=b) from exc
        vectors.append(np.asarray(vec, dtype=np.float64))
    return np.mean(vectors, axis=0)


def _batched_mean(provider, texts, user_id, sep="\n") -> np.ndarray:
    requests = [sep.join(batch) for batch in join_strings_list(texts, provider)]
    if not requests:
        return np.zeros(provider.dimension)
    return _mean_embedding(provider, requests, user_id)


def _require_messages(corpus: UserCorpus):
    if corpus.n_messages == 0:
        raise DomainError(f"corpus for {corpus.user_id} is empty")


def gpt_features(corpus: UserCorpus, provider) -> np.ndarray:
    _require_messages(corpus)
    return _batched_mean(provider, corpus.replicated_texts(), corpus.user_id)


def gpt_riskw_features(corpus: UserCorpus, lexicon: RiskLexicon, provider) -> np.ndarray:
    _, _, stream = risk_message_partition(corpus, lexicon)
    if not stream:
        return np.zeros(provider.dimension)
    return _batched_mean(provider, stream, corpus.user_id, sep=" ")


def gpt_riskm_features(corpus: UserCorpus, lexicon: RiskLexicon, provider) -> np.ndarray:
    risk, ratio, _ = risk_message_partition(corpus, lexicon)
    if not risk:
        return np.zeros(provider.dimension)
    return ratio * _batched_mean(provider, corpus.replicated_texts(risk), corpus.user_id)


def daily_embedding_features(corpus: UserCorpus, provider) -> np.ndarray:
    _require_messages(corpus)
    days = [_batched_mean(provider, corpus.replicated_texts(msgs), corpus.user_id)
            for msgs in corpus.days.values()]
    return np.mean(days, axis=0)
