"""Textual inversion: captioning, source parsing, and knowledge parsing."""

from .backends import (
    CaptionerSpec,
    HttpCaptioner,
    HttpChatBackend,
    LlmBackendSpec,
    MockCorpusCaptioner,
    RuleLlm,
    TokenBucket,
    make_captioner,
    make_llm_backend,
)
from .inversion import (
    Caption,
    KnowledgeCard,
    ParsedSourceList,
    caption_audio,
    parse_knowledge,
    parse_sources,
    properties_mentioned,
    token_count,
)
from .matching import (
    NgramCountEmbedder,
    match_sources_to_labels,
    text_similarity,
)
from .prompts import Exemplar, FewShotPrompt, build_fewshot_prompt

__all__ = [
    "Caption",
    "CaptionerSpec",
    "Exemplar",
    "FewShotPrompt",
    "HttpCaptioner",
    "HttpChatBackend",
    "KnowledgeCard",
    "LlmBackendSpec",
    "MockCorpusCaptioner",
    "NgramCountEmbedder",
    "ParsedSourceList",
    "RuleLlm",
    "TokenBucket",
    "build_fewshot_prompt",
    "caption_audio",
    "make_captioner",
    "make_llm_backend",
    "match_sources_to_labels",
    "parse_knowledge",
    "parse_sources",
    "properties_mentioned",
    "text_similarity",
    "token_count",
]
