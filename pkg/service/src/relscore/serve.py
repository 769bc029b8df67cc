"""HTTP scoring service.

Wire protocol (UTF-8 JSON):

* ``POST /score``  {"statements": [{"tokens": [str], "pos_a": int, "pos_b": int}]}
  -> {"distributions": [[f, f, f]]} in class order (forward, backward, none),
  one distribution per statement, order-preserving.
* ``POST /embed``  {"term": str, "mentions": [{"tokens": [str], "pos": int}]}
  -> {"vector": [f], "dim": int}: the term's contextual vectors, mean-pooled
  per mention over its pieces, averaged over mentions.
* ``GET /health``  -> {"status": "ok", "model": str, "dim": int}.

Errors: {"error": str, "code": int}; 409 means no model is loaded.
Requests share one model; inference is serialized into micro-batches.
"""

from __future__ import annotations

import threading

import torch
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .model import MaskedRelationClassifier, load_checkpoint
from .tokenizer import TokenizerError, WordTokenizer

MICRO_BATCH = 64


class StatementIn(BaseModel):
    tokens: list[str]
    pos_a: int
    pos_b: int


class ScoreRequest(BaseModel):
    statements: list[StatementIn]


class MentionIn(BaseModel):
    tokens: list[str]
    pos: int


class EmbedRequest(BaseModel):
    term: str
    mentions: list[MentionIn] = Field(default_factory=list)


class ModelRuntime:
    """A loaded model plus the lock serializing inference."""

    def __init__(self, model: MaskedRelationClassifier, tokenizer: WordTokenizer, name: str):
        self.model = model.eval()
        self.tokenizer = tokenizer
        self.name = name
        self.lock = threading.Lock()

    @classmethod
    def from_checkpoint(cls, path: str) -> "ModelRuntime":
        model, vocab, _ = load_checkpoint(path)
        return cls(model, WordTokenizer(vocab), name=path)

    def score(self, statements: list[StatementIn]) -> list[list[float]]:
        from .data import collate

        out: list[list[float]] = []
        with self.lock, torch.no_grad():
            for start in range(0, len(statements), MICRO_BATCH):
                chunk = statements[start : start + MICRO_BATCH]
                encoded = [
                    self.tokenizer.encode_statement(
                        s.tokens, s.pos_a, s.pos_b, self.model.config.max_len
                    )
                    for s in chunk
                ]
                ids, mask_a, mask_b, padding = collate(encoded, self.tokenizer.pad_id)
                probs = torch.softmax(self.model(ids, mask_a, mask_b, padding), dim=1)
                out.extend(probs.tolist())
        return out

    def embed(self, term: str, mentions: list[MentionIn]) -> list[float]:
        max_len = self.model.config.max_len
        vectors = []
        with self.lock, torch.no_grad():
            for mention in mentions:
                if not 0 <= mention.pos < len(mention.tokens):
                    raise TokenizerError(f"mention position {mention.pos} out of range")
                ids, spans = self.tokenizer.encode_tokens(mention.tokens)
                span = spans[mention.pos]
                if span[-1] >= max_len:
                    # keep the mention in the window by trailing truncation
                    shift = span[-1] - max_len + 1
                    ids = ids[shift : shift + max_len]
                    span = [p - shift for p in span]
                ids_t = torch.tensor([ids[:max_len]], dtype=torch.long)
                padding = torch.zeros_like(ids_t, dtype=torch.bool)
                hidden = self.model.contextualize(ids_t, padding)[0]
                vectors.append(hidden[span].mean(dim=0))
        return torch.stack(vectors).mean(dim=0).tolist()


def _error(code: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=code, content={"error": message, "code": code})


def create_app(runtime: ModelRuntime | None = None) -> FastAPI:
    app = FastAPI(title="relscore")
    app.state.runtime = runtime

    @app.exception_handler(Exception)
    async def on_error(request: Request, exc: Exception):  # pragma: no cover
        return _error(500, str(exc))

    @app.get("/health")
    def health():
        runtime = app.state.runtime
        if runtime is None:
            return _error(409, "model not loaded")
        return {
            "status": "ok",
            "model": runtime.name,
            "dim": runtime.model.config.hidden,
        }

    @app.post("/score")
    def score(request: ScoreRequest):
        runtime = app.state.runtime
        if runtime is None:
            return _error(409, "model not loaded")
        try:
            return {"distributions": runtime.score(request.statements)}
        except TokenizerError as exc:
            return _error(400, str(exc))

    @app.post("/embed")
    def embed(request: EmbedRequest):
        runtime = app.state.runtime
        if runtime is None:
            return _error(409, "model not loaded")
        if not request.mentions:
            return _error(400, "at least one mention is required")
        try:
            vector = runtime.embed(request.term, request.mentions)
        except TokenizerError as exc:
            return _error(400, str(exc))
        return {"vector": vector, "dim": len(vector)}

    return app
