"""Word-level tokenizer with underscore-piece fallback and pair masking.

Statements arrive pre-tokenized (whitespace tokens, phrases joined by
underscores).  Known tokens map to single ids; unknown phrases fall back to
their underscore pieces, and unknown pieces to [UNK].  The two target terms
of a statement are always collapsed to one [MASK] each, no matter how many
pieces they would otherwise produce.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

PAD, UNK, MASK = "[PAD]", "[UNK]", "[MASK]"
SPECIALS = (PAD, UNK, MASK)


class TokenizerError(ValueError):
    pass


@dataclass(frozen=True)
class EncodedStatement:
    """A masked pair statement ready for the encoder.

    ``mask_a``/``mask_b`` are the positions of the masks standing in for
    the statement's first and second term; ``reversed_pair`` records
    whether the pair order was flipped relative to sentence order.
    """

    ids: tuple[int, ...]
    mask_a: int
    mask_b: int
    reversed_pair: bool


class WordTokenizer:
    def __init__(self, vocab: Sequence[str]):
        self.id_to_token = list(SPECIALS) + [
            t for t in vocab if t not in SPECIALS
        ]
        self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}
        self.pad_id = self.token_to_id[PAD]
        self.unk_id = self.token_to_id[UNK]
        self.mask_id = self.token_to_id[MASK]

    @classmethod
    def build(cls, token_streams: Iterable[Sequence[str]]) -> "WordTokenizer":
        """Vocabulary from whole tokens plus their underscore pieces."""
        seen: dict[str, None] = {}
        for tokens in token_streams:
            for token in tokens:
                token = token.lower()
                seen.setdefault(token, None)
                if "_" in token:
                    for piece in token.split("_"):
                        if piece:
                            seen.setdefault(piece, None)
        return cls(list(seen))

    @property
    def vocab_size(self) -> int:
        return len(self.id_to_token)

    def pieces(self, token: str) -> list[int]:
        token = token.lower()
        if token in self.token_to_id:
            return [self.token_to_id[token]]
        if "_" in token:
            return [
                self.token_to_id.get(piece, self.unk_id)
                for piece in token.split("_")
                if piece
            ] or [self.unk_id]
        return [self.unk_id]

    def encode_tokens(self, tokens: Sequence[str]) -> tuple[list[int], list[list[int]]]:
        """Ids plus, per input token, the positions it occupies."""
        ids: list[int] = []
        spans: list[list[int]] = []
        for token in tokens:
            piece_ids = self.pieces(token)
            spans.append(list(range(len(ids), len(ids) + len(piece_ids))))
            ids.extend(piece_ids)
        return ids, spans

    def encode_statement(
        self, tokens: Sequence[str], pos_a: int, pos_b: int, max_len: int
    ) -> EncodedStatement:
        """Mask the pair and truncate context symmetrically around it.

        Both terms collapse to exactly one [MASK] each.  If the masked span
        between the pair cannot fit in ``max_len`` even with all outside
        context dropped, the statement is rejected.
        """
        if pos_a == pos_b or not (0 <= pos_a < len(tokens)) or not (0 <= pos_b < len(tokens)):
            raise TokenizerError(f"invalid pair positions ({pos_a}, {pos_b})")
        ids: list[int] = []
        token_pos: dict[int, int] = {}
        for i, token in enumerate(tokens):
            if i == pos_a or i == pos_b:
                token_pos[i] = len(ids)
                ids.append(self.mask_id)
            else:
                ids.extend(self.pieces(token))
        mask_a, mask_b = token_pos[pos_a], token_pos[pos_b]
        if len(ids) > max_len:
            lo, hi = min(mask_a, mask_b), max(mask_a, mask_b)
            inner = hi - lo + 1
            if inner > max_len:
                raise TokenizerError(
                    f"pair span of {inner} ids exceeds the model maximum {max_len}"
                )
            budget = max_len - inner
            left = min(lo, budget // 2)
            right = min(len(ids) - hi - 1, budget - left)
            left = min(lo, budget - right)  # hand unused right budget back
            start = lo - left
            ids = ids[start : hi + right + 1]
            mask_a -= start
            mask_b -= start
        return EncodedStatement(tuple(ids), mask_a, mask_b, reversed_pair=pos_a > pos_b)
