"""Token-sequence layouts for space-time scanning and video/text fusion.

Space-time: each frame contributes its P spatial tokens in raster order with
the frame's cls token inserted at slot floor(P/2); frames are concatenated
in time order, giving T*(P+1) tokens. A zero-initialised per-frame temporal
embedding is added to every token of its frame.

Multimodal: video tokens V and text tokens Q, each with position and type
embeddings added, are arranged as

    L    [Q; V]          R    [V; Q]
    L+R  [Q; V; Q]       M    V[:floor(Lv/2)]; Q; V[floor(Lv/2):]
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import EmptyVideo, LayoutMismatch, ShapeMismatch, ValidationError
from .numeric import check_shape, flat_index, unravel_index


@dataclass(frozen=True)
class TokenLayout:
    """Bijection between (frame, slot) and flat positions; slot ``cls_offset`` is the cls."""

    T: int
    P: int

    def __post_init__(self):
        if self.T < 1 or self.P < 1:
            raise EmptyVideo(f"need T >= 1 and P >= 1, got T={self.T}, P={self.P}")

    @property
    def cls_offset(self) -> int:
        return self.P // 2

    @property
    def row(self) -> int:
        return self.P + 1

    @property
    def length(self) -> int:
        return self.T * self.row

    def flat(self, frame: int, slot: int) -> int:
        return flat_index((frame, slot), (self.T, self.row))

    def coords(self, index: int) -> tuple[int, int]:
        return unravel_index(index, (self.T, self.row))

    def slot_of_patch(self, patch: int) -> int:
        if not 0 <= patch < self.P:
            raise IndexError(patch)
        return patch if patch < self.cls_offset else patch + 1

    def cls_indices(self) -> np.ndarray:
        return np.array([self.flat(t, self.cls_offset) for t in range(self.T)], dtype=np.int64)

    def patch_indices(self) -> np.ndarray:
        """[T, P] flat index of every spatial token."""
        return np.array([[self.flat(t, self.slot_of_patch(p)) for p in range(self.P)]
                         for t in range(self.T)], dtype=np.int64).reshape(self.T, self.P)

    def to_dict(self) -> dict:
        return {"T": self.T, "P": self.P, "cls_offset": self.cls_offset}


@dataclass(frozen=True, eq=False)
class VideoTokens:
    frames: np.ndarray        # [T, P, D]
    cls: np.ndarray           # [D]
    temporal_pos: np.ndarray  # [T, D]

    @classmethod
    def create(cls, frames: np.ndarray, cls_token: np.ndarray) -> "VideoTokens":
        """Temporal embeddings start at zero."""
        return cls(frames, cls_token, np.zeros((frames.shape[0], frames.shape[2]), frames.dtype))


def flatten_spacetime(v: VideoTokens) -> tuple[np.ndarray, TokenLayout]:
    if v.frames.ndim != 3 or v.frames.shape[0] == 0 or v.frames.shape[1] == 0:
        raise EmptyVideo(f"frames must be [T>=1, P>=1, D], got {v.frames.shape}")
    t, p, d = v.frames.shape
    check_shape(v.cls, (d,), "cls")
    check_shape(v.temporal_pos, (t, d), "temporal_pos")
    layout = TokenLayout(t, p)
    k = layout.cls_offset
    cls_rows = np.broadcast_to(v.cls, (t, 1, d))
    rows = np.concatenate([v.frames[:, :k], cls_rows, v.frames[:, k:]], axis=1)
    rows = rows + v.temporal_pos[:, None, :]
    return rows.reshape(layout.length, d), layout


def pool_cls(seq_out: np.ndarray, layout: TokenLayout) -> np.ndarray:
    """Mean of the per-frame cls outputs."""
    if seq_out.ndim != 2 or seq_out.shape[0] != layout.length:
        raise LayoutMismatch(f"sequence of shape {seq_out.shape} does not match layout length {layout.length}")
    return seq_out[layout.cls_indices()].mean(axis=0)


# --------------------------------------------------------------------------
# Multimodal arrangements

KINDS = ("L", "R", "L+R", "M")


@dataclass(frozen=True)
class MultiModalArrangement:
    kind: str
    L_v: int
    L_q: int

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"arrangement kind must be one of {KINDS}, got {self.kind!r}")
        if self.L_v < 0 or self.L_q < 0:
            raise ValidationError("token counts must be non-negative")

    @property
    def length(self) -> int:
        return self.L_v + (2 * self.L_q if self.kind == "L+R" else self.L_q)

    def video_indices(self) -> np.ndarray:
        lv, lq = self.L_v, self.L_q
        if self.kind == "R":
            return np.arange(lv)
        if self.kind in ("L", "L+R"):
            return np.arange(lq, lq + lv)
        mid = lv // 2
        return np.concatenate([np.arange(mid), np.arange(mid + lq, lv + lq)])

    def text_indices(self) -> list[np.ndarray]:
        """One index range per text copy."""
        lv, lq = self.L_v, self.L_q
        if self.kind == "L":
            return [np.arange(lq)]
        if self.kind == "R":
            return [np.arange(lv, lv + lq)]
        if self.kind == "L+R":
            return [np.arange(lq), np.arange(lq + lv, 2 * lq + lv)]
        mid = lv // 2
        return [np.arange(mid, mid + lq)]

    def to_dict(self) -> dict:
        return asdict(self)


def embed(tokens: np.ndarray, pos: np.ndarray, type_vec: np.ndarray) -> np.ndarray:
    n, d = tokens.shape
    check_shape(pos, (n, d), "position embedding")
    check_shape(type_vec, (d,), "type embedding")
    return tokens + pos + type_vec


def arrange_multimodal(v: np.ndarray, q: np.ndarray, kind: str,
                       pos_v: np.ndarray, pos_q: np.ndarray,
                       type_v: np.ndarray, type_q: np.ndarray):
    """Embed both modalities and lay them out. Returns (sequence, arrangement)."""
    if v.ndim != 2 or q.ndim != 2 or v.shape[1] != q.shape[1]:
        raise ShapeMismatch(f"video {v.shape} and text {q.shape} must be [L, D] with equal D")
    if np.array_equal(type_v, type_q):
        raise ValidationError("video and text type embeddings must differ")
    arr = MultiModalArrangement(kind, v.shape[0], q.shape[0])
    vt = embed(v, pos_v, type_v)
    qt = embed(q, pos_q, type_q)
    out = np.empty((arr.length, v.shape[1]), dtype=np.result_type(vt, qt))
    out[arr.video_indices()] = vt
    for idx in arr.text_indices():
        out[idx] = qt
    return out, arr


def extract_video(seq_out: np.ndarray, arrangement: MultiModalArrangement) -> np.ndarray:
    if seq_out.ndim != 2 or seq_out.shape[0] != arrangement.length:
        raise LayoutMismatch(f"sequence of shape {seq_out.shape} does not match arrangement "
                             f"length {arrangement.length}")
    return seq_out[arrangement.video_indices()]


def layout_descriptor(layout: TokenLayout | None = None,
                      arrangement: MultiModalArrangement | None = None) -> dict:
    """JSON-compatible descriptor ``{T, P, cls_offset, kind, L_v, L_q}`` (absent parts are null)."""
    d = {"T": None, "P": None, "cls_offset": None, "kind": None, "L_v": None, "L_q": None}
    if layout is not None:
        d.update(layout.to_dict())
    if arrangement is not None:
        d.update(arrangement.to_dict())
    return d
