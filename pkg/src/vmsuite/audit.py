"""Parameter audit: block-comparison ratios and the temporal-module budget."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

from .blocks import build_block, count_params
from .config import BlockConfig
from .errors import RatioMismatch

# (static, dynamic) relative to a Mamba block of the same (D, E, N, conv width)
EXPECTED_RATIOS = {
    "mamba": (Fraction(1), Fraction(1)),
    "vim": (Fraction(1), Fraction(2)),
    "dbm": (Fraction(1), Fraction(1)),
}


@dataclass
class AuditRow:
    config: BlockConfig
    static: int
    dynamic: int
    bias: int
    static_ratio: Fraction
    dynamic_ratio: Fraction

    @property
    def ok(self) -> bool:
        return (self.static_ratio, self.dynamic_ratio) == EXPECTED_RATIOS[self.config.type]


def audit_block(cfg: BlockConfig) -> AuditRow:
    counts = count_params(build_block(cfg))
    base = count_params(build_block(BlockConfig("mamba", cfg.D, cfg.E, cfg.N, cfg.conv_width, cfg.seed)))
    return AuditRow(cfg, counts.static, counts.dynamic, counts.bias,
                    Fraction(counts.static, base.static), Fraction(counts.dynamic, base.dynamic))


def attention_slot_params(width: int) -> int:
    """Q, K, V and output projections of one self-attention layer (no biases)."""
    return 4 * width * width


@dataclass
class TemporalBudget:
    width: int
    expand: int
    matrix_weights: int   # in/out projections + delta projections + conv kernels
    state_weights: int    # a_log, B/C projections, skip: O(width * N)
    bias: int
    attention: int

    @property
    def limit(self) -> float:
        """3.25 C^2 + 8 C: the quadratic budget plus two width-4 conv kernels."""
        return 3.25 * self.width ** 2 + 8 * self.width

    @property
    def within_limit(self) -> bool:
        return self.matrix_weights <= self.limit

    @property
    def matrix_per_c2(self) -> float:
        return self.matrix_weights / self.width ** 2


def temporal_budget(width: int, expand: int = 1, d_state: int = 16, conv_width: int = 4) -> TemporalBudget:
    """Weight budget of a ViM block used as a temporal module of width C."""
    counts = count_params(build_block(BlockConfig("vim", width, expand, d_state, conv_width)))
    return TemporalBudget(width, expand, counts.matrix_budget, counts.by_role.get("state", 0),
                          counts.bias, attention_slot_params(width))


def _pct(r: Fraction) -> str:
    return f"{float(r) * 100:.0f}%"


def param_audit(configs: Iterable[BlockConfig], widths: Iterable[int] = (64, 256)) -> tuple[list[str], list[AuditRow]]:
    """Build the report lines; raise :class:`RatioMismatch` if any ratio is off."""
    rows = [audit_block(c) for c in configs]
    lines = ["block  D    E  N   static    dynamic   bias    sta/mamba  dyn/mamba  status"]
    for r in rows:
        c = r.config
        lines.append(f"{c.type:<6} {c.D:<4} {c.E:<2} {c.N:<3} {r.static:<9} {r.dynamic:<9} {r.bias:<7} "
                     f"{_pct(r.static_ratio):<10} {_pct(r.dynamic_ratio):<10} {'ok' if r.ok else 'MISMATCH'}")
    lines.append("")
    lines.append("temporal module (ViM as temporal adapter) vs self-attention slot, biases excluded")
    lines.append("(E=2 rows are the standard block, listed for reference only)")
    lines.append("C     E  matrix_weights  3.25C^2+8C   attention(4C^2)  state_terms  within")
    for c in widths:
        for e in (1, 2):
            b = temporal_budget(c, e)
            verdict = ("yes" if b.within_limit else "no") if e == 1 else "n/a"
            lines.append(f"{c:<5} {e:<2} {b.matrix_weights:<15} {b.limit:<12.0f} {b.attention:<16} "
                         f"{b.state_weights:<12} {verdict:<6} ({b.matrix_per_c2:.3f} C^2)")
    bad = [r for r in rows if not r.ok]
    if bad:
        detail = "; ".join(
            f"{r.config.type}(D={r.config.D},E={r.config.E}) expected "
            f"{tuple(_pct(x) for x in EXPECTED_RATIOS[r.config.type])}, got "
            f"{(_pct(r.static_ratio), _pct(r.dynamic_ratio))}" for r in bad)
        raise RatioMismatch(detail)
    return lines, rows


def default_configs() -> list[BlockConfig]:
    return [BlockConfig(kind, d, e) for d in (32, 64, 128) for e in (1, 2)
            for kind in ("mamba", "vim", "dbm") if (d * e) % 2 == 0]
