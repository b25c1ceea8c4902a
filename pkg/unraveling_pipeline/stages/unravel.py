"""
Everyone else waits; a couple unravels when both members strictly prefer to exit
together. k = 1 uses the closed-form incentive on whole blocks at once; k ≥ 2
simulates each realization's second period with `inner_samples` entrant draws.
"""
# ---------------------------------------------------------------------------#
#                       STAGE: UNRAVELING PROBES                              #
# ---------------------------------------------------------------------------#
import functools
import logging
from typing import Tuple

import numpy as np

from unraveling_pipeline.dist_core import SeededSampler
from unraveling_pipeline.errors import DomainError
from unraveling_pipeline.helper import Moments, plan_blocks, run_blocks
from unraveling_pipeline.market_model import draw_type_batch
from unraveling_pipeline.payoff_engine import full_stay_unravel_mask, full_stay_unravel_mask_mc
from unraveling_pipeline.pipeline import ExperimentContext, ExperimentStage, Tally

EXACT_BLOCK_SIZE = 10_000
SIMULATED_BLOCK_SIZE = 100


def block_size(k: int) -> int:
    return EXACT_BLOCK_SIZE if k == 1 else SIMULATED_BLOCK_SIZE


def unravel_mask_block(cfg, block: int, size: int) -> np.ndarray:
    """(size, n) unraveling indicators for block `block`."""
    rng = SeededSampler(cfg.seed, block).generator()
    men, women = draw_type_batch(cfg.n, size, cfg.dist_men, cfg.dist_women, rng)
    if cfg.k == 1:
        return full_stay_unravel_mask(men, women, cfg.dist_men, cfg.dist_women)
    rows = [
        full_stay_unravel_mask_mc(m, w, cfg.dist_men, cfg.dist_women, cfg.k, cfg.inner_samples, rng)
        for m, w in zip(men, women)
    ]
    return np.array(rows, dtype=bool).reshape(size, cfg.n)


def rank_counts_block(cfg, block: int, size: int) -> np.ndarray:
    return unravel_mask_block(cfg, block, size).sum(axis=0)


def fraction_block(cfg, block: int, size: int) -> Tuple[Moments, int]:
    fractions = unravel_mask_block(cfg, block, size).mean(axis=1)
    threshold = 1.0 / (8 * cfg.k) - cfg.epsilon
    return Moments.of(fractions), int(np.count_nonzero(fractions >= threshold))


class UnravelStage(ExperimentStage):
    """Per-rank probability that the couple unravels when all others wait."""

    def __init__(self) -> None:
        self.logger = logging.getLogger(self.__class__.__name__)

    def process(self, ctx: ExperimentContext) -> ExperimentContext:
        cfg = ctx.config
        sizes = plan_blocks(cfg.reps, block_size(cfg.k))
        per_block = run_blocks(functools.partial(rank_counts_block, cfg), sizes, cfg.threads)
        counts = np.sum(per_block, axis=0)
        for rank in cfg.probed_ranks:
            ctx.tallies[f"rank_{rank}"] = Tally("bernoulli", int(counts[rank - 1]), cfg.reps, rank=rank)

        self.logger.debug("Unravel blocks=%d ranks=%d", len(sizes), len(cfg.probed_ranks))
        return ctx


class FractionStage(ExperimentStage):
    """Share of couples that unravel simultaneously, and how often it clears 1/(8k) − ε."""

    def __init__(self) -> None:
        self.logger = logging.getLogger(self.__class__.__name__)

    def process(self, ctx: ExperimentContext) -> ExperimentContext:
        cfg = ctx.config
        if cfg.k < 1:
            self.logger.error("Fraction experiment rejected: k=%d", cfg.k)
            raise DomainError("k: the fraction bound 1/(8k) needs k >= 1")
        if cfg.n < 1:
            raise DomainError("n: the fraction of unraveling couples needs n >= 1")

        sizes = plan_blocks(cfg.reps, block_size(cfg.k))
        per_block = run_blocks(functools.partial(fraction_block, cfg), sizes, cfg.threads)
        moments = Moments()
        above = 0
        for block_moments, block_above in per_block:
            moments = moments.merge(block_moments)
            above += block_above
        ctx.tallies["mean_fraction"] = Tally("mean", trials=cfg.reps, moments=moments)
        ctx.tallies["fraction_bound"] = Tally("bernoulli", above, cfg.reps)

        self.logger.debug("Fraction blocks=%d mean=%.6f", len(sizes), moments.mean)
        return ctx
