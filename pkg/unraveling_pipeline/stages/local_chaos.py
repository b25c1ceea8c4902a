# ---------------------------------------------------------------------------#
#                       STAGE: LOCAL WINDOW STABILITY                         #
# ---------------------------------------------------------------------------#
import functools
import logging
from typing import Tuple

import numpy as np

from unraveling_pipeline.dist_core import SeededSampler
from unraveling_pipeline.errors import DomainError, UnsupportedConfigurationError
from unraveling_pipeline.helper import plan_blocks, run_blocks
from unraveling_pipeline.market_model import draw_type_batch, with_bounds
from unraveling_pipeline.pipeline import ExperimentContext, ExperimentStage, Tally
from unraveling_pipeline.stages.chaos import count_stable

LOCAL_BLOCK_SIZE = 5_000


def window_bounds(n: int, percentile: float, window: int) -> Tuple[int, int]:
    """Ranks of the two outer stayers: ⌊n·p⌋ and ⌊n·p⌋ + window (0 and n+1 are the support bounds)."""
    start = int(np.floor(n * percentile))
    return start, start + window


def local_block(cfg, block: int, size: int) -> int:
    """Windows, among `size` draws, whose interior couples admit a stable arrangement."""
    start, end = window_bounds(cfg.n, cfg.percentile, cfg.window)
    rng = SeededSampler(cfg.seed, block).generator()
    men, women = draw_type_batch(cfg.n, size, cfg.dist_men, cfg.dist_women, rng)
    men_ext = with_bounds(men, cfg.dist_men)[:, start:end + 1]
    women_ext = with_bounds(women, cfg.dist_women)[:, start:end + 1]
    counts = count_stable(men_ext, women_ext, cfg.dist_men, cfg.dist_women)
    return int(np.count_nonzero(counts > 0))


class LocalChaosStage(ExperimentStage):
    """
    Finite-n counterpart of π(r): the couples strictly inside a window of `window`
    ranks at `percentile`, with both window edges waiting.
    """

    def __init__(self) -> None:
        self.logger = logging.getLogger(self.__class__.__name__)

    def process(self, ctx: ExperimentContext) -> ExperimentContext:
        cfg = ctx.config
        if cfg.k != 1:
            self.logger.error("Local chaos experiment rejected: k=%d", cfg.k)
            raise UnsupportedConfigurationError(f"k: local stability is only defined for k = 1 (got k = {cfg.k})")
        start, end = window_bounds(cfg.n, cfg.percentile, cfg.window)
        if end > cfg.n + 1:
            raise DomainError(f"window: ranks {start}..{end} run past the top of a market with n = {cfg.n}")

        sizes = plan_blocks(cfg.reps, LOCAL_BLOCK_SIZE)
        stable = run_blocks(functools.partial(local_block, cfg), sizes, cfg.threads)
        ctx.tallies["local_stable"] = Tally("bernoulli", sum(stable), cfg.reps)

        self.logger.debug("Local window %d..%d blocks=%d", start, end, len(sizes))
        return ctx
