# ---------------------------------------------------------------------------#
#                       STAGE: CHAOS FREQUENCY                                #
# ---------------------------------------------------------------------------#
import functools
import logging

import numpy as np

from unraveling_pipeline.arrangements import IncentiveTable, count_stable_arrangements, dp_batch_size
from unraveling_pipeline.dist_core import SeededSampler
from unraveling_pipeline.errors import ResourceGuardError, UnsupportedConfigurationError
from unraveling_pipeline.helper import plan_blocks, run_blocks
from unraveling_pipeline.market_model import draw_type_batch, with_bounds
from unraveling_pipeline.pipeline import ExperimentContext, ExperimentStage, Tally

CHAOS_BLOCK_SIZE = 1_000


def count_stable(men_ext: np.ndarray, women_ext: np.ndarray, dist_men, dist_women) -> np.ndarray:
    """Stable-arrangement counts for a stack of padded realizations, in memory-sized sub-batches."""
    batch = dp_batch_size(men_ext.shape[-1] - 2)
    counts = []
    for start in range(0, men_ext.shape[0], batch):
        table = IncentiveTable.from_types(
            men_ext[start:start + batch], women_ext[start:start + batch], dist_men, dist_women
        )
        counts.append(count_stable_arrangements(table))
    return np.concatenate(counts) if counts else np.zeros(0)


def chaos_block(cfg, block: int, size: int) -> int:
    """Chaotic realizations among `size` draws of block `block`."""
    rng = SeededSampler(cfg.seed, block).generator()
    men, women = draw_type_batch(cfg.n, size, cfg.dist_men, cfg.dist_women, rng)
    counts = count_stable(
        with_bounds(men, cfg.dist_men), with_bounds(women, cfg.dist_women), cfg.dist_men, cfg.dist_women
    )
    return int(np.count_nonzero(counts == 0))


class ChaosStage(ExperimentStage):
    """Frequency of realizations with no pairwise-stable early matching (k = 1)."""

    def __init__(self) -> None:
        self.logger = logging.getLogger(self.__class__.__name__)

    def process(self, ctx: ExperimentContext) -> ExperimentContext:
        cfg = ctx.config
        if cfg.k != 1:
            self.logger.error("Chaos experiment rejected: k=%d", cfg.k)
            raise UnsupportedConfigurationError(f"k: chaos detection is only defined for k = 1 (got k = {cfg.k})")
        if cfg.n > cfg.max_n:
            self.logger.error("Chaos experiment rejected: n=%d above guard %d", cfg.n, cfg.max_n)
            raise ResourceGuardError(f"n: chaos experiments are capped at n <= {cfg.max_n} (got {cfg.n})")

        sizes = plan_blocks(cfg.reps, CHAOS_BLOCK_SIZE)
        chaotic = run_blocks(functools.partial(chaos_block, cfg), sizes, cfg.threads)
        ctx.tallies["chaos"] = Tally("bernoulli", sum(chaotic), cfg.reps)

        self.logger.debug("Chaos blocks=%d per-block=%s", len(sizes), chaotic)
        return ctx
