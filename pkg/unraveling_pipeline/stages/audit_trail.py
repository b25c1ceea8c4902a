# ---------------------------------------------------------------------------#
#                       STAGE: AUDIT / RUN MANIFEST                           #
# ---------------------------------------------------------------------------#
import logging
import time
from dataclasses import asdict

from unraveling_pipeline import __version__
from unraveling_pipeline.helper import _stable_digest, _stable_run_id
from unraveling_pipeline.pipeline import ExperimentContext, ExperimentStage, load_runtime_config


class AuditStage(ExperimentStage):
    """Adds the run manifest to ctx.metadata."""

    def __init__(self) -> None:
        self.logger = logging.getLogger(self.__class__.__name__)

    def process(self, ctx: ExperimentContext) -> ExperimentContext:
        ctx.wall_time = time.perf_counter() - ctx.started_at
        estimates = {label: asdict(e) for label, e in ctx.estimates.items()}
        config = ctx.config.to_dict()
        ctx.metadata["manifest"] = {
            "tool": "unraveling_pipeline",
            "version": __version__,
            "run_id": _stable_run_id(ctx.config.seed, ctx.experiment),
            "experiment": ctx.experiment,
            "config": config,
            "runtime": load_runtime_config(),
            # worker count never changes the numbers, so it stays out of the digest
            "digest": _stable_digest({"config": {k: v for k, v in config.items() if k != "threads"}, "estimates": estimates}),
            "wall_time": round(ctx.wall_time, 6),
        }
        # Inline log (counts and digest only, never type lists)
        self.logger.info(
            "Experiment complete | %s | n=%d | k=%d | reps=%d | estimates=%d | digest=%s | %.2fs",
            ctx.experiment,
            ctx.config.n,
            ctx.config.k,
            ctx.config.reps,
            len(ctx.estimates),
            ctx.metadata["manifest"]["digest"],
            ctx.wall_time,
        )
        return ctx
