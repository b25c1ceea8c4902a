# ---------------------------------------------------------------------------#
#                       STAGE: AGGREGATION                                    #
# ---------------------------------------------------------------------------#
import logging

from unraveling_pipeline.helper import binomial_se
from unraveling_pipeline.pipeline import Estimate, ExperimentContext, ExperimentStage


class AggregationStage(ExperimentStage):
    """Turns every tally into an estimate with its standard error."""

    def __init__(self) -> None:
        self.logger = logging.getLogger(self.__class__.__name__)

    def process(self, ctx: ExperimentContext) -> ExperimentContext:
        for label, tally in ctx.tallies.items():
            if tally.kind == "bernoulli":
                mean = tally.successes / tally.trials if tally.trials else 0.0
                se = binomial_se(tally.successes, tally.trials)
            elif tally.kind == "mean":
                mean, se = tally.moments.mean, tally.moments.std_error
            else:
                self.logger.error("Unknown tally kind %r for %s", tally.kind, label)
                raise ValueError(f"unknown tally kind {tally.kind!r}")
            ctx.estimates[label] = Estimate(label, float(mean), float(se), tally.trials, tally.rank)
        return ctx
