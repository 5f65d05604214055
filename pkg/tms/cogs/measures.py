from ..app import TMSApp
from ..cog import Cog, Context, command
from ..pipelines import run_experiment


class MeasuresCog(Cog):
    def __init__(self, app: TMSApp):
        super().__init__(app)
        self.app = app

    @command
    def construct(self, ctx: Context) -> int:
        """prop41 | spray | mixture | blend | perturbed | segment | ulm | selfsimilar"""
        return run_experiment(ctx.config.merged(pipeline="construct"))

    @command
    def analyze(self, ctx: Context) -> int:
        """localdim | levelset | spectrum | lq | legendre | reference | boxdim"""
        return run_experiment(ctx.config.merged(pipeline="analyze"))

    @command
    def dist(self, ctx: Context) -> int:
        """fm | probe | frontier"""
        return run_experiment(ctx.config.merged(pipeline="dist"))
