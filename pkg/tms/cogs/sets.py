from ..app import TMSApp
from ..cog import Cog, Context, command
from ..pipelines import run_experiment


class SetsCog(Cog):
    def __init__(self, app: TMSApp):
        super().__init__(app)
        self.app = app

    @command
    def netmeasure(self, ctx: Context) -> int:
        """M^s_delta of a digital set, optionally with its optimal cover (--cover)."""
        return run_experiment(ctx.config.merged(pipeline="netmeasure"))

    @command
    def family(self, ctx: Context) -> int:
        """Prescribed-dimension family of a digital set plus its verification report."""
        return run_experiment(ctx.config.merged(pipeline="family"))
