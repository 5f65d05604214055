from ..app import TMSApp
from ..cog import Cog, Context, command
from ..pipelines import run_experiment


class ExperimentCog(Cog):
    def __init__(self, app: TMSApp):
        super().__init__(app)
        self.app = app

    @command
    def acceptance(self, ctx: Context) -> int:
        """Acceptance suite; the op is `all` or a comma list of criterion numbers."""
        return run_experiment(ctx.config.merged(pipeline="acceptance"))

    @command
    def run(self, ctx: Context) -> int:
        """Whatever pipeline the configuration names."""
        return run_experiment(ctx.config)
