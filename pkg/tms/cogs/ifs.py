from ..app import TMSApp
from ..cog import Cog, Context, command
from ..pipelines import run_experiment


class IFSCog(Cog):
    def __init__(self, app: TMSApp):
        super().__init__(app)
        self.app = app

    @command
    def ifs(self, ctx: Context) -> int:
        """dim | lambda | f | g | raster | family | codes | point"""
        return run_experiment(ctx.config.merged(pipeline="ifs"))
