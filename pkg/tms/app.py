import argparse
import importlib
import inspect
import logging
import sys
from pathlib import Path
from typing import Callable, Dict, Optional, Sequence

from .cog import Cog, Context
from .config import ALIASES, ExperimentConfig
from .errors import TMSError, ValidationError

LOGGER_ = logging.getLogger(__name__)

COGS_DIR = Path(__file__).parent / "cogs"


class TMSApp:
    """Command-line application; commands live in the cogs under `tms/cogs`."""

    def __init__(self) -> None:
        self.commands: Dict[str, Callable[[Context], int]] = {}

    def add_cog(self, module_path: str) -> None:
        module = importlib.import_module(module_path)
        for _, obj in inspect.getmembers(module, inspect.isclass):
            if not issubclass(obj, Cog) or obj is Cog:
                continue
            if obj.__module__ == module.__name__:
                cog = obj(self)
                for name, fn in cog.commands.items():
                    if name in self.commands:
                        raise RuntimeError(f"command {name} is defined twice")
                    self.commands[name] = fn

    def setup_hook(self) -> None:
        for cog in sorted(COGS_DIR.glob("*.py")):
            if cog.stem.startswith("_"):
                continue
            LOGGER_.info("Loading cog %s", cog.stem)
            self.add_cog(f"tms.cogs.{cog.stem}")

    def parser(self) -> argparse.ArgumentParser:
        parser = argparse.ArgumentParser(
            prog="tms",
            allow_abbrev=False,
            description=(
                "Net measures, prescribed-dimension sets and typical multifractal"
                " measures."
            ),
        )
        parser.add_argument("command", choices=sorted(self.commands))
        parser.add_argument("op", nargs="?", default=None)
        parser.add_argument(
            "--config", default=None, help="key=value file; flags override it"
        )
        options = parser.add_argument_group("configuration keys")
        for key in ExperimentConfig.keys():
            if key == "op":
                continue
            names = [f"--{key.replace('_', '-')}"]
            aliases = [alias for alias, target in ALIASES.items() if target == key]
            names.extend(f"--{alias.replace('_', '-')}" for alias in aliases)
            options.add_argument(*names, dest=key, default=None, metavar="VALUE")
        return parser

    def context(self, args: argparse.Namespace) -> Context:
        cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
        flags = {k: getattr(args, k) for k in ExperimentConfig.keys() if k != "op"}
        given = {k: v for k, v in flags.items() if v is not None}
        overrides = ExperimentConfig.from_mapping(given)
        cfg = cfg.merged(**vars(overrides), op=args.op)
        return Context(cfg, cfg.op)

    def run(self, argv: Optional[Sequence[str]] = None) -> int:
        if not self.commands:
            self.setup_hook()
        parser = self.parser()
        try:
            args = parser.parse_args(argv)
        except SystemExit as e:
            # argparse exits 2 on usage errors and 0 after --help
            return ValidationError.exit_code if e.code else 0
        try:
            ctx = self.context(args)
        except TMSError as e:
            LOGGER_.error("bad invocation: %s", e)
            parser.print_usage()
            print(f"error: {e}", file=sys.stderr)
            return e.exit_code
        LOGGER_.info("Running command %s", args.command)
        try:
            return self.commands[args.command](ctx)
        except Exception:
            LOGGER_.exception("Command %s crashed", args.command)
            raise
