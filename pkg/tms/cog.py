import inspect
from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable, Dict, Optional, TypeVar

from .config import ExperimentConfig

if TYPE_CHECKING:
    from .app import TMSApp

F = TypeVar("F", bound=Callable[..., int])


@dataclass(frozen=True)
class Context:
    """What a command sees: the merged configuration of this invocation."""

    config: ExperimentConfig
    op: Optional[str] = None


def command(func: F) -> F:
    """Mark a cog method as a command named after the method."""
    func.__tms_command__ = True  # type: ignore[attr-defined]
    return func


class Cog:
    def __init__(self, app: "TMSApp") -> None:
        self.app = app

    @property
    def commands(self) -> Dict[str, Callable[[Context], int]]:
        return {
            name: getattr(self, name)
            for name, fn in inspect.getmembers(type(self), inspect.isfunction)
            if getattr(fn, "__tms_command__", False)
        }
