from collections import UserDict
from contextlib import contextmanager
from contextvars import ContextVar, Token, copy_context
from typing import TYPE_CHECKING, Any, Dict, Iterator, Optional

if TYPE_CHECKING:
    from djesg.config import RunConfig
    from djesg.manifest import RunManifest

_CONFIG_KEY: str = "__config__"
_MANIFEST_KEY: str = "__manifest__"
_RUN_CONTEXT_VAR: ContextVar[Dict[Any, Any]] = ContextVar("djesg_context")


@contextmanager
def enter_context(initial_data: Optional[Dict[Any, Any]] = None) -> Iterator[None]:
    global _RUN_CONTEXT_VAR

    if initial_data is None:
        initial_data = {}

    token: Token = _RUN_CONTEXT_VAR.set(initial_data.copy())
    try:
        yield
    finally:
        _RUN_CONTEXT_VAR.reset(token)


# Context is the per-run blackboard shared by pipeline stages; stages hand artifacts to each other through it.
class Context(UserDict):
    def __init__(self, *args: Any, **kwargs: Any) -> None:
        assert (
            not args and not kwargs
        ), "Context does not accept positional or keyword arguments"

    @property
    def config(self) -> "RunConfig":
        global _CONFIG_KEY
        return self[_CONFIG_KEY]

    def set_config(self, config: "RunConfig") -> "Context":
        global _CONFIG_KEY
        self[_CONFIG_KEY] = config
        return self

    @property
    def manifest(self) -> Optional["RunManifest"]:
        global _MANIFEST_KEY
        return self.get(_MANIFEST_KEY)

    def set_manifest(self, manifest: "RunManifest") -> "Context":
        global _MANIFEST_KEY
        self[_MANIFEST_KEY] = manifest
        return self

    @property
    def data(self) -> Dict[Any, Any]:
        global _RUN_CONTEXT_VAR
        return _RUN_CONTEXT_VAR.get()

    def exists(self) -> bool:
        global _RUN_CONTEXT_VAR
        return _RUN_CONTEXT_VAR in copy_context()

    def __repr__(self) -> str:
        return f"<{__name__}.{self.__class__.__name__} {sorted(map(str, self.data))}>"

    def __str__(self) -> str:
        return str(self.data)


_CONTEXT: Context = Context()
