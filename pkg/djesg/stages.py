import logging
import time
from functools import wraps
from typing import Any, Callable, Dict

from djesg.context import _CONTEXT, Context, enter_context
from djesg.errors import EXIT_INTERNAL, EXIT_OK

Stage = Callable[[Context], int]
Layer = Callable[[Stage], Stage]
RunStage = Callable[..., int]

EXCEPTION_RESULT_CONTEXT_KEY = "__exception__"
ERROR_MESSAGE_CONTEXT_KEY = "__error_message__"

logger = logging.getLogger(__name__)


# ok_stage is a stage that succeeds without doing anything.
def ok_stage(_: Context) -> int:
    return EXIT_OK


# run_context is a decorator that enters a fresh Context holding the run config and manifest.
def run_context(
    initial_data: Callable[..., Dict[Any, Any]] = lambda **kwargs: kwargs,
) -> Callable[[Stage], RunStage]:
    def inner(func: Stage) -> RunStage:
        @wraps(func)
        def wrapper(config: Any, manifest: Any = None, **kwargs: Any) -> int:
            with enter_context(initial_data(**kwargs)):
                ctx = _CONTEXT.set_config(config)
                if manifest is not None:
                    ctx.set_manifest(manifest)
                return func(ctx)

        return wrapper

    return inner


# layers is a decorator that wraps a stage with multiple layers; the first layer is the outermost.
def layers(*outers: Layer) -> Layer:
    def inner(stage: Stage) -> Stage:
        for outer in reversed(outers):
            stage = outer(stage)

        return stage

    return inner


# into_stage wraps a stage with multiple layers.
def into_stage(*outers: Layer, stage: Stage) -> Stage:
    wrap = layers(*outers)
    return wrap(stage)


# noop_layer is a layer that does nothing.
def noop_layer(stage: Stage) -> Stage:
    return stage


# chain runs stages serially and stops at the first non-zero exit code.
def chain(*stages: Stage) -> Stage:
    def inner(ctx: Context) -> int:
        for stage in stages:
            code = stage(ctx)
            if code != EXIT_OK:
                return code

        return EXIT_OK

    return inner


# default_exception_handler logs the exception and returns its exit code.
def default_exception_handler(ctx: Context) -> int:
    exception = ctx[EXCEPTION_RESULT_CONTEXT_KEY]
    exit_code = getattr(exception, "exit_code", EXIT_INTERNAL)
    code = getattr(exception, "code", "internal_error")
    details = getattr(exception, "details", {})
    message = (
        str(exception) if exit_code != EXIT_INTERNAL else "internal error"
    )  # hide the exception message of unexpected failures
    if exit_code == EXIT_INTERNAL:
        logger.error("internal error", exc_info=exception)
    else:
        logger.error("%s (code=%s, details=%s)", message, code, details)

    ctx[ERROR_MESSAGE_CONTEXT_KEY] = message
    if ctx.manifest is not None:
        ctx.manifest.record_error(code=code, message=message, exit_code=exit_code)

    return exit_code


# exception_layer catches exceptions, stores them in the context and hands over to the handler stage.
def exception_layer(
    *outers: Layer,
    stage: Stage = default_exception_handler,
    result_ctx_key: str = EXCEPTION_RESULT_CONTEXT_KEY,
) -> Layer:
    exception_stage = into_stage(*outers, stage=stage)

    def inner(stage: Stage) -> Stage:
        @wraps(stage)
        def wrapper(ctx: Context) -> int:
            try:
                return stage(ctx)
            except Exception as e:
                ctx[result_ctx_key] = e
                return exception_stage(ctx)

        return wrapper

    return inner


# case_layer calls the alternative stage instead of the wrapped one when the condition is true.
def case_layer(
    condition: Callable[[Context], bool], *outers: Layer, stage: Stage
) -> Layer:
    condition_stage = into_stage(*outers, stage=stage)

    def inner(stage: Stage) -> Stage:
        @wraps(stage)
        def wrapper(ctx: Context) -> int:
            if condition(ctx):
                return condition_stage(ctx)

            return stage(ctx)

        return wrapper

    return inner


# timed_layer logs the stage boundaries and records its wall-clock time in the manifest.
def timed_layer(name: str) -> Layer:
    def inner(stage: Stage) -> Stage:
        @wraps(stage)
        def wrapper(ctx: Context) -> int:
            logger.info("stage %s started", name)
            started = time.perf_counter()
            try:
                return stage(ctx)
            finally:
                elapsed = time.perf_counter() - started
                if ctx.manifest is not None:
                    ctx.manifest.record_wall_clock(name, elapsed)
                logger.info("stage %s finished in %.3fs", name, elapsed)

        return wrapper

    return inner
