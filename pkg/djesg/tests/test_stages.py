from django.test import SimpleTestCase

from djesg.context import _CONTEXT, Context
from djesg.errors import EXIT_CONFIG, EXIT_DATA, EXIT_INTERNAL, EXIT_OK, ConfigError, DataError
from djesg.manifest import RunManifest
from djesg.stages import (
    ERROR_MESSAGE_CONTEXT_KEY,
    case_layer,
    chain,
    exception_layer,
    layers,
    noop_layer,
    ok_stage,
    run_context,
    timed_layer,
)


def manifest():
    return RunManifest(command="test", config_hash="0" * 64, seed=0)


def failing(error):
    def stage(ctx: Context) -> int:
        raise error

    return stage


def recording(name, code=EXIT_OK):
    def stage(ctx: Context) -> int:
        ctx.setdefault("calls", []).append(name)
        return code

    return stage


class ContextTestCase(SimpleTestCase):
    def test_run_context(self):
        seen = {}

        @run_context()
        def stage(ctx: Context) -> int:
            seen["config"] = ctx.config
            seen["manifest"] = ctx.manifest
            seen["extra"] = ctx["extra"]
            return EXIT_OK

        run = manifest()
        self.assertEqual(stage({"seed": 1}, manifest=run, extra=5), EXIT_OK)
        self.assertEqual(seen, {"config": {"seed": 1}, "manifest": run, "extra": 5})
        self.assertFalse(_CONTEXT.exists())

    def test_context_rejects_arguments(self):
        with self.assertRaises(AssertionError):
            Context(a=1)


class ExceptionLayerTestCase(SimpleTestCase):
    def run_stage(self, stage, run=None):
        return run_context()(layers(exception_layer())(stage))(None, manifest=run)

    def test_domain_errors_map_to_exit_codes(self):
        run = manifest()
        with self.assertLogs("djesg.stages", level="ERROR"):
            self.assertEqual(self.run_stage(failing(DataError("bad rows", code="bad_rows")), run), EXIT_DATA)
            self.assertEqual(self.run_stage(failing(ConfigError("bad config")), run), EXIT_CONFIG)
        self.assertEqual(
            run.errors,
            [
                {"code": "bad_rows", "message": "bad rows", "exit_code": EXIT_DATA},
                {"code": "invalid_config", "message": "bad config", "exit_code": EXIT_CONFIG},
            ],
        )

    def test_unexpected_errors_are_hidden(self):
        run = manifest()
        with self.assertLogs("djesg.stages", level="ERROR"):
            self.assertEqual(self.run_stage(failing(KeyError("secret")), run), EXIT_INTERNAL)
        self.assertEqual(run.errors[0]["message"], "internal error")
        self.assertEqual(run.errors[0]["code"], "internal_error")

    def test_custom_handler(self):
        def handler(ctx: Context) -> int:
            ctx[ERROR_MESSAGE_CONTEXT_KEY] = "handled"
            return 42

        wrapped = run_context()(layers(exception_layer(stage=handler))(failing(DataError("x"))))
        self.assertEqual(wrapped(None), 42)


class ComposeTestCase(SimpleTestCase):
    def test_chain_stops_at_first_failure(self):
        calls = []

        @run_context()
        def stage(ctx: Context) -> int:
            code = chain(recording("a"), recording("b", EXIT_DATA), recording("c"))(ctx)
            calls.extend(ctx["calls"])
            return code

        self.assertEqual(stage(None), EXIT_DATA)
        self.assertEqual(calls, ["a", "b"])

    def test_case_layer(self):
        def run(flag):
            @run_context()
            def stage(ctx: Context) -> int:
                return layers(case_layer(lambda c: flag, stage=ok_stage))(recording("main", EXIT_DATA))(ctx)

            return stage(None)

        self.assertEqual(run(True), EXIT_OK)
        self.assertEqual(run(False), EXIT_DATA)

    def test_layers_order(self):
        order = []

        def tag(name):
            def layer(stage):
                def wrapper(ctx):
                    order.append(name)
                    return stage(ctx)

                return wrapper

            return layer

        run_context()(layers(tag("outer"), noop_layer, tag("inner"))(ok_stage))(None)
        self.assertEqual(order, ["outer", "inner"])

    def test_timed_layer_records_wall_clock(self):
        run = manifest()
        with self.assertLogs("djesg.stages", level="INFO") as logs:
            code = run_context()(layers(timed_layer("score"))(ok_stage))(None, manifest=run)
        self.assertEqual(code, EXIT_OK)
        self.assertIn("score", run.wall_clock)
        self.assertGreaterEqual(run.wall_clock["score"], 0.0)
        self.assertIn("INFO:djesg.stages:stage score started", logs.output)

    def test_timed_layer_records_failures_too(self):
        run = manifest()
        with self.assertRaises(DataError):
            run_context()(layers(timed_layer("panel"))(failing(DataError("x"))))(None, manifest=run)
        self.assertIn("panel", run.wall_clock)
