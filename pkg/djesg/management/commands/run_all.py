from djesg.management.base import PipelineCommand
from djesg.pipeline import run_all_command


class Command(PipelineCommand):
    help = "Run retrofit, score, panel and regress in order from one config file."
    command_name = "run-all"
    stage = run_all_command
