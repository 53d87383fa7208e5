from djesg.management.base import PipelineCommand
from djesg.pipeline import panel_command


class Command(PipelineCommand):
    help = "Join ESG, sentiment and returns, then drop, impute and normalize the panel."
    command_name = "panel"
    stage = panel_command
