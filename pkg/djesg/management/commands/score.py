from djesg.management.base import PipelineCommand
from djesg.pipeline import score_command


class Command(PipelineCommand):
    help = "Score headlines with the retro and NRC families and aggregate them per firm-year."
    command_name = "score"
    stage = score_command
