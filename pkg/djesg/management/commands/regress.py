from djesg.management.base import PipelineCommand
from djesg.pipeline import regress_command


class Command(PipelineCommand):
    help = "Fit the ESG x Sentiment grid and write the grid, summary and figure data."
    command_name = "regress"
    stage = regress_command
