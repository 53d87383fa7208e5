from djesg.management.base import PipelineCommand
from djesg.pipeline import retrofit_command


class Command(PipelineCommand):
    help = "Retrofit the eight emotion vectors toward their synonyms and write the table in GloVe format."
    command_name = "retrofit"
    stage = retrofit_command
