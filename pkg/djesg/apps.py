from django.apps import AppConfig


class EsgSentimentConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "djesg"
    verbose_name = "ESG x emotion sentiment"
