from django.apps import AppConfig


class SimulationsConfig(AppConfig):
    name = "apps.simulations"
    label = "simulations"
    verbose_name = "Stochastic fractional conservation law solver"
