"""Model parameters, spiking rates and the regime classifier.

Import concrete names from their owner modules, for example
``model.params`` or ``model.regime``.
"""
