"""Shared service package.

Import concrete services from their owner modules, for example
``services.parallel`` or ``services.artifacts``.
"""
