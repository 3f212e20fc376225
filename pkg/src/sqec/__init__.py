"""Surface-code workbench: unit-cell simulation, matching and neural decoders."""

__version__ = "0.1.0"
