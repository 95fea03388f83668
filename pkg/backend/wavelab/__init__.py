# WaveLab: semiclassical rotating shallow-water laboratory
__version__ = "0.1.0"
