# ncdw - embeddable clinical data warehouse engine
__version__ = "0.1.0"
