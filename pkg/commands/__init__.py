from . import accept, pipelines, validate

# Order of the subcommands in --help
COMMANDS = (pipelines, validate, accept)

__all__ = ["COMMANDS", "accept", "pipelines", "validate"]
