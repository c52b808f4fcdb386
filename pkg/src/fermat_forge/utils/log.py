import logging
import sys

from fermat_forge.utils import bold, gray, red, yellow

_LEVEL_STYLE = {
    logging.DEBUG: gray,
    logging.INFO: lambda x: x,
    logging.WARNING: yellow,
    logging.ERROR: red,
    logging.CRITICAL: lambda x: bold(red(x)),
}


class ForgeFormatter(logging.Formatter):
    """Colour the message by level; the logger name is dimmed in front."""

    def __init__(self, color: bool = True):
        super().__init__()
        self.color = color

    def format(self, record: logging.LogRecord) -> str:
        message = record.getMessage()
        if not self.color:
            return f"[{record.levelname.lower()}] {record.name}: {message}"
        style = _LEVEL_STYLE.get(record.levelno, lambda x: x)
        return f"{gray(record.name)} {style(message)}"


def configure(level: int = logging.INFO, color: bool | None = None) -> None:
    """Route the package's logs to stderr (stdout is reserved for reports)."""
    root = logging.getLogger("fermat_forge")
    root.handlers.clear()
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(ForgeFormatter(sys.stderr.isatty() if color is None else color))
    root.addHandler(handler)
    root.setLevel(level)
    root.propagate = False


def get_logger(name: str) -> logging.Logger:
    return logging.getLogger(name if name.startswith("fermat_forge") else f"fermat_forge.{name}")
