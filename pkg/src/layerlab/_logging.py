import json
import logging


class JsonLineFormatter(logging.Formatter):
    """One JSON object per record: event name, logger, level and ``data`` fields."""

    def format(self, record):
        payload = {"event": record.getMessage(), "logger": record.name, "level": record.levelname}
        data = getattr(record, "data", None)
        if data:
            payload.update(data)
        return json.dumps(payload, sort_keys=True, default=float)


def configure(level=logging.INFO, stream=None):
    handler = logging.StreamHandler(stream)
    handler.setFormatter(JsonLineFormatter())
    root = logging.getLogger("layerlab")
    root.handlers[:] = [handler]
    root.setLevel(level)
    root.propagate = False
    return root
