"""Text output targets: a filesystem path or an already open file."""

from contextlib import contextmanager


@contextmanager
def text_output(target):
    """Yield a writable text stream for ``target`` (path or file-like object)."""
    if hasattr(target, "write"):
        yield target
    else:
        with open(target, "w", newline="") as fh:
            yield fh
