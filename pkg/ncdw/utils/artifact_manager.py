import hashlib
import logging
import os
from pathlib import Path

from ncdw.core.errors import StorageError, UsageError

logger = logging.getLogger(__name__)

CHECKSUMS_FILE = "CHECKSUMS"


class ArtifactManager:
    """
    Manages the named output files of a run.

    Every artifact is written below one output folder. Writes go through a
    temporary file and a rename, so a reader never sees half a file.
    """
    def __init__(self, out_dir, names=None):
        self.out_dir = Path(out_dir)
        # Known artifact names -> relative file name
        self.names = dict(names or {})
        # Written artifacts -> absolute path
        self.written = {}
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise StorageError(f"cannot create output folder {self.out_dir}: {e}") from e

    def register(self, name, file_name):
        """Declare an artifact so it can be written by name"""
        self.names[name] = file_name

    def path(self, name):
        """Absolute path of a registered artifact, confined to the output folder"""
        if name not in self.names:
            raise UsageError(f"unknown artifact '{name}'")
        target = (self.out_dir / self.names[name]).resolve()
        root = self.out_dir.resolve()
        if target != root and root not in target.parents:
            raise UsageError(f"artifact '{name}' would be written outside {self.out_dir}")
        return target

    def write(self, name, content):
        """Write text or bytes to a registered artifact"""
        target = self.path(name)
        data = content.encode("utf-8") if isinstance(content, str) else bytes(content)
        tmp = target.with_name(f".{target.name}.tmp")
        try:
            target.parent.mkdir(parents=True, exist_ok=True)
            with open(tmp, "wb") as handle:
                handle.write(data)
                handle.flush()
                os.fsync(handle.fileno())
            os.replace(tmp, target)
        except OSError as e:
            tmp.unlink(missing_ok=True)
            raise StorageError(f"cannot write {target}: {e}") from e
        self.written[name] = target
        logger.debug("wrote %s (%d bytes)", target, len(data))
        return target

    def write_frame(self, name, frame, sep=",", float_format="%.6g"):
        """Write a DataFrame as delimited text"""
        return self.write(name, frame.to_csv(index=False, sep=sep, na_rep="", lineterminator="\n",
                                             float_format=float_format))

    def get(self, name):
        if name in self.written:
            return self.written[name]
        logger.warning("artifact '%s' was not written", name)
        return None

    def missing(self):
        """Registered names that were never written"""
        return sorted(name for name in self.names if name not in self.written)

    def write_checksums(self):
        """Write sha256 sums of every written artifact, sorted by file name"""
        lines = []
        for target in sorted(self.written.values(), key=lambda p: p.relative_to(self.out_dir.resolve()).as_posix()):
            digest = hashlib.sha256(target.read_bytes()).hexdigest()
            lines.append(f"{digest}  {target.relative_to(self.out_dir.resolve()).as_posix()}\n")
        self.register(CHECKSUMS_FILE, CHECKSUMS_FILE)
        return self.write(CHECKSUMS_FILE, "".join(lines))
