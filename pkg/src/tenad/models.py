"""Hard-label black-box classifiers.

Every model exposes only ``predict(x) -> int`` plus a query counter. Scores
never leave the model.
"""
from __future__ import annotations

import os
import queue
import shlex
import subprocess
import tempfile
import threading

import numpy as np

from .io import write_ten4
from .tensor import as_tensor4, frobenius_norm


class ModelUnavailable(RuntimeError):
    """The external model died, timed out or replied with garbage."""

    def __init__(self, message, query_count):
        super().__init__(f"{message} (after {query_count} queries)")
        self.query_count = query_count


class BlackBoxModel:
    """Base class: subclasses implement ``_label``."""

    def __init__(self, input_dims, n_classes):
        self.input_dims = tuple(int(d) for d in input_dims)
        self.n_classes = int(n_classes)
        self.query_count = 0

    def predict(self, x) -> int:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != self.input_dims:
            raise ValueError(f"input shape {x.shape} != model dims {self.input_dims}")
        label = self._label(x)
        self.query_count += 1
        return label

    def _label(self, x) -> int:
        raise NotImplementedError

    def spawn(self) -> "BlackBoxModel":
        """Same classifier, fresh query counter."""
        raise NotImplementedError

    def close(self):
        pass


class LinearThresholdModel(BlackBoxModel):
    """Bands over the score ``<weight, x>``.

    Class k holds scores in ``(t[k-1], t[k]]``; a score sitting exactly on a
    threshold goes to the lower class.
    """

    def __init__(self, weight, thresholds):
        self.weight = as_tensor4(weight, "weight")
        t = np.atleast_1d(np.asarray(thresholds, dtype=np.float64))
        if t.size == 0 or not np.all(np.isfinite(t)) or np.any(np.diff(t) <= 0):
            raise ValueError("thresholds must be finite and strictly increasing")
        self.thresholds = t
        super().__init__(self.weight.shape, t.size + 1)

    def score(self, x) -> float:
        return float(np.vdot(self.weight, x))

    def _label(self, x):
        return int(np.searchsorted(self.thresholds, self.score(x), side="left"))

    def spawn(self):
        return LinearThresholdModel(self.weight, self.thresholds)


class CentroidModel(BlackBoxModel):
    """Nearest centroid in Frobenius distance, ties to the lowest class id."""

    def __init__(self, centroids):
        cs = [as_tensor4(c, "centroid") for c in centroids]
        if len(cs) < 2:
            raise ValueError("need at least two centroids")
        if any(c.shape != cs[0].shape for c in cs):
            raise ValueError("centroids must share dims")
        self.centroids = np.stack(cs)
        super().__init__(cs[0].shape, len(cs))

    def _label(self, x):
        diff = self.centroids - x[None]
        d2 = np.sum(diff.reshape(len(diff), -1) ** 2, axis=1)
        return int(np.argmin(d2))

    def spawn(self):
        return CentroidModel(list(self.centroids))


def analytic_boundary_distance(model: LinearThresholdModel, x, d):
    """Closed-form smallest step along unit ``d`` that changes the label.

    Returns None when the score moves away from every threshold.
    """
    x = as_tensor4(x)
    d = as_tensor4(d, "direction")
    if abs(frobenius_norm(d) - 1.0) > 1e-12:
        raise ValueError("direction must have unit Frobenius norm")
    s0 = model.score(x)
    slope = model.score(d)
    t = model.thresholds
    k = int(np.searchsorted(t, s0, side="left"))
    if slope > 0 and k < t.size:
        return (t[k] - s0) / slope
    if slope < 0 and k > 0:
        return (s0 - t[k - 1]) / -slope
    return None


class SubprocessModel(BlackBoxModel):
    """Model hosted by a child process.

    Protocol, one request in flight: the parent writes the absolute path of a
    TEN4 file plus newline to the child's stdin, the child answers with a
    decimal label plus newline on stdout.
    """

    def __init__(self, command, input_dims, n_classes=None, timeout=30.0):
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.timeout = float(timeout)
        super().__init__(input_dims, n_classes if n_classes is not None else 0)
        self._tmpdir = tempfile.TemporaryDirectory(prefix="tenad-query-")
        self._path = os.path.join(self._tmpdir.name, "query.ten4")
        try:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            self._proc = None
            self.close()
            raise ModelUnavailable(f"cannot start {self.command!r}: {exc}", 0) from exc
        self._lines = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self):
        for line in self._proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def _fail(self, message):
        self.close()
        raise ModelUnavailable(message, self.query_count)

    def _label(self, x):
        if self._proc.poll() is not None:
            self._fail(f"child exited with code {self._proc.returncode}")
        write_ten4(self._path, x)
        try:
            self._proc.stdin.write(self._path + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            self._fail(f"cannot write to child: {exc}")
        try:
            line = self._lines.get(timeout=self.timeout)
        except queue.Empty:
            self._fail(f"no reply within {self.timeout} s")
        if line is None:
            self._fail("child closed its stdout")
        try:
            label = int(line.strip())
        except ValueError:
            self._fail(f"malformed reply {line.strip()!r}")
        if label < 0 or (self.n_classes and label >= self.n_classes):
            self._fail(f"label {label} out of range")
        return label

    def spawn(self):
        return SubprocessModel(self.command, self.input_dims, self.n_classes or None, self.timeout)

    def close(self):
        proc = getattr(self, "_proc", None)
        if proc is not None and proc.poll() is None:
            try:
                proc.stdin.close()
            except OSError:
                pass
            try:
                proc.wait(timeout=2)
            except subprocess.TimeoutExpired:
                proc.kill()
                proc.wait()
        if getattr(self, "_tmpdir", None) is not None:
            self._tmpdir.cleanup()
            self._tmpdir = None

    def __del__(self):
        try:
            self.close()
        except Exception:
            pass


def subprocess_model(command, dims, n_classes=None, timeout=30.0) -> SubprocessModel:
    return SubprocessModel(command, dims, n_classes=n_classes, timeout=timeout)
