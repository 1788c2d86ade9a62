"""Completion clients, embedders and build runners behind small protocols.

Real endpoints are configured from flags or the environment; the canned and
scripted implementations are the reference stubs used for dry runs.
"""

from __future__ import annotations

import json
import os
import shlex
import subprocess
import urllib.error
import urllib.request
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np

from .errors import TransportError

DEFAULT_MAX_TOKENS = 1024
DEFAULT_TEMPERATURE = 0.0
DEFAULT_TIMEOUT = 120.0


class CompletionClient(Protocol):
    def complete(self, prompt: str, max_tokens: int = DEFAULT_MAX_TOKENS, temperature: float = DEFAULT_TEMPERATURE) -> str: ...


class CannedCompletionClient:
    """Returns the given completions in order; the last one repeats."""

    def __init__(self, completions: Sequence[str]):
        if not completions:
            raise ValueError("at least one canned completion is required")
        self.completions = list(completions)
        self.prompts: list[str] = []

    def complete(self, prompt: str, max_tokens: int = DEFAULT_MAX_TOKENS, temperature: float = DEFAULT_TEMPERATURE) -> str:
        i = min(len(self.prompts), len(self.completions) - 1)
        self.prompts.append(prompt)
        return self.completions[i]


def _post_json(url: str, payload: dict, api_key: str | None, timeout: float) -> dict:
    headers = {"Content-Type": "application/json"}
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    req = urllib.request.Request(url, data=json.dumps(payload).encode("utf-8"), headers=headers, method="POST")
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            body = json.loads(resp.read().decode("utf-8"))
    except (urllib.error.URLError, OSError, ValueError) as exc:
        raise TransportError(f"request to {url} failed: {exc}") from exc
    if not isinstance(body, dict):
        raise TransportError(f"response from {url} is not a JSON object")
    return body


class HttpCompletionClient:
    """POSTs {"prompt", "max_tokens", "temperature"} and reads "completion" (or "text")."""

    def __init__(self, endpoint: str, api_key: str | None = None, timeout: float = DEFAULT_TIMEOUT):
        self.endpoint = endpoint
        self.api_key = api_key
        self.timeout = timeout

    def complete(self, prompt: str, max_tokens: int = DEFAULT_MAX_TOKENS, temperature: float = DEFAULT_TEMPERATURE) -> str:
        body = _post_json(
            self.endpoint,
            {"prompt": prompt, "max_tokens": max_tokens, "temperature": temperature},
            self.api_key,
            self.timeout,
        )
        text = body.get("completion", body.get("text"))
        if not isinstance(text, str):
            raise TransportError(f"response from {self.endpoint} has no completion text")
        return text


class HttpEmbedder:
    """External embedder: POSTs {"text"} and expects {"vector": [...]} of fixed length."""

    def __init__(self, endpoint: str, dim: int, api_key: str | None = None, timeout: float = DEFAULT_TIMEOUT):
        self.endpoint = endpoint
        self.dim = dim
        self.api_key = api_key
        self.timeout = timeout
        self.name = f"http:{endpoint}"

    def __call__(self, text: str) -> np.ndarray:
        body = _post_json(self.endpoint, {"text": text}, self.api_key, self.timeout)
        vec = body.get("vector")
        if not isinstance(vec, list) or len(vec) != self.dim:
            raise TransportError(f"embedder at {self.endpoint} returned a malformed vector")
        v = np.asarray(vec, dtype=np.float64)
        norm = float(np.linalg.norm(v))
        if norm == 0.0:
            raise TransportError(f"embedder at {self.endpoint} returned a zero vector")
        return v / norm


@dataclass
class BuildOutcome:
    success: bool
    output: str = ""
    # the tree cannot be built at all, so further rounds are pointless
    fatal: bool = False


class BuildRunner(Protocol):
    def run(self, patch_path: Path, worktree: Path) -> BuildOutcome: ...


class ScriptedBuildRunner:
    """Replays a fixed sequence of outcomes; the last one repeats."""

    def __init__(self, outcomes: Iterable[BuildOutcome | bool]):
        self.outcomes = [o if isinstance(o, BuildOutcome) else BuildOutcome(o, "" if o else "build failed") for o in outcomes]
        if not self.outcomes:
            raise ValueError("at least one scripted outcome is required")
        self.calls: list[tuple[Path, Path]] = []

    def run(self, patch_path: Path, worktree: Path) -> BuildOutcome:
        i = min(len(self.calls), len(self.outcomes) - 1)
        self.calls.append((Path(patch_path), Path(worktree)))
        return self.outcomes[i]


class CommandBuildRunner:
    """Runs a shell command with {patch} and {worktree} substituted (shell-quoted).

    Exit status 0 is success. Exit status 125 marks a fatal outcome, the
    same convention ``git bisect run`` uses for an unbuildable tree.
    """

    FATAL_STATUS = 125

    def __init__(self, command: str, timeout: float = 3600.0):
        self.command = command
        self.timeout = timeout

    def run(self, patch_path: Path, worktree: Path) -> BuildOutcome:
        cmd = self.command.format(patch=shlex.quote(str(patch_path)), worktree=shlex.quote(str(worktree)))
        try:
            proc = subprocess.run(
                cmd, shell=True, cwd=str(worktree), capture_output=True, text=True, timeout=self.timeout
            )
        except subprocess.TimeoutExpired as exc:
            return BuildOutcome(False, f"build timed out after {self.timeout}s\n{exc.stdout or ''}")
        except OSError as exc:
            return BuildOutcome(False, f"could not start build: {exc}", fatal=True)
        output = (proc.stdout or "") + (proc.stderr or "")
        return BuildOutcome(proc.returncode == 0, output, fatal=proc.returncode == self.FATAL_STATUS)


def env_or(value: str | None, name: str) -> str | None:
    return value if value else os.environ.get(name) or None
