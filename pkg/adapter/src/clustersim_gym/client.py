"""Wire-protocol client: newline-delimited JSON over a spawned subprocess or TCP.

The client performs no numerical work at all; replies are handed to the
caller exactly as decoded.
"""
from __future__ import annotations

import json
import select
import socket
import subprocess
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional


class AdapterError(Exception):
    """Base class for adapter-side failures."""


class TransportError(AdapterError):
    """The server went away or did not answer within the timeout."""


class ProtocolReplyError(AdapterError):
    """The server answered ok: false."""

    def __init__(self, error: str, message: str):
        super().__init__(f"{error}: {message}")
        self.error = error
        self.message = message


class SessionStateError(ProtocolReplyError):
    """Server-side session driven out of order (step before reset / after done)."""


def default_server_command(scenario: str | Path) -> list[str]:
    return [sys.executable, "-m", "clustersim.cli", "serve-env", "--stdio",
            "--scenario", str(scenario)]


@dataclass
class EnvClientConfig:
    """Exactly one transport: a stdio server command (default) or host:port."""

    scenario: Optional[str] = None
    command: Optional[list[str]] = None
    host: Optional[str] = None
    port: Optional[int] = None
    seed: Optional[int] = None
    timeout_s: float = 30.0

    def __post_init__(self):
        tcp = self.host is not None or self.port is not None
        if tcp and (self.command is not None):
            raise AdapterError("configure either a stdio command or host/port, not both")
        if tcp and (self.host is None or self.port is None):
            raise AdapterError("TCP transport needs both host and port")
        if not tcp and self.command is None and self.scenario is None:
            raise AdapterError("stdio transport needs a scenario (or an explicit command)")

    @property
    def uses_tcp(self) -> bool:
        return self.host is not None

    def resolved_command(self) -> list[str]:
        return self.command if self.command is not None else default_server_command(self.scenario)


class _StdioTransport:
    def __init__(self, command: list[str], timeout_s: float):
        self.timeout_s = timeout_s
        self.proc = subprocess.Popen(
            command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL, text=True, bufsize=1)

    def send(self, line: str) -> None:
        if self.proc.poll() is not None:
            raise TransportError("server process has exited")
        try:
            self.proc.stdin.write(line + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise TransportError(f"server pipe closed: {exc}") from exc

    def receive(self) -> str:
        ready, _, _ = select.select([self.proc.stdout], [], [], self.timeout_s)
        if not ready:
            raise TransportError(f"no reply within {self.timeout_s}s")
        line = self.proc.stdout.readline()
        if not line:
            raise TransportError("server closed the connection")
        return line

    def close(self) -> None:
        if self.proc.poll() is None:
            try:
                self.proc.stdin.close()
            except OSError:
                pass
            try:
                self.proc.wait(timeout=2)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()


class _TcpTransport:
    def __init__(self, host: str, port: int, timeout_s: float):
        self.sock = socket.create_connection((host, port), timeout=timeout_s)
        self.sock.settimeout(timeout_s)
        self.reader = self.sock.makefile("r")

    def send(self, line: str) -> None:
        try:
            self.sock.sendall((line + "\n").encode())
        except OSError as exc:
            raise TransportError(f"socket send failed: {exc}") from exc

    def receive(self) -> str:
        try:
            line = self.reader.readline()
        except socket.timeout as exc:
            raise TransportError("no reply within timeout") from exc
        if not line:
            raise TransportError("server closed the connection")
        return line

    def close(self) -> None:
        try:
            self.reader.close()
            self.sock.close()
        except OSError:
            pass


class ProtocolClient:
    """One protocol session; thin request/reply wrapper with error mapping."""

    def __init__(self, config: EnvClientConfig):
        self.config = config
        if config.uses_tcp:
            self.transport = _TcpTransport(config.host, config.port, config.timeout_s)
        else:
            self.transport = _StdioTransport(config.resolved_command(), config.timeout_s)

    def request(self, payload: dict) -> dict:
        self.transport.send(json.dumps(payload))
        line = self.transport.receive()
        try:
            reply = json.loads(line)
        except json.JSONDecodeError as exc:
            raise TransportError(f"unparseable reply: {line!r}") from exc
        if not reply.get("ok", False):
            error = reply.get("error", "UnknownError")
            message = reply.get("message", "")
            if error == "SessionStateError":
                raise SessionStateError(error, message)
            raise ProtocolReplyError(error, message)
        return reply

    def spec(self) -> dict:
        return self.request({"cmd": "spec"})["spec"]

    def reset(self, seed: Optional[int] = None) -> dict:
        payload = {"cmd": "reset"}
        if seed is not None:
            payload["seed"] = int(seed)
        return self.request(payload)

    def step(self, action: int) -> dict:
        return self.request({"cmd": "step", "action": int(action)})

    def close(self) -> None:
        try:
            self.transport.send(json.dumps({"cmd": "close"}))
            self.transport.receive()
        except TransportError:
            pass
        finally:
            self.transport.close()
