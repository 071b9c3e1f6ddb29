"""WebSocket telemetry: snapshot broadcast plus the command channel.

Wire format is one JSON text frame per message. Outbound frames carry
"type" of snapshot, ack or error; inbound command frames carry set_fusion,
slew, set_pattern or worker. Every client gets the latest snapshot
immediately on connect, then the live 10 Hz stream; malformed commands are
answered with an error frame and never disturb the engine loop.
"""

from __future__ import annotations

import asyncio
import json
import logging
import threading

from websockets.asyncio.server import serve as ws_serve

from .runtime import Engine, EngineConfig, EngineSnapshot, run_live
from .simkit import Scenario

log = logging.getLogger("skyfence.telemetry")

COMMAND_TYPES = ("set_fusion", "slew", "set_pattern", "worker")


class TelemetryServer:
    """Bridges the threaded engine loop to asyncio websocket clients."""

    def __init__(
        self, scenario: Scenario, config: EngineConfig | None = None, port: int = 8765
    ):
        self.scenario = scenario
        self.config = config
        self.port = port
        self.stop_event = threading.Event()
        self.started = threading.Event()
        self._clients: set = set()
        self._latest: EngineSnapshot | None = None
        self._loop: asyncio.AbstractEventLoop | None = None
        self._engine: Engine | None = None

    # -- engine side (called from the live-runner thread) --

    def _on_snapshot(self, snapshot: EngineSnapshot) -> None:
        self._latest = snapshot
        loop = self._loop
        if loop is not None and not loop.is_closed():
            loop.call_soon_threadsafe(self._broadcast, snapshot.to_json())

    def _broadcast(self, text: str) -> None:
        for client in list(self._clients):
            asyncio.ensure_future(self._send(client, text))

    async def _send(self, client, text: str) -> None:
        try:
            await client.send(text)
        except Exception:
            self._clients.discard(client)

    # -- client side --

    async def _handle_client(self, websocket) -> None:
        self._clients.add(websocket)
        try:
            if self._latest is not None:
                await websocket.send(self._latest.to_json())
            async for raw in websocket:
                await self._handle_command(websocket, raw)
        except Exception:
            pass
        finally:
            self._clients.discard(websocket)

    async def _handle_command(self, websocket, raw) -> None:
        try:
            doc = json.loads(raw)
            if not isinstance(doc, dict) or doc.get("type") not in COMMAND_TYPES:
                raise ValueError(f"unknown command type: {doc.get('type')!r}")
        except (json.JSONDecodeError, ValueError, AttributeError) as exc:
            await websocket.send(json.dumps({"type": "error", "message": str(exc)}))
            return
        engine = self._engine
        if engine is None:
            await websocket.send(json.dumps({"type": "error", "message": "engine not ready"}))
            return
        engine.submit_command(doc)
        await websocket.send(json.dumps({"type": "ack", "command": doc}))

    # -- lifecycle --

    def run(self) -> None:
        """Serve until the scenario ends or stop() is called (blocking)."""
        self._loop = asyncio.new_event_loop()
        asyncio.set_event_loop(self._loop)

        def engine_thread() -> None:
            try:
                run_live(
                    self.scenario,
                    self.config,
                    on_snapshot=self._on_snapshot,
                    stop_event=self.stop_event,
                    engine_hook=self._set_engine,
                )
            finally:
                loop = self._loop
                if loop is not None and not loop.is_closed():
                    loop.call_soon_threadsafe(loop.stop)

        async def main() -> None:
            async with ws_serve(self._handle_client, "0.0.0.0", self.port):
                self.started.set()
                log.info("telemetry listening on port %d", self.port)
                await asyncio.Event().wait()

        thread = threading.Thread(target=engine_thread, daemon=True)
        thread.start()
        try:
            self._loop.run_until_complete(main())
        except RuntimeError:
            pass  # loop.stop() fired inside run_until_complete
        finally:
            self.stop_event.set()
            thread.join(timeout=2.0)
            self._loop.close()

    def _set_engine(self, engine: Engine) -> None:
        self._engine = engine

    def stop(self) -> None:
        self.stop_event.set()
        loop = self._loop
        if loop is not None and not loop.is_closed():
            loop.call_soon_threadsafe(loop.stop)


def serve(scenario: Scenario, port: int, config: EngineConfig | None = None) -> None:
    TelemetryServer(scenario, config, port).run()
