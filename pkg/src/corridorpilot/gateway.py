"""Local gateway exposing the simulator, recorder, and controller to the UI.

REST manages worlds, models, and sessions; a WebSocket per session streams
frames and accepts commands. Teleop sessions apply human commands to the
simulator and optionally record (frame, command) pairs with source=human;
autonomous sessions drive the same TrialRunner as the headless harness, so a
session with no overrides produces a bitwise-identical trajectory log.

The episode loop never blocks on a slow subscriber: each connection gets a
bounded drop-oldest queue and a running dropped-frame counter.
"""

from __future__ import annotations

import asyncio
import base64
import itertools
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.responses import PlainTextResponse

from . import __version__
from . import dataset as ds
from .commands import FlightCommand
from .controller import TrialRunner
from .errors import CorridorPilotError, DomainError
from .training import load_checkpoint
from .world import Episode, FloorPlan, generate_world, load_world, render, save_world

PROTOCOL_VERSION = 1
DEFAULT_QUEUE_LIMIT = 64


class Subscriber:
    """Bounded drop-oldest message queue feeding one WebSocket."""

    def __init__(self, maxlen: int = DEFAULT_QUEUE_LIMIT):
        self.items: deque = deque()
        self.maxlen = maxlen
        self.event = asyncio.Event()
        self.dropped = 0

    def put(self, item: dict) -> None:
        if len(self.items) >= self.maxlen:
            self.items.popleft()
            self.dropped += 1
        self.items.append(item)
        self.event.set()

    async def get(self) -> dict:
        while not self.items:
            self.event.clear()
            await self.event.wait()
        return self.items.popleft()


class Fanout:
    def __init__(self):
        self.subscribers: list[Subscriber] = []

    def subscribe(self, maxlen: int = DEFAULT_QUEUE_LIMIT) -> Subscriber:
        sub = Subscriber(maxlen)
        self.subscribers.append(sub)
        return sub

    def unsubscribe(self, sub: Subscriber) -> None:
        if sub in self.subscribers:
            self.subscribers.remove(sub)

    def publish(self, item: dict) -> None:
        # never awaits: slow consumers drop frames instead of delaying steps
        for sub in self.subscribers:
            sub.put(item)


def _frame_b64(frame) -> str:
    return base64.b64encode(ds.frame_to_ppm_bytes(frame)).decode()


def _pose_dict(pose) -> dict:
    return {"x": pose.x, "y": pose.y, "heading": pose.heading}


@dataclass
class Session:
    id: str
    mode: str                      # teleop | autonomous
    world_id: str
    plan: FloorPlan
    model_id: Optional[str] = None
    network: object = None
    threshold: float = 0.5
    noise_seed: int = 0
    step_interval: float = 0.0
    fanout: Fanout = field(default_factory=Fanout)
    primary: Optional[object] = None       # the one command source
    # teleop state
    episode: Optional[Episode] = None
    recording: bool = False
    buffer: list = field(default_factory=list)
    flushed_batches: int = 0
    # autonomous state
    runner: Optional[TrialRunner] = None
    task: Optional[asyncio.Task] = None
    running: asyncio.Event = field(default_factory=asyncio.Event)
    overrides: deque = field(default_factory=deque)
    aborted: bool = False

    @property
    def subscriber_count(self) -> int:
        return len(self.fanout.subscribers)


def create_app(
    worlds_dir,
    models_dir,
    data_dir,
    step_interval: float = 0.0,
    queue_limit: int = DEFAULT_QUEUE_LIMIT,
) -> FastAPI:
    worlds_dir = Path(worlds_dir)
    models_dir = Path(models_dir)
    data_dir = Path(data_dir)
    for d in (worlds_dir, models_dir, data_dir):
        if not d.is_dir():
            raise DomainError(f"directory {d} does not exist")

    app = FastAPI(title="corridorpilot gateway", version=__version__)
    sessions: dict[str, Session] = {}
    session_ids = itertools.count(1)
    app.state.sessions = sessions

    # ------------------------------------------------------------- REST --

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.get("/worlds")
    def list_worlds():
        out = []
        for path in sorted(worlds_dir.glob("*.cpworld")):
            plan = load_world(path)
            out.append({
                "id": path.stem,
                "layout": plan.layout,
                "theme": plan.theme,
                "seed": plan.seed,
            })
        return out

    @app.post("/worlds")
    def create_world(body: dict):
        try:
            seed = int(body["seed"])
            layout = body["layout"]
            theme = int(body["theme"])
            plan = generate_world(seed, layout, theme)
        except (KeyError, ValueError, CorridorPilotError) as e:
            raise HTTPException(status_code=400, detail=str(e))
        world_id = f"w{seed}_{layout}_t{theme}"
        save_world(plan, worlds_dir / f"{world_id}.cpworld")
        return {"id": world_id}

    @app.get("/models")
    def list_models():
        return [{"id": p.stem} for p in sorted(models_dir.glob("*.cpnv"))]

    @app.post("/sessions")
    def create_session(body: dict):
        mode = body.get("mode")
        if mode not in ("teleop", "autonomous"):
            raise HTTPException(status_code=400, detail=f"bad mode {mode!r}")
        world_id = body.get("world_id", "")
        world_path = worlds_dir / f"{world_id}.cpworld"
        if not world_path.exists():
            raise HTTPException(status_code=404, detail=f"unknown world {world_id!r}")
        plan = load_world(world_path)

        network = None
        model_id = body.get("model_id")
        if mode == "autonomous":
            model_path = models_dir / f"{model_id}.cpnv"
            if model_id is None or not model_path.exists():
                raise HTTPException(status_code=404, detail=f"unknown model {model_id!r}")
            try:
                network = load_checkpoint(model_path)
            except CorridorPilotError as e:
                raise HTTPException(status_code=400, detail=f"model load failed: {e}")

        session = Session(
            id=f"s{next(session_ids):04d}",
            mode=mode,
            world_id=world_id,
            plan=plan,
            model_id=model_id,
            network=network,
            threshold=float(body.get("threshold", 0.5)),
            noise_seed=int(body.get("noise_seed", 0)),
            step_interval=float(body.get("step_interval", step_interval)),
        )
        session.running.set()
        if mode == "teleop":
            session.episode = Episode(plan)
        else:
            session.runner = TrialRunner(
                plan, network,
                threshold=session.threshold,
                sensor_noise_seed=session.noise_seed,
            )
        sessions[session.id] = session
        return {"id": session.id, "mode": mode, "world_id": world_id}

    @app.get("/sessions/{session_id}")
    def session_status(session_id: str):
        s = sessions.get(session_id)
        if s is None:
            raise HTTPException(status_code=404, detail="no such session")
        status = {
            "id": s.id, "mode": s.mode, "world_id": s.world_id,
            "subscribers": s.subscriber_count, "recording": s.recording,
        }
        if s.runner is not None:
            status["done"] = s.runner.done
            if s.runner.done:
                status["outcome"] = s.runner.result.outcome.value
                status["steps"] = s.runner.result.steps
        return status

    @app.get("/sessions/{session_id}/log", response_class=PlainTextResponse)
    def session_log(session_id: str):
        s = sessions.get(session_id)
        if s is None or s.runner is None:
            raise HTTPException(status_code=404, detail="no autonomous session")
        return "\n".join(s.runner.log_lines()) + "\n"

    # -------------------------------------------------------- WebSocket --

    def _teleop_state_msg(s: Session, collision=None, reached=None, error=None) -> dict:
        frame = render(s.plan, s.episode.pose)
        msg = {
            "v": PROTOCOL_VERSION,
            "type": "state",
            "step": s.episode.steps,
            "frame": _frame_b64(frame),
            "pose": _pose_dict(s.episode.pose),
            "collision": bool(collision) or s.episode.collided,
            "reached": None if reached is None else reached.kind,
            "recording": s.recording,
            "recorded": len(s.buffer),
        }
        if error:
            msg["error"] = error
        return msg

    def _flush_recording(s: Session) -> int:
        if not s.buffer:
            return 0
        out = data_dir / s.id
        meta = {"theme": s.plan.theme, "layout": s.plan.layout, "seed": s.plan.seed}
        ds.record(out, [(s.world_id, meta, list(s.buffer))], source="human")
        n = len(s.buffer)
        s.buffer.clear()
        s.flushed_batches += 1
        return n

    async def _handle_teleop(ws: WebSocket, s: Session):
        await ws.send_json(_teleop_state_msg(s))
        while True:
            msg = await ws.receive_json()
            mtype = msg.get("type")
            if mtype == "record":
                s.recording = bool(msg.get("on"))
                await ws.send_json(_teleop_state_msg(s))
            elif mtype == "reset":
                s.episode = Episode(s.plan)
                s.buffer.clear()
                await ws.send_json(_teleop_state_msg(s))
            elif mtype == "command":
                try:
                    cmd = FlightCommand.from_label(msg.get("cmd", ""))
                except DomainError as e:
                    await ws.send_json({"v": PROTOCOL_VERSION, "type": "error",
                                        "message": str(e)})
                    continue
                if s.episode.collided:
                    await ws.send_json({
                        "v": PROTOCOL_VERSION, "type": "error",
                        "message": "episode ended in a collision; send reset",
                    })
                    continue
                frame_before = render(s.plan, s.episode.pose)
                if s.recording:
                    s.buffer.append((frame_before, cmd, s.episode.pose))
                if cmd is FlightCommand.STOP:
                    try:
                        flushed = _flush_recording(s)
                    except OSError as e:
                        # partial writes stay on disk but the manifest only
                        # ever contains fully-written samples
                        await ws.send_json({"v": PROTOCOL_VERSION, "type": "error",
                                            "message": f"recording flush failed: {e}"})
                        continue
                    reply = _teleop_state_msg(s)
                    reply["type"] = "stopped"
                    reply["flushed"] = flushed
                    await ws.send_json(reply)
                    s.episode = Episode(s.plan)
                else:
                    _, collision, reached = s.episode.step(cmd)
                    await ws.send_json(_teleop_state_msg(s, collision, reached))
            else:
                await ws.send_json({"v": PROTOCOL_VERSION, "type": "error",
                                    "message": f"unknown message type {mtype!r}"})

    async def _autonomous_loop(s: Session):
        runner = s.runner
        while not runner.done:
            await s.running.wait()
            if s.aborted:
                runner.abort()
                break
            override = s.overrides.popleft() if s.overrides else None
            record = runner.advance(override)
            p = runner.last_prediction
            s.fanout.publish({
                "v": PROTOCOL_VERSION,
                "type": "step",
                "step": record.step,
                "frame": _frame_b64(runner.last_frame),
                "pose": _pose_dict(record.pose),
                "prediction": {
                    "command": p.command.label,
                    "confidence": p.confidence,
                    "distribution": [float(x) for x in p.distribution],
                },
                "action": record.action,
                "source": record.source,
            })
            await asyncio.sleep(s.step_interval)
        result = runner.result
        s.fanout.publish({
            "v": PROTOCOL_VERSION,
            "type": "result",
            "outcome": result.outcome.value,
            "steps": result.steps,
        })

    async def _pump(sub: Subscriber, ws: WebSocket):
        while True:
            item = await sub.get()
            out = dict(item)
            out["dropped_frames"] = sub.dropped
            await ws.send_json(out)

    async def _handle_autonomous(ws: WebSocket, s: Session):
        sub = s.fanout.subscribe(queue_limit)
        is_primary = s.primary is None
        if is_primary:
            s.primary = ws
        pump_task = asyncio.create_task(_pump(sub, ws))
        if s.task is None:
            s.task = asyncio.create_task(_autonomous_loop(s))
        try:
            while True:
                msg = await ws.receive_json()
                mtype = msg.get("type")
                if not is_primary and mtype in ("override", "pause", "resume", "abort"):
                    await ws.send_json({"v": PROTOCOL_VERSION, "type": "error",
                                        "message": "only the primary connection may command"})
                    continue
                if mtype == "override":
                    try:
                        s.overrides.append(FlightCommand.from_label(msg.get("cmd", "")))
                    except DomainError as e:
                        await ws.send_json({"v": PROTOCOL_VERSION, "type": "error",
                                            "message": str(e)})
                elif mtype == "pause":
                    s.running.clear()
                elif mtype == "resume":
                    s.running.set()
                elif mtype == "abort":
                    s.aborted = True
                    s.running.set()
                else:
                    await ws.send_json({"v": PROTOCOL_VERSION, "type": "error",
                                        "message": f"unknown message type {mtype!r}"})
        finally:
            pump_task.cancel()
            s.fanout.unsubscribe(sub)
            if is_primary:
                s.primary = None

    @app.websocket("/ws/session/{session_id}")
    async def session_ws(ws: WebSocket, session_id: str):
        s = sessions.get(session_id)
        await ws.accept()
        if s is None:
            await ws.send_json({"v": PROTOCOL_VERSION, "type": "error",
                                "message": f"no such session {session_id!r}"})
            await ws.close()
            return
        try:
            if s.mode == "teleop":
                await _handle_teleop(ws, s)
            else:
                await _handle_autonomous(ws, s)
        except WebSocketDisconnect:
            pass

    return app


def serve(worlds_dir, models_dir, data_dir, port: int = 8008,
          step_interval: float = 0.05) -> None:
    """Run the gateway under uvicorn on localhost."""
    import uvicorn

    app = create_app(worlds_dir, models_dir, data_dir, step_interval=step_interval)
    uvicorn.run(app, host="127.0.0.1", port=port)
