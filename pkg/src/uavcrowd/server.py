"""Streaming control service for live steering and programmatic capture.

Protocol: newline-delimited JSON commands over a duplex socket. Every command
yields exactly one JSON response carrying the command's request_id. Clients
that subscribe to the frame stream additionally receive binary frame messages:

    0x01 | u32be total_length | u32be header_length | header JSON | buffers

where the header lists the images (pass, format, byte size) concatenated in
``buffers`` plus tick, UAV pose, and crowd-group boxes. Browsers speak the
same protocol over a WebSocket: the server sniffs an HTTP Upgrade request on
the same port and answers RFC 6455 frames (text = JSON lines, binary = frame
messages verbatim).

One thread owns the simulation; network readers funnel parsed commands into a
queue the loop drains at tick boundaries, so per-connection command order is
preserved and every frame message is internally consistent.
"""

from __future__ import annotations

import base64
import hashlib
import json
import math
import os
import queue
import socket
import threading
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

from .annotate import annotation_record, extract_components, merge_groups
from .behavior import CANONICAL_DT, Scenario, SimState, SpawnConfig, step
from .camera import (
    DEFAULT_INTRINSICS,
    DEFAULT_PITCH,
    ControlCommand,
    InvalidCommandError,
    UavState,
    Z_MAX,
    Z_MIN,
    apply_control,
)
from .dataset import MAX_CLIP_FRAMES, ScenarioScript, frame_point, script_label
from .render import FrameSet, capture, pgm_bytes, ppm_bytes
from .world import DEFAULT_MIX, DEFAULT_RADIUS, DEFAULT_TILE_SIZE, generate_world

DEFAULT_PORT = 8777
TICK_RATE = 30.0

_WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"

_PASS_NAMES = {"rgb": "rgb", "seg": "seg", "segmentation": "seg", "depth": "depth"}


@dataclass(frozen=True)
class ServerConfig:
    host: str = "127.0.0.1"
    port: int = DEFAULT_PORT
    seed: int = 42
    radius: int = DEFAULT_RADIUS
    tile_size: float = DEFAULT_TILE_SIZE
    agents: int = 150
    violent_fraction: float = 0.5
    altitude: float = 3.5
    pitch: float = DEFAULT_PITCH
    paced: bool = True
    out_dir: str = "recordings"


class _Conn:
    def __init__(self, sock: socket.socket, mode: str) -> None:
        self.sock = sock
        self.mode = mode  # "json" | "ws"
        self.lock = threading.Lock()
        self.alive = True

    def send_json(self, doc: dict) -> None:
        data = (json.dumps(doc, separators=(",", ":")) + "\n").encode("utf-8")
        if self.mode == "ws":
            data = _ws_frame(0x1, data)
        self._send(data)

    def send_binary(self, payload: bytes) -> None:
        msg = b"\x01" + len(payload).to_bytes(4, "big") + payload
        if self.mode == "ws":
            msg = _ws_frame(0x2, msg)
        self._send(msg)

    def _send(self, data: bytes) -> None:
        with self.lock:
            if not self.alive:
                return
            try:
                self.sock.sendall(data)
            except OSError:
                self.alive = False

    def close(self) -> None:
        with self.lock:
            self.alive = False
            try:
                self.sock.close()
            except OSError:
                pass


@dataclass
class _Subscription:
    conn: _Conn
    passes: tuple[str, ...]
    every: int


@dataclass
class _Recording:
    clip_id: str
    directory: Path
    stems: list[str] = field(default_factory=list)
    start_tick: int = 0


def _ws_frame(opcode: int, payload: bytes) -> bytes:
    n = len(payload)
    head = bytes([0x80 | opcode])
    if n < 126:
        head += bytes([n])
    elif n < 1 << 16:
        head += bytes([126]) + n.to_bytes(2, "big")
    else:
        head += bytes([127]) + n.to_bytes(8, "big")
    return head + payload


def _recv_exact(sock: socket.socket, n: int) -> bytes | None:
    buf = b""
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            return None
        buf += chunk
    return buf


def _ws_read_message(sock: socket.socket) -> tuple[int, bytes] | None:
    """Read one unfragmented client frame; returns (opcode, payload)."""
    head = _recv_exact(sock, 2)
    if head is None:
        return None
    opcode = head[0] & 0x0F
    masked = bool(head[1] & 0x80)
    length = head[1] & 0x7F
    if length == 126:
        ext = _recv_exact(sock, 2)
        if ext is None:
            return None
        length = int.from_bytes(ext, "big")
    elif length == 127:
        ext = _recv_exact(sock, 8)
        if ext is None:
            return None
        length = int.from_bytes(ext, "big")
    mask = _recv_exact(sock, 4) if masked else b"\x00\x00\x00\x00"
    if mask is None:
        return None
    payload = _recv_exact(sock, length) if length else b""
    if payload is None:
        return None
    if masked:
        payload = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
    return opcode, payload


class SimServer:
    """The authoritative simulation loop plus its network front-end."""

    def __init__(self, config: ServerConfig) -> None:
        self.config = config
        self.port = config.port
        self._listener: socket.socket | None = None
        self._queue: queue.Queue = queue.Queue()
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []
        self._conns: list[_Conn] = []
        self._conn_lock = threading.Lock()
        self._subs: list[_Subscription] = []
        self._recording: _Recording | None = None
        self._clip_counter = 0
        self._clips: list[dict] = []
        self._frame_cache: tuple[int, FrameSet] | None = None
        self._boxes_cache: tuple[int, list] | None = None
        self._vel = ControlCommand()
        self._build_sim(config.seed)

    # -- simulation state ---------------------------------------------------

    def _build_sim(self, seed: int, script: ScenarioScript | None = None) -> None:
        cfg = self.config
        if script is not None:
            world = generate_world(script.seed, cfg.radius, cfg.tile_size, DEFAULT_MIX)
            sim = SimState.create(world, SpawnConfig(groups=script.groups))
        else:
            world = generate_world(seed, cfg.radius, cfg.tile_size, DEFAULT_MIX)
            sim = SimState.create(
                world,
                SpawnConfig(total_agents=cfg.agents, violent_fraction=cfg.violent_fraction),
            )
        self.world = world
        self.sim = sim
        anchor = sim.groups[0].anchor if sim.groups else (0.0, 0.0)
        self.uav = frame_point(anchor, altitude=cfg.altitude, pitch=cfg.pitch).initial_state()
        self._vel = ControlCommand()
        self._frame_cache = None
        self._boxes_cache = None
        self._frame()  # prewarm the static scene so the loop starts debt-free

    def _frame(self) -> FrameSet:
        if self._frame_cache is None or self._frame_cache[0] != self.sim.tick:
            fs = capture(self.sim, self.world, self.uav, DEFAULT_INTRINSICS)
            self._frame_cache = (self.sim.tick, fs)
        return self._frame_cache[1]

    def _boxes(self) -> list:
        if self._boxes_cache is None or self._boxes_cache[0] != self.sim.tick:
            boxes = merge_groups(extract_components(self._frame().seg))
            self._boxes_cache = (self.sim.tick, boxes)
        return self._boxes_cache[1]

    # -- lifecycle ------------------------------------------------------------

    def start(self) -> None:
        listener = socket.create_server((self.config.host, self.config.port))
        self.port = listener.getsockname()[1]
        listener.settimeout(0.2)
        self._listener = listener
        for fn in (self._accept_loop, self._sim_loop):
            t = threading.Thread(target=fn, daemon=True, name=fn.__name__)
            t.start()
            self._threads.append(t)

    def serve_forever(self) -> None:
        if self._listener is None:
            self.start()
        try:
            while not self._stop.is_set():
                time.sleep(0.2)
        except KeyboardInterrupt:
            pass
        finally:
            self.stop()

    def stop(self) -> None:
        self._stop.set()
        if self._listener is not None:
            try:
                self._listener.close()
            except OSError:
                pass
        with self._conn_lock:
            conns = list(self._conns)
        for c in conns:
            c.close()
        for t in self._threads:
            t.join(timeout=2.0)

    # -- networking -----------------------------------------------------------

    def _accept_loop(self) -> None:
        assert self._listener is not None
        while not self._stop.is_set():
            try:
                sock, _addr = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            t = threading.Thread(target=self._reader, args=(sock,), daemon=True)
            t.start()

    _HTTP_METHODS = (b"GET ", b"POST", b"PUT ", b"HEAD", b"OPTI", b"DELE")

    def _reader(self, sock: socket.socket) -> None:
        # sniff the transport: HTTP upgrade requests start with a method verb,
        # anything else is treated as newline-delimited JSON
        first = b""
        for _ in range(25):
            try:
                first = sock.recv(4, socket.MSG_PEEK)
            except OSError:
                return
            if not first:
                sock.close()
                return
            if len(first) >= 4 or b"\n" in first or first[:1] == b"{":
                break
            time.sleep(0.02)
        if first[:4] in self._HTTP_METHODS:
            conn = _Conn(sock, "ws")
            if not self._ws_handshake(sock):
                sock.close()
                return
            self._register(conn)
            self._read_ws(conn)
        else:
            conn = _Conn(sock, "json")
            self._register(conn)
            self._read_json_lines(conn)
        self._unregister(conn)

    def _register(self, conn: _Conn) -> None:
        with self._conn_lock:
            self._conns.append(conn)

    def _unregister(self, conn: _Conn) -> None:
        conn.close()
        with self._conn_lock:
            if conn in self._conns:
                self._conns.remove(conn)
        self._queue.put((conn, {"op": "__disconnect__"}))

    def _read_json_lines(self, conn: _Conn) -> None:
        reader = conn.sock.makefile("rb")
        while not self._stop.is_set():
            try:
                line = reader.readline()
            except OSError:
                return
            if not line:
                return
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
                if not isinstance(doc, dict):
                    raise ValueError("command must be a JSON object")
            except ValueError:
                doc = {"op": "__parse_error__"}
            self._queue.put((conn, doc))

    def _ws_handshake(self, sock: socket.socket) -> bool:
        sock.settimeout(5.0)
        data = b""
        try:
            while b"\r\n\r\n" not in data:
                chunk = sock.recv(4096)
                if not chunk:
                    return False
                data += chunk
        except OSError:
            return False
        sock.settimeout(None)
        head = data.split(b"\r\n\r\n", 1)[0].decode("latin-1")
        headers = {}
        for ln in head.split("\r\n")[1:]:
            if ":" in ln:
                k, v = ln.split(":", 1)
                headers[k.strip().lower()] = v.strip()
        key = headers.get("sec-websocket-key")
        if key is None or "websocket" not in headers.get("upgrade", "").lower():
            body = b"uavcrowd control service; connect via WebSocket or raw TCP JSON lines\n"
            sock.sendall(
                b"HTTP/1.1 200 OK\r\nContent-Type: text/plain\r\n"
                + f"Content-Length: {len(body)}\r\n\r\n".encode()
                + body
            )
            return False
        accept = base64.b64encode(
            hashlib.sha1((key + _WS_GUID).encode()).digest()
        ).decode()
        sock.sendall(
            (
                "HTTP/1.1 101 Switching Protocols\r\n"
                "Upgrade: websocket\r\nConnection: Upgrade\r\n"
                f"Sec-WebSocket-Accept: {accept}\r\n\r\n"
            ).encode()
        )
        return True

    def _read_ws(self, conn: _Conn) -> None:
        while not self._stop.is_set():
            try:
                msg = _ws_read_message(conn.sock)
            except OSError:
                return
            if msg is None:
                return
            opcode, payload = msg
            if opcode == 0x8:  # close
                return
            if opcode == 0x9:  # ping
                with conn.lock:
                    try:
                        conn.sock.sendall(_ws_frame(0xA, payload))
                    except OSError:
                        return
                continue
            if opcode != 0x1:
                continue
            try:
                doc = json.loads(payload.decode("utf-8"))
                if not isinstance(doc, dict):
                    raise ValueError
            except ValueError:
                doc = {"op": "__parse_error__"}
            self._queue.put((conn, doc))

    # -- the simulation loop ----------------------------------------------------

    def _sim_loop(self) -> None:
        period = 1.0 / TICK_RATE
        deadline = time.monotonic()
        while not self._stop.is_set():
            while True:
                try:
                    conn, doc = self._queue.get_nowait()
                except queue.Empty:
                    break
                self._handle(conn, doc)

            self.sim = step(self.sim, CANONICAL_DT)
            try:
                self.uav = apply_control(self.uav, self._vel, CANONICAL_DT)
            except InvalidCommandError:
                self._vel = ControlCommand()

            if self._recording is not None:
                self._record_frame()
            for sub in list(self._subs):
                if not sub.conn.alive:
                    self._subs.remove(sub)
                    continue
                if self.sim.tick % sub.every == 0:
                    sub.conn.send_binary(self._frame_payload(sub.passes))

            if self.config.paced:
                deadline += period
                now = time.monotonic()
                if deadline < now - 2 * period:
                    # running behind: drop the debt instead of sprinting,
                    # so tick rate tracks wall clock
                    deadline = now
                else:
                    time.sleep(max(0.0, deadline - now))

    # -- command handling ---------------------------------------------------------

    def _handle(self, conn: _Conn, doc: dict) -> None:
        op = doc.get("op")
        if op == "__disconnect__":
            self._subs = [s for s in self._subs if s.conn is not conn]
            return
        request_id = doc.get("request_id")
        if op == "__parse_error__":
            conn.send_json(
                {"request_id": None, "status": "error", "code": "parse",
                 "message": "malformed JSON command"}
            )
            return
        try:
            handler = getattr(self, f"_op_{op}", None) if isinstance(op, str) else None
            if handler is None:
                raise _CommandError("unknown-op", f"unknown op {op!r}")
            payload = handler(conn, doc)
            conn.send_json({"request_id": request_id, "status": "ok", "payload": payload})
        except _CommandError as e:
            conn.send_json(
                {"request_id": request_id, "status": "error", "code": e.code,
                 "message": str(e)}
            )
        except Exception as e:  # defensive: a command must never kill the loop
            conn.send_json(
                {"request_id": request_id, "status": "error", "code": "internal",
                 "message": f"{type(e).__name__}: {e}"}
            )

    def _op_Reset(self, conn: _Conn, doc: dict) -> dict:
        seed = int(doc.get("seed", self.config.seed))
        self._finalize_recording()
        self._build_sim(seed)
        return {"tick": self.sim.tick, "seed": seed, "agents": len(self.sim.agents)}

    def _op_SetVelocity(self, conn: _Conn, doc: dict) -> dict:
        try:
            cmd = ControlCommand(
                vx=float(doc.get("vx", 0.0)),
                vy=float(doc.get("vy", 0.0)),
                vz=float(doc.get("vz", 0.0)),
                yaw=None if doc.get("yaw") is None else float(doc["yaw"]),
                pitch=None if doc.get("pitch") is None else float(doc["pitch"]),
            )
        except (TypeError, ValueError) as e:
            raise _CommandError("bad-args", f"invalid velocity: {e}")
        if not all(math.isfinite(v) for v in (cmd.vx, cmd.vy, cmd.vz)):
            raise _CommandError("bad-args", "velocity components must be finite")
        self._vel = cmd
        return {"vx": cmd.vx, "vy": cmd.vy, "vz": cmd.vz}

    def _op_SetAltitude(self, conn: _Conn, doc: dict) -> dict:
        try:
            z = float(doc["z"])
        except (KeyError, TypeError, ValueError):
            raise _CommandError("bad-args", "SetAltitude requires numeric z")
        if not math.isfinite(z):
            raise _CommandError("bad-args", "altitude must be finite")
        z = min(Z_MAX, max(Z_MIN, z))
        self.uav = replace(self.uav, pos=(self.uav.pos[0], self.uav.pos[1], z))
        return {"z": z}

    def _op_SetCameraPitch(self, conn: _Conn, doc: dict) -> dict:
        try:
            pitch = float(doc["pitch"])
        except (KeyError, TypeError, ValueError):
            raise _CommandError("bad-args", "SetCameraPitch requires numeric pitch")
        if not math.isfinite(pitch):
            raise _CommandError("bad-args", "pitch must be finite")
        self.uav = replace(self.uav, pitch=pitch)
        return {"pitch": pitch}

    def _op_GetState(self, conn: _Conn, doc: dict) -> dict:
        u = self.uav
        return {
            "tick": self.sim.tick,
            "uav": {"pos": list(u.pos), "vel": list(u.vel), "yaw": u.yaw, "pitch": u.pitch},
            "agents": len(self.sim.agents),
            "groups": len(self.sim.groups),
            "recording": self._recording is not None,
            "clips": list(self._clips),
        }

    def _op_GetImages(self, conn: _Conn, doc: dict) -> dict:
        passes = doc.get("passes", ["rgb", "seg", "depth"])
        try:
            passes = tuple(_PASS_NAMES[p] for p in passes)
        except (KeyError, TypeError):
            raise _CommandError("bad-args", f"unknown passes {passes!r}")
        if not passes:
            raise _CommandError("bad-args", "passes must be non-empty")
        if doc.get("stream"):
            rate = float(doc.get("rate_hz", 10.0))
            if not (0 < rate <= TICK_RATE):
                raise _CommandError("bad-args", f"rate_hz must be in (0, {TICK_RATE}]")
            every = max(1, round(TICK_RATE / rate))
            self._subs = [s for s in self._subs if s.conn is not conn]
            self._subs.append(_Subscription(conn=conn, passes=passes, every=every))
            return {"streaming": True, "every": every}
        if doc.get("stream") is False and any(s.conn is conn for s in self._subs):
            self._subs = [s for s in self._subs if s.conn is not conn]
            return {"streaming": False}
        fs = self._frame()
        images = []
        for p in passes:
            img, data = self._encode_pass(fs, p)
            images.append(
                {"pass": p, "format": "pgm" if p == "depth" else "ppm",
                 "width": img.width, "height": img.height,
                 "data_b64": base64.b64encode(data).decode("ascii")}
            )
        return {
            "tick": fs.tick,
            "uav": {"pos": list(fs.uav.pos), "yaw": fs.uav.yaw, "pitch": fs.uav.pitch},
            "boxes": annotation_record(fs.tick, self._boxes())["boxes"],
            "images": images,
        }

    @staticmethod
    def _encode_pass(fs: FrameSet, name: str):
        if name == "rgb":
            return fs.rgb, ppm_bytes(fs.rgb)
        if name == "seg":
            return fs.seg, ppm_bytes(fs.seg)
        return fs.depth, pgm_bytes(fs.depth)

    def _op_StartRecording(self, conn: _Conn, doc: dict) -> dict:
        if self._recording is not None:
            return {"clip_id": self._recording.clip_id, "already_recording": True}
        clip_id = f"rec_{self._clip_counter:04d}"
        self._clip_counter += 1
        directory = Path(self.config.out_dir) / clip_id
        directory.mkdir(parents=True, exist_ok=True)
        self._recording = _Recording(
            clip_id=clip_id, directory=directory, start_tick=self.sim.tick
        )
        return {"clip_id": clip_id}

    def _op_StopRecording(self, conn: _Conn, doc: dict) -> dict:
        if self._recording is None:
            raise _CommandError("not-recording", "no recording in progress")
        info = self._finalize_recording()
        return info

    def _op_LoadScenario(self, conn: _Conn, doc: dict) -> dict:
        try:
            script = ScenarioScript.from_json(json.dumps(doc["script"]))
        except (KeyError, TypeError, ValueError) as e:
            raise _CommandError("bad-args", f"invalid scenario script: {e}")
        self._finalize_recording()
        self._build_sim(script.seed, script=script)
        return {"tick": self.sim.tick, "agents": len(self.sim.agents),
                "label": script_label(script).value}

    # -- recording & streaming helpers ------------------------------------------

    def _record_frame(self) -> None:
        from .render import write_pgm, write_ppm

        rec = self._recording
        assert rec is not None
        fs = self._frame()
        stem = f"{len(rec.stems):05d}"
        write_ppm(fs.rgb, rec.directory / f"frame_{stem}.ppm")
        write_ppm(fs.seg, rec.directory / f"seg_{stem}.ppm")
        write_pgm(fs.depth, rec.directory / f"depth_{stem}.pgm")
        with open(rec.directory / f"ann_{stem}.json", "w") as f:
            json.dump(annotation_record(fs.tick, self._boxes()), f, separators=(",", ":"))
        rec.stems.append(stem)
        if len(rec.stems) >= MAX_CLIP_FRAMES:
            self._finalize_recording()

    def _finalize_recording(self) -> dict | None:
        rec = self._recording
        if rec is None:
            return None
        self._recording = None
        violent = sum(
            len(g.member_ids) for g in self.sim.groups if g.scenario is Scenario.VIOLENT
        )
        label = (
            Scenario.VIOLENT
            if violent >= len(self.sim.agents) - violent
            else Scenario.NON_VIOLENT
        )
        meta = {
            "id": rec.clip_id,
            "label": label.value,
            "frames": list(rec.stems),
            "duration_s": len(rec.stems) / TICK_RATE,
            "seed": self.world.seed,
            "fps": int(TICK_RATE),
            "width": DEFAULT_INTRINSICS.width,
            "height": DEFAULT_INTRINSICS.height,
        }
        with open(rec.directory / "clip.json", "w") as f:
            json.dump(meta, f, separators=(",", ":"))
        info = {"clip_id": rec.clip_id, "frames": len(rec.stems), "label": label.value}
        self._clips.append(info)
        manifest = Path(self.config.out_dir) / "manifest.json"
        with open(manifest, "w") as f:
            json.dump({"clips": self._clips}, f, separators=(",", ":"))
        return info

    def _frame_payload(self, passes: tuple[str, ...]) -> bytes:
        fs = self._frame()
        blobs = []
        entries = []
        for p in passes:
            img, data = self._encode_pass(fs, p)
            blobs.append(data)
            entries.append(
                {"pass": p, "format": "pgm" if p == "depth" else "ppm",
                 "width": img.width, "height": img.height, "size": len(data)}
            )
        header = json.dumps(
            {
                "tick": fs.tick,
                "uav": {"pos": list(fs.uav.pos), "yaw": fs.uav.yaw, "pitch": fs.uav.pitch},
                "boxes": annotation_record(fs.tick, self._boxes())["boxes"],
                "images": entries,
            },
            separators=(",", ":"),
        ).encode("utf-8")
        return len(header).to_bytes(4, "big") + header + b"".join(blobs)


class _CommandError(Exception):
    def __init__(self, code: str, message: str) -> None:
        super().__init__(message)
        self.code = code


def serve(config: ServerConfig) -> SimServer:
    """Start the service; raises OSError when the port cannot be bound."""
    server = SimServer(config)
    server.start()
    return server
